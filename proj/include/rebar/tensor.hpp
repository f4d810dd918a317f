#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace rebar {

/// Time-major activations: rows are timesteps, columns are channels.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Per-timestep observation flags used inside the networks (1 = observed).
using Valid = std::vector<std::uint8_t>;

using Rng = std::mt19937_64;

/// splitmix64 finalizer; derives independent stream seeds from a base seed.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) noexcept;

struct Parameter {
    std::string name;
    Matrix value;
};

/// Ordered, named parameter tensors. Order is the checkpoint order and the
/// gradient layout.
class ParameterSet {
public:
    std::size_t add(std::string name, Matrix init);

    std::size_t size() const noexcept { return params_.size(); }
    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    std::optional<std::size_t> find(std::string_view name) const;

    std::vector<Matrix> zeros_like() const;
    std::size_t scalar_count() const;
    double l2_norm() const;
    bool all_finite() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Parameter> params_;
};

using Gradients = std::vector<Matrix>;

void add_into(Gradients& acc, const Gradients& g);

/// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Matrix fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng);

}  // namespace rebar
