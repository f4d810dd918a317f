#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rebar/autograd.hpp"
#include "rebar/data.hpp"
#include "rebar/tensor.hpp"

namespace testing {

using rebar::Matrix;

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

/// Relative error ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double rel_error(const Matrix& a, const Matrix& b) {
    const double d = (a - b).norm();
    const double s = std::max(a.norm(), b.norm());
    return s < 1e-300 ? d : d / s;
}

/// Central differences of f with respect to every entry of x.
inline Matrix numeric_grad(const std::function<double(const Matrix&)>& f, Matrix x, double h = 1e-6) {
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = x.data()[i];
        x.data()[i] = keep + h;
        const double up = f(x);
        x.data()[i] = keep - h;
        const double down = f(x);
        x.data()[i] = keep;
        g.data()[i] = (up - down) / (2 * h);
    }
    return g;
}

using Graph = std::function<rebar::ad::Var(rebar::ad::Tape&, const std::vector<rebar::ad::Var>&)>;

/// Largest relative error between tape and finite-difference gradients of
/// sum(graph(inputs) .* weights) over all inputs.
inline double check_graph(const Graph& graph, const std::vector<Matrix>& inputs, std::uint64_t seed = 7) {
    using namespace rebar;
    Matrix weights;
    auto scalar = [&](ad::Tape& tape, const std::vector<ad::Var>& vars) {
        ad::Var out = graph(tape, vars);
        if (weights.size() == 0) weights = random_matrix(out.rows(), out.cols(), seed);
        const double v = (out.value().array() * weights.array()).sum();
        return std::make_pair(out, v);
    };
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& m : inputs) vars.push_back(tape.input(m));
    auto [out, value] = scalar(tape, vars);
    (void)value;
    tape.backward(out, weights);
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Matrix analytic = tape.grad(vars[k]);
        if (analytic.size() == 0) analytic = Matrix::Zero(inputs[k].rows(), inputs[k].cols());
        auto f = [&](const Matrix& xk) {
            ad::Tape t(false);
            std::vector<ad::Var> vs;
            for (std::size_t j = 0; j < inputs.size(); ++j) vs.push_back(t.constant(j == k ? xk : inputs[j]));
            return scalar(t, vs).second;
        };
        worst = std::max(worst, rel_error(analytic, numeric_grad(f, inputs[k])));
    }
    return worst;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("rebar_test_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

/// Series with explicit per-timestep labels and values = row index.
inline rebar::TimeSeries labeled_series(const std::string& id, const std::vector<std::int32_t>& labels,
                                        Eigen::Index D = 1) {
    rebar::TimeSeries s;
    s.series_id = id;
    s.labels = labels;
    s.values.resize(static_cast<Eigen::Index>(labels.size()), D);
    for (Eigen::Index t = 0; t < s.values.rows(); ++t)
        for (Eigen::Index d = 0; d < D; ++d) s.values(t, d) = static_cast<float>(t + 0.5 * d);
    return s;
}

}  // namespace testing
