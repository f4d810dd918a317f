#include "rebar/tensor.hpp"

#include <cmath>

#include "rebar/errors.hpp"

namespace rebar {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::format: return "format";
        case ErrorKind::consistency: return "consistency";
        case ErrorKind::validation: return "validation";
        case ErrorKind::size: return "size";
        case ErrorKind::not_found: return "not_found";
        case ErrorKind::config: return "config";
        case ErrorKind::io: return "io";
        case ErrorKind::missing_artifact: return "missing_artifact";
        case ErrorKind::numeric: return "numeric";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) noexcept {
    std::uint64_t z = base ^ (stream + 0x9e3779b97f4a7c15ULL + (base << 6) + (base >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::size_t ParameterSet::add(std::string name, Matrix init) {
    if (find(name)) throw ConsistencyError("duplicate parameter name '" + name + "'");
    params_.push_back({std::move(name), std::move(init)});
    return params_.size() - 1;
}

std::optional<std::size_t> ParameterSet::find(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return i;
    return std::nullopt;
}

std::vector<Matrix> ParameterSet::zeros_like() const {
    std::vector<Matrix> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    return out;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

double ParameterSet::l2_norm() const {
    double s = 0.0;
    for (const auto& p : params_) s += p.value.squaredNorm();
    return std::sqrt(s);
}

bool ParameterSet::all_finite() const {
    for (const auto& p : params_)
        if (!p.value.allFinite()) return false;
    return true;
}

void add_into(Gradients& acc, const Gradients& g) {
    if (acc.size() != g.size()) throw SizeError("gradient layouts differ");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

Matrix fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

}  // namespace rebar
