#include "rebar/optim.hpp"

#include <cmath>

#include "rebar/errors.hpp"

namespace rebar {

Adam::Adam(const ParameterSet& params, AdamConfig config)
    : config_(config), m_(params.zeros_like()), v_(params.zeros_like()) {
    if (!(config_.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
}

void Adam::step(ParameterSet& params, const Gradients& grads) {
    if (grads.size() != params.size()) throw SizeError("gradient count differs from parameter count");
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& g = grads[i];
        if (g.size() == 0) continue;
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
        if (config_.learning_rate == 0.0) continue;
        params[i].value.array() -=
            config_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
    }
}

}  // namespace rebar
