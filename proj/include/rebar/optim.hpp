#pragma once

#include "rebar/tensor.hpp"

namespace rebar {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(const ParameterSet& params, AdamConfig config);

    /// One bias-corrected update of `params` from `grads` (same layout).
    void step(ParameterSet& params, const Gradients& grads);
    long steps() const noexcept { return t_; }

private:
    AdamConfig config_;
    Gradients m_, v_;
    long t_ = 0;
};

}  // namespace rebar
