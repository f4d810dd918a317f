#pragma once

// Reverse-mode differentiation over time-major matrices.
//
// A Tape records every op applied to its Vars. Ops on a non-recording tape
// only compute values. After backward(), parameter gradients are collected
// with accumulate(), input gradients with grad().

#include <functional>
#include <span>
#include <vector>

#include "rebar/tensor.hpp"

namespace rebar::ad {

class Tape;

struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double scalar() const;
};

class Tape {
public:
    /// Receives the output gradient and the output value.
    using BackwardFn = std::function<void(Tape&, const Matrix& out_grad, const Matrix& out)>;

    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return record_; }

    Var constant(Matrix value);
    /// Leaf whose gradient is readable through grad() after backward().
    Var input(Matrix value);
    /// Leaf bound to params[index]; the matrix is referenced, not copied.
    Var parameter(const ParameterSet& params, std::size_t index);

    void backward(Var root);
    void backward(Var root, const Matrix& seed);

    /// Gradient of a leaf or op output; empty matrix when nothing flowed.
    const Matrix& grad(Var v) const;
    /// Adds the gradient of every parameter leaf into out[param_index].
    void accumulate(Gradients& out) const;

    const Matrix& value(int id) const;
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Records an op output. `fn` is dropped when no input needs a gradient.
    Var push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var push(Matrix value, std::span<const Var> inputs, BackwardFn fn);

    template <typename Expr>
    void add_grad(int id, const Expr& g) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad) return;
        if (n.grad.size() == 0)
            n.grad = g;
        else
            n.grad += g;
    }

private:
    struct Node {
        Matrix own;
        const Matrix* ext = nullptr;
        Matrix grad;
        BackwardFn back;
        int param_index = -1;
        bool needs_grad = false;
        const Matrix& value() const { return ext ? *ext : own; }
    };

    bool record_;
    std::vector<Node> nodes_;
};

// Elementwise and linear algebra.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var x, double s);
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
/// Adds a [1 x C] row to every row of x.
Var add_row(Var x, Var row);
/// y = x * diag(col_scale) + col_shift, with constant per-column factors.
Var affine_columns(Var x, const RowVector& col_scale, const RowVector& col_shift);
Var gelu(Var x);
Var softmax_rows(Var x);
Var l2_normalize_rows(Var x);
/// Rows with valid[t] == 0 are set to zero.
Var zero_rows(Var x, const Valid& valid);
Var slice_cols(Var x, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Column-wise max over rows, [T x C] -> [1 x C].
Var max_rows(Var x);
Var sum_scalars(std::span<const Var> parts);

/// Per-column normalization over rows flagged valid; invalid rows output 0.
Var instance_norm(Var x, const Valid& valid, double eps);

struct ConvResult {
    Var out;
    Valid valid;
};

/// Centered 1-D convolution along time. `weight` is [kernel*C_in x C_out]
/// with tap-major rows, `bias` is [1 x C_out]. Taps falling outside the
/// sequence or on an invalid timestep are skipped. With `partial`, each
/// output is rescaled by kernel/valid_taps and positions with no valid tap
/// become 0 and invalid; without it, skipped taps act as zero padding.
ConvResult conv1d(Var x, const Valid& valid, Var weight, Var bias, int kernel, int dilation,
                  bool partial);

/// Output validity of a partial convolution, without evaluating it.
Valid conv_output_valid(const Valid& valid, int kernel, int dilation);

/// Mean squared error over rows with include[t] != 0, averaged over the
/// included entries. Scalar output.
Var masked_mse(Var pred, const Matrix& target, const Valid& include);

/// Cross-entropy of a [1 x n] logit row against class 0.
Var cross_entropy_first(Var logits);

}  // namespace rebar::ad
