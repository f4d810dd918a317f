#include "rebar/autograd.hpp"

#include <cmath>
#include <numbers>

#include "rebar/errors.hpp"

namespace rebar::ad {

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
    const auto& v = value();
    if (v.size() != 1) throw SizeError("scalar() on a non-scalar value");
    return v(0, 0);
}

Var Tape::constant(Matrix value) {
    Node n;
    n.own = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::input(Matrix value) {
    Node n;
    n.own = std::move(value);
    n.needs_grad = record_;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::parameter(const ParameterSet& params, std::size_t index) {
    Node n;
    n.ext = &params[index].value;
    n.param_index = static_cast<int>(index);
    n.needs_grad = record_;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

const Matrix& Tape::value(int id) const { return nodes_[static_cast<std::size_t>(id)].value(); }

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
    Node n;
    n.own = std::move(value);
    if (record_) {
        for (const auto& in : inputs) {
            if (in.tape != this) throw ConsistencyError("Var used with a foreign tape");
            if (needs_grad(in.id)) n.needs_grad = true;
        }
        if (n.needs_grad) n.back = std::move(fn);
    }
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::backward(Var root) {
    const auto& v = value(root.id);
    if (v.size() != 1) throw SizeError("backward() without a seed needs a scalar root");
    backward(root, Matrix::Ones(1, 1));
}

void Tape::backward(Var root, const Matrix& seed) {
    if (!record_) throw ConsistencyError("backward() on a non-recording tape");
    const auto& v = value(root.id);
    if (seed.rows() != v.rows() || seed.cols() != v.cols()) throw SizeError("seed shape differs from root");
    add_grad(root.id, seed);
    for (int i = root.id; i >= 0; --i) {
        auto& n = nodes_[static_cast<std::size_t>(i)];
        if (n.back && n.grad.size() != 0) n.back(*this, n.grad, n.value());
    }
}

const Matrix& Tape::grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }

void Tape::accumulate(Gradients& out) const {
    for (const auto& n : nodes_) {
        if (n.param_index < 0 || n.grad.size() == 0) continue;
        out[static_cast<std::size_t>(n.param_index)] += n.grad;
    }
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw SizeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
}

}  // namespace

Var add(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "add");
    return a.tape->push(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
        t.add_grad(a.id, g);
        t.add_grad(b.id, g);
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "sub");
    return a.tape->push(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
        t.add_grad(a.id, g);
        t.add_grad(b.id, -g);
    });
}

Var scale(Var x, double s) {
    return x.tape->push(x.value() * s, {x}, [x, s](Tape& t, const Matrix& g, const Matrix&) { t.add_grad(x.id, g * s); });
}

Var matmul(Var a, Var b) {
    if (a.cols() != b.rows()) throw SizeError("matmul: inner dimensions differ");
    Matrix out = a.value() * b.value();
    return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
        if (t.needs_grad(a.id)) t.add_grad(a.id, (g * t.value(b.id).transpose()).eval());
        if (t.needs_grad(b.id)) t.add_grad(b.id, (t.value(a.id).transpose() * g).eval());
    });
}

Var matmul_nt(Var a, Var b) {
    if (a.cols() != b.cols()) throw SizeError("matmul_nt: column counts differ");
    Matrix out = a.value() * b.value().transpose();
    return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
        if (t.needs_grad(a.id)) t.add_grad(a.id, (g * t.value(b.id)).eval());
        if (t.needs_grad(b.id)) t.add_grad(b.id, (g.transpose() * t.value(a.id)).eval());
    });
}

Var add_row(Var x, Var row) {
    if (row.rows() != 1 || row.cols() != x.cols()) throw SizeError("add_row: row must be [1 x C]");
    Matrix out = x.value().rowwise() + row.value().row(0);
    return x.tape->push(std::move(out), {x, row}, [x, row](Tape& t, const Matrix& g, const Matrix&) {
        t.add_grad(x.id, g);
        if (t.needs_grad(row.id)) t.add_grad(row.id, Matrix(g.colwise().sum()));
    });
}

Var affine_columns(Var x, const RowVector& col_scale, const RowVector& col_shift) {
    if (col_scale.size() != x.cols() || col_shift.size() != x.cols())
        throw SizeError("affine_columns: factor length differs from column count");
    Matrix out = (x.value().array().rowwise() * col_scale.array()).rowwise() + col_shift.array();
    return x.tape->push(std::move(out), {x}, [x, col_scale](Tape& t, const Matrix& g, const Matrix&) {
        t.add_grad(x.id, Matrix(g.array().rowwise() * col_scale.array()));
    });
}

Var gelu(Var x) {
    const Matrix& v = x.value();
    Matrix out(v.rows(), v.cols());
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double z = v.data()[i];
        out.data()[i] = 0.5 * z * (1.0 + std::erf(z * inv_sqrt2));
    }
    return x.tape->push(std::move(out), {x}, [x, inv_sqrt2](Tape& t, const Matrix& g, const Matrix&) {
        const Matrix& in = t.value(x.id);
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        Matrix d(in.rows(), in.cols());
        for (Eigen::Index i = 0; i < in.size(); ++i) {
            const double z = in.data()[i];
            const double cdf = 0.5 * (1.0 + std::erf(z * inv_sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * z * z);
            d.data()[i] = g.data()[i] * (cdf + z * pdf);
        }
        t.add_grad(x.id, d);
    });
}

Var softmax_rows(Var x) {
    const Matrix& v = x.value();
    Matrix out(v.rows(), v.cols());
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const double m = v.row(r).maxCoeff();
        out.row(r) = (v.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    return x.tape->push(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
        Vector dot = (g.array() * y.array()).rowwise().sum();
        Matrix d = y.array() * (g.array().colwise() - dot.array());
        t.add_grad(x.id, d);
    });
}

Var l2_normalize_rows(Var x) {
    const Matrix& v = x.value();
    Vector norms = v.rowwise().norm();
    for (Eigen::Index r = 0; r < norms.size(); ++r)
        if (!(norms(r) > 0.0)) throw ValidationError("l2_normalize_rows: zero-norm row " + std::to_string(r));
    Matrix out = v.array().colwise() / norms.array();
    return x.tape->push(std::move(out), {x}, [x, norms](Tape& t, const Matrix& g, const Matrix& y) {
        Vector dot = (g.array() * y.array()).rowwise().sum();
        Matrix d = (g - (y.array().colwise() * dot.array()).matrix()).array().colwise() / norms.array();
        t.add_grad(x.id, d);
    });
}

Var zero_rows(Var x, const Valid& valid) {
    if (static_cast<Eigen::Index>(valid.size()) != x.rows()) throw SizeError("zero_rows: mask length differs");
    Matrix out = x.value();
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        if (!valid[static_cast<std::size_t>(r)]) out.row(r).setZero();
    return x.tape->push(std::move(out), {x}, [x, valid](Tape& t, const Matrix& g, const Matrix&) {
        Matrix d = g;
        for (Eigen::Index r = 0; r < d.rows(); ++r)
            if (!valid[static_cast<std::size_t>(r)]) d.row(r).setZero();
        t.add_grad(x.id, d);
    });
}

Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > x.cols()) throw SizeError("slice_cols: out of range");
    Matrix out = x.value().middleCols(start, count);
    return x.tape->push(std::move(out), {x}, [x, start, count](Tape& t, const Matrix& g, const Matrix&) {
        const Matrix& in = t.value(x.id);
        Matrix d = Matrix::Zero(in.rows(), in.cols());
        d.middleCols(start, count) = g;
        t.add_grad(x.id, d);
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw SizeError("concat_cols: no parts");
    const Eigen::Index rows = parts[0].rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw SizeError("concat_cols: row counts differ");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    std::vector<Var> ins(parts.begin(), parts.end());
    return parts[0].tape->push(std::move(out), parts, [ins](Tape& t, const Matrix& g, const Matrix&) {
        Eigen::Index c0 = 0;
        for (const auto& p : ins) {
            const Eigen::Index w = t.value(p.id).cols();
            if (t.needs_grad(p.id)) t.add_grad(p.id, Matrix(g.middleCols(c0, w)));
            c0 += w;
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw SizeError("concat_rows: no parts");
    const Eigen::Index cols = parts[0].cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw SizeError("concat_rows: column counts differ");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    std::vector<Var> ins(parts.begin(), parts.end());
    return parts[0].tape->push(std::move(out), parts, [ins](Tape& t, const Matrix& g, const Matrix&) {
        Eigen::Index r0 = 0;
        for (const auto& p : ins) {
            const Eigen::Index h = t.value(p.id).rows();
            if (t.needs_grad(p.id)) t.add_grad(p.id, Matrix(g.middleRows(r0, h)));
            r0 += h;
        }
    });
}

Var max_rows(Var x) {
    const Matrix& v = x.value();
    if (v.rows() == 0) throw SizeError("max_rows: empty input");
    Matrix out(1, v.cols());
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(v.cols()));
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
        Eigen::Index best = 0;
        for (Eigen::Index r = 1; r < v.rows(); ++r)
            if (v(r, c) > v(best, c)) best = r;
        arg[static_cast<std::size_t>(c)] = best;
        out(0, c) = v(best, c);
    }
    return x.tape->push(std::move(out), {x}, [x, arg](Tape& t, const Matrix& g, const Matrix&) {
        const Matrix& in = t.value(x.id);
        Matrix d = Matrix::Zero(in.rows(), in.cols());
        for (Eigen::Index c = 0; c < in.cols(); ++c) d(arg[static_cast<std::size_t>(c)], c) = g(0, c);
        t.add_grad(x.id, d);
    });
}

Var sum_scalars(std::span<const Var> parts) {
    if (parts.empty()) throw SizeError("sum_scalars: no parts");
    double s = 0.0;
    for (const auto& p : parts) s += p.scalar();
    std::vector<Var> ins(parts.begin(), parts.end());
    return parts[0].tape->push(Matrix::Constant(1, 1, s), parts, [ins](Tape& t, const Matrix& g, const Matrix&) {
        for (const auto& p : ins) t.add_grad(p.id, g);
    });
}

Var instance_norm(Var x, const Valid& valid, double eps) {
    const Matrix& v = x.value();
    if (static_cast<Eigen::Index>(valid.size()) != v.rows()) throw SizeError("instance_norm: mask length differs");
    Eigen::Index n = 0;
    for (auto f : valid) n += f ? 1 : 0;
    Matrix out = Matrix::Zero(v.rows(), v.cols());
    RowVector inv_std = RowVector::Zero(v.cols());
    if (n > 0) {
        RowVector mean = RowVector::Zero(v.cols());
        for (Eigen::Index r = 0; r < v.rows(); ++r)
            if (valid[static_cast<std::size_t>(r)]) mean += v.row(r);
        mean /= static_cast<double>(n);
        RowVector var = RowVector::Zero(v.cols());
        for (Eigen::Index r = 0; r < v.rows(); ++r)
            if (valid[static_cast<std::size_t>(r)]) var += (v.row(r) - mean).array().square().matrix();
        var /= static_cast<double>(n);
        inv_std = (var.array() + eps).rsqrt().matrix();
        for (Eigen::Index r = 0; r < v.rows(); ++r)
            if (valid[static_cast<std::size_t>(r)]) out.row(r) = ((v.row(r) - mean).array() * inv_std.array()).matrix();
    }
    return x.tape->push(std::move(out), {x}, [x, valid, inv_std, n](Tape& t, const Matrix& g, const Matrix& y) {
        const Matrix& in = t.value(x.id);
        Matrix d = Matrix::Zero(in.rows(), in.cols());
        if (n > 0) {
            RowVector mean_g = RowVector::Zero(in.cols());
            RowVector mean_gy = RowVector::Zero(in.cols());
            for (Eigen::Index r = 0; r < in.rows(); ++r) {
                if (!valid[static_cast<std::size_t>(r)]) continue;
                mean_g += g.row(r);
                mean_gy += (g.row(r).array() * y.row(r).array()).matrix();
            }
            mean_g /= static_cast<double>(n);
            mean_gy /= static_cast<double>(n);
            for (Eigen::Index r = 0; r < in.rows(); ++r) {
                if (!valid[static_cast<std::size_t>(r)]) continue;
                d.row(r) = ((g.row(r) - mean_g).array() - y.row(r).array() * mean_gy.array()) * inv_std.array();
            }
        }
        t.add_grad(x.id, d);
    });
}

namespace {

struct ConvPlan {
    // source row for output t, tap j: src[t*kernel + j], -1 when skipped
    std::vector<Eigen::Index> src;
    std::vector<double> row_scale;
    Valid out_valid;
};

ConvPlan plan_conv(const Valid& valid, int kernel, int dilation, bool partial) {
    const auto T = static_cast<Eigen::Index>(valid.size());
    ConvPlan p;
    p.src.assign(static_cast<std::size_t>(T * kernel), -1);
    p.row_scale.assign(static_cast<std::size_t>(T), 1.0);
    p.out_valid.assign(static_cast<std::size_t>(T), 1);
    const int half = (kernel - 1) / 2;
    for (Eigen::Index t = 0; t < T; ++t) {
        int taps = 0;
        for (int j = 0; j < kernel; ++j) {
            const Eigen::Index s = t + static_cast<Eigen::Index>(j - half) * dilation;
            if (s < 0 || s >= T || !valid[static_cast<std::size_t>(s)]) continue;
            p.src[static_cast<std::size_t>(t * kernel + j)] = s;
            ++taps;
        }
        if (partial) {
            if (taps == 0) {
                p.row_scale[static_cast<std::size_t>(t)] = 0.0;
                p.out_valid[static_cast<std::size_t>(t)] = 0;
            } else {
                p.row_scale[static_cast<std::size_t>(t)] = static_cast<double>(kernel) / taps;
            }
        }
    }
    return p;
}

}  // namespace

Valid conv_output_valid(const Valid& valid, int kernel, int dilation) {
    return plan_conv(valid, kernel, dilation, true).out_valid;
}

ConvResult conv1d(Var x, const Valid& valid, Var weight, Var bias, int kernel, int dilation, bool partial) {
    if (kernel < 1 || kernel % 2 == 0) throw SizeError("conv1d: kernel must be odd and positive");
    if (dilation < 1) throw SizeError("conv1d: dilation must be positive");
    const Matrix& in = x.value();
    const Eigen::Index T = in.rows();
    const Eigen::Index cin = in.cols();
    if (static_cast<Eigen::Index>(valid.size()) != T) throw SizeError("conv1d: mask length differs");
    if (weight.rows() != kernel * cin) throw SizeError("conv1d: weight rows must equal kernel*C_in");
    const Eigen::Index cout = weight.cols();
    if (bias.rows() != 1 || bias.cols() != cout) throw SizeError("conv1d: bias must be [1 x C_out]");

    ConvPlan plan = plan_conv(valid, kernel, dilation, partial);

    Matrix cols = Matrix::Zero(T, kernel * cin);
    for (Eigen::Index t = 0; t < T; ++t)
        for (int j = 0; j < kernel; ++j) {
            const Eigen::Index s = plan.src[static_cast<std::size_t>(t * kernel + j)];
            if (s >= 0) cols.row(t).segment(j * cin, cin) = in.row(s);
        }

    Matrix out = cols * weight.value();
    for (Eigen::Index t = 0; t < T; ++t) {
        const double sc = plan.row_scale[static_cast<std::size_t>(t)];
        if (sc == 0.0)
            out.row(t).setZero();
        else
            out.row(t) = out.row(t) * sc + bias.value().row(0);
    }

    Valid out_valid = plan.out_valid;
    Var y = x.tape->push(std::move(out), {x, weight, bias},
                         [x, weight, bias, kernel, cin, plan = std::move(plan),
                          cols = std::move(cols)](Tape& t, const Matrix& g, const Matrix&) {
                             const Eigen::Index rows = g.rows();
                             Matrix gs = g;
                             for (Eigen::Index r = 0; r < rows; ++r) gs.row(r) *= plan.row_scale[static_cast<std::size_t>(r)];
                             if (t.needs_grad(weight.id)) t.add_grad(weight.id, (cols.transpose() * gs).eval());
                             if (t.needs_grad(bias.id)) {
                                 RowVector db = RowVector::Zero(g.cols());
                                 for (Eigen::Index r = 0; r < rows; ++r)
                                     if (plan.row_scale[static_cast<std::size_t>(r)] != 0.0) db += g.row(r);
                                 t.add_grad(bias.id, Matrix(db));
                             }
                             if (t.needs_grad(x.id)) {
                                 Matrix dcols = gs * t.value(weight.id).transpose();
                                 Matrix dx = Matrix::Zero(rows, cin);
                                 for (Eigen::Index r = 0; r < rows; ++r)
                                     for (int j = 0; j < kernel; ++j) {
                                         const Eigen::Index s = plan.src[static_cast<std::size_t>(r * kernel + j)];
                                         if (s >= 0) dx.row(s) += dcols.row(r).segment(j * cin, cin);
                                     }
                                 t.add_grad(x.id, dx);
                             }
                         });
    return {y, std::move(out_valid)};
}

Var masked_mse(Var pred, const Matrix& target, const Valid& include) {
    const Matrix& p = pred.value();
    require_same_shape(p, target, "masked_mse");
    if (static_cast<Eigen::Index>(include.size()) != p.rows()) throw SizeError("masked_mse: mask length differs");
    Eigen::Index n_rows = 0;
    double s = 0.0;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        if (!include[static_cast<std::size_t>(r)]) continue;
        ++n_rows;
        s += (p.row(r) - target.row(r)).squaredNorm();
    }
    if (n_rows == 0) throw ValidationError("masked_mse: no included positions");
    const double denom = static_cast<double>(n_rows * p.cols());
    return pred.tape->push(Matrix::Constant(1, 1, s / denom), {pred},
                           [pred, target, include, denom](Tape& t, const Matrix& g, const Matrix&) {
                               const Matrix& pv = t.value(pred.id);
                               Matrix d = Matrix::Zero(pv.rows(), pv.cols());
                               const double k = 2.0 * g(0, 0) / denom;
                               for (Eigen::Index r = 0; r < pv.rows(); ++r)
                                   if (include[static_cast<std::size_t>(r)]) d.row(r) = k * (pv.row(r) - target.row(r));
                               t.add_grad(pred.id, d);
                           });
}

Var cross_entropy_first(Var logits) {
    const Matrix& z = logits.value();
    if (z.rows() != 1 || z.cols() < 1) throw SizeError("cross_entropy_first: expects a [1 x n] row");
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    return logits.tape->push(Matrix::Constant(1, 1, lse - z(0, 0)), {logits},
                             [logits, lse](Tape& t, const Matrix& g, const Matrix&) {
                                 Matrix d = (t.value(logits.id).array() - lse).exp();
                                 d(0, 0) -= 1.0;
                                 t.add_grad(logits.id, Matrix(d * g(0, 0)));
                             });
}

}  // namespace rebar::ad
