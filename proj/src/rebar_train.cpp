#include "rebar/rebar_train.hpp"

#include <cmath>
#include <sstream>

#include "rebar/autograd.hpp"
#include "rebar/checkpoint.hpp"
#include "rebar/errors.hpp"
#include "rebar/io.hpp"
#include "rebar/log.hpp"
#include "rebar/optim.hpp"

namespace rebar {

void RebarTrainConfig::validate() const {
    std::vector<std::string> bad;
    if (subseq_len < 2) bad.push_back("subseq_len must be >= 2");
    if (extended_mask_len < 1) bad.push_back("extended_mask_len must be >= 1");
    if (extended_mask_len >= subseq_len) bad.push_back("extended_mask_len must be < subseq_len");
    if (batch_size < 1) bad.push_back("batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad.push_back("learning_rate must be finite and >= 0");
    if (max_epochs < 0) bad.push_back("max_epochs must be >= 0");
    if (patience < 1) bad.push_back("patience must be >= 1");
    if (samples_per_epoch < 0) bad.push_back("samples_per_epoch must be >= 0");
    if (val_samples < 0) bad.push_back("val_samples must be >= 0");
    if (!bad.empty()) {
        std::string msg = "invalid training config:";
        for (const auto& b : bad) msg += " " + b + ";";
        throw ConfigError(msg);
    }
}

double reconstruction_loss(std::span<const Matrix> predictions, std::span<const Matrix> targets,
                           std::span<const Mask> masks) {
    if (predictions.size() != targets.size() || targets.size() != masks.size())
        throw SizeError("reconstruction_loss: batch sizes differ");
    if (targets.empty()) throw ValidationError("reconstruction_loss: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const Matrix& p = predictions[i];
        const Matrix& x = targets[i];
        if (p.rows() != x.rows() || p.cols() != x.cols() || masks[i].length() != x.rows())
            throw SizeError("reconstruction_loss: item " + std::to_string(i) + " shapes differ");
        const auto n = masks[i].count();
        if (n == 0) throw ValidationError("reconstruction_loss: item " + std::to_string(i) + " has no masked position");
        double s = 0.0;
        for (Eigen::Index t = 0; t < x.rows(); ++t)
            if (masks[i].flags[static_cast<std::size_t>(t)]) s += (p.row(t) - x.row(t)).squaredNorm();
        total += s / static_cast<double>(n * x.cols());
    }
    return total / static_cast<double>(targets.size());
}

double reconstruction_loss(const RebarModel& model, std::span<const Matrix> xs, std::span<const Mask> masks) {
    if (xs.size() != masks.size()) throw SizeError("reconstruction_loss: batch sizes differ");
    std::vector<Matrix> preds;
    preds.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) preds.push_back(rebar_forward(apply_mask(xs[i], masks[i]), xs[i], model).values);
    return reconstruction_loss(preds, xs, masks);
}

bool receptive_field_matches_mask(const RebarConfig& model, Eigen::Index mask_len) {
    const double rf = model.receptive_field();
    const double target = 3.0 * static_cast<double>(mask_len);
    const bool ok = rf >= 0.5 * target && rf <= 2.0 * target;
    if (!ok && !model.linear_qkv)
        log_warning("receptive field " + std::to_string(model.receptive_field()) + " is far from 3x the mask length " +
                    std::to_string(mask_len));
    return ok;
}

Eigen::Index disjoint_windows(const TimeSeriesDataset& dataset, Split split, Eigen::Index T) {
    if (T < 1) throw SizeError("window length must be positive");
    Eigen::Index n = 0;
    for (const auto* s : dataset.in_split(split)) n += s->length() / T;
    return n;
}

namespace {

struct Sample {
    Matrix x;
    Mask mask;
};

class WindowSampler {
public:
    WindowSampler(std::vector<const TimeSeries*> series, Eigen::Index T) : series_(std::move(series)), T_(T) {
        for (const auto* s : series_) {
            const Eigen::Index n = s->length() >= T ? s->length() - T + 1 : 0;
            total_ += n;
            cumulative_.push_back(total_);
        }
    }

    bool empty() const noexcept { return total_ == 0; }

    Matrix draw(Rng& rng) const {
        std::uniform_int_distribution<Eigen::Index> pick(0, total_ - 1);
        Eigen::Index r = pick(rng);
        std::size_t i = 0;
        while (r >= cumulative_[i]) ++i;
        const Eigen::Index start = r - (i == 0 ? 0 : cumulative_[i - 1]);
        return series_[i]->values.block(start, 0, T_, series_[i]->channels()).cast<double>();
    }

private:
    std::vector<const TimeSeries*> series_;
    Eigen::Index T_;
    Eigen::Index total_ = 0;
    std::vector<Eigen::Index> cumulative_;
};

std::vector<Sample> draw_samples(const WindowSampler& sampler, Eigen::Index count, const RebarTrainConfig& c,
                                 Rng& rng) {
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) {
        Matrix x = sampler.draw(rng);
        Mask m = make_mask(c.mask_kind, c.subseq_len, c.extended_mask_len, rng);
        out.push_back({std::move(x), std::move(m)});
    }
    return out;
}

double evaluate(const RebarModel& model, const std::vector<Sample>& samples) {
    double s = 0.0;
    for (const auto& smp : samples) {
        const Matrix pred = rebar_forward(apply_mask(smp.x, smp.mask), smp.x, model).values;
        double e = 0.0;
        for (Eigen::Index t = 0; t < smp.x.rows(); ++t)
            if (smp.mask.flags[static_cast<std::size_t>(t)]) e += (pred.row(t) - smp.x.row(t)).squaredNorm();
        s += e / static_cast<double>(smp.mask.count() * smp.x.cols());
    }
    return s / static_cast<double>(samples.size());
}

std::string param_norms(const ParameterSet& params) {
    std::ostringstream os;
    for (const auto& p : params) os << "\n  " << p.name << ": " << p.value.norm();
    return os.str();
}

}  // namespace

RebarTrainResult train_rebar(const TimeSeriesDataset& dataset, RebarModel model, const RebarTrainConfig& config,
                             const EpochCallback& on_epoch) {
    config.validate();
    if (model.config().linear_qkv != config.ablation_linear_qkv)
        throw ConfigError("model linear_qkv flag differs from ablation_linear_qkv");
    if (model.config().in_channels != dataset.channels())
        throw ConsistencyError("model expects " + std::to_string(model.config().in_channels) + " channels, dataset has " +
                               std::to_string(dataset.channels()));
    receptive_field_matches_mask(model.config(), config.extended_mask_len);

    const Eigen::Index T = config.subseq_len;
    WindowSampler train_pool(dataset.in_split(Split::train), T);
    WindowSampler val_pool(dataset.in_split(Split::val), T);
    if (train_pool.empty()) throw SizeError("no train series holds a window of length " + std::to_string(T));
    if (val_pool.empty()) throw SizeError("no val series holds a window of length " + std::to_string(T));

    const Eigen::Index n_train =
        config.samples_per_epoch > 0 ? config.samples_per_epoch : 4 * disjoint_windows(dataset, Split::train, T);
    const Eigen::Index n_val = config.val_samples > 0 ? config.val_samples : 4 * disjoint_windows(dataset, Split::val, T);

    Rng val_rng(mix_seed(config.seed, 0x7a1));
    const auto val_set = draw_samples(val_pool, n_val, config, val_rng);

    TrainHistory hist;
    hist.initial_val_loss = evaluate(model, val_set);
    if (!std::isfinite(hist.initial_val_loss)) throw NumericError("initial validation loss is not finite");
    hist.best_val_loss = hist.initial_val_loss;
    ParameterSet best = model.params();

    Adam opt(model.params(), AdamConfig{.learning_rate = config.learning_rate});
    Rng rng(mix_seed(config.seed, 0x7e1));
    int stale = 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto samples = draw_samples(train_pool, n_train, config, rng);
        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t b0 = 0; b0 < samples.size(); b0 += static_cast<std::size_t>(config.batch_size), ++batch_index) {
            const std::size_t b1 = std::min(samples.size(), b0 + static_cast<std::size_t>(config.batch_size));
            const double inv = 1.0 / static_cast<double>(b1 - b0);
            Gradients grads = model.params().zeros_like();
            double batch_loss = 0.0;
            for (std::size_t i = b0; i < b1; ++i) {
                ad::Tape tape;
                auto g = model.forward(tape, apply_mask(samples[i].x, samples[i].mask), samples[i].x);
                ad::Var loss = ad::scale(ad::masked_mse(g.reconstruction, samples[i].x, samples[i].mask.flags), inv);
                batch_loss += loss.scalar();
                tape.backward(loss);
                tape.accumulate(grads);
            }
            if (!std::isfinite(batch_loss))
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + "; parameter norms:" + param_norms(model.params()));
            opt.step(model.params(), grads);
            if (!model.params().all_finite())
                throw NumericError("non-finite parameters after epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + "; parameter norms:" + param_norms(model.params()));
            epoch_loss += batch_loss * static_cast<double>(b1 - b0);
        }
        EpochRecord rec{epoch, epoch_loss / static_cast<double>(samples.size()), evaluate(model, val_set)};
        if (!std::isfinite(rec.val_loss))
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch) +
                               "; parameter norms:" + param_norms(model.params()));
        hist.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (rec.val_loss < hist.best_val_loss) {
            hist.best_val_loss = rec.val_loss;
            hist.best_epoch = epoch;
            best = model.params();
            stale = 0;
        } else if (++stale >= config.patience) {
            log_info("early stop at epoch " + std::to_string(epoch));
            break;
        }
    }
    assign_parameters(model.params(), best, "best checkpoint");
    return {std::move(model), std::move(hist)};
}

void write_loss_csv(const TrainHistory& history, const std::filesystem::path& path) {
    std::string out = "epoch,train_loss,val_loss\n";
    out += "0,," + format_double(history.initial_val_loss) + "\n";
    for (const auto& e : history.epochs)
        out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_loss) + "\n";
    write_text_atomic(path, out);
}

}  // namespace rebar
