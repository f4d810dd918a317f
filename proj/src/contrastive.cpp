#include "rebar/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "rebar/checkpoint.hpp"
#include "rebar/errors.hpp"
#include "rebar/io.hpp"
#include "rebar/log.hpp"
#include "rebar/masking.hpp"
#include "rebar/optim.hpp"

namespace rebar {

using nlohmann::json;

namespace {
constexpr const char* kEncoderKind = "encoder";

[[noreturn]] void throw_config(const std::string& what, const std::vector<std::string>& bad) {
    std::string msg = "invalid " + what + ":";
    for (const auto& b : bad) msg += " " + b + ";";
    throw ConfigError(msg);
}
}  // namespace

void EncoderConfig::validate() const {
    std::vector<std::string> bad;
    if (in_channels < 1) bad.push_back("in_channels must be >= 1");
    if (hidden_channels < 1) bad.push_back("hidden_channels must be >= 1");
    if (num_blocks < 0 || num_blocks > 20) bad.push_back("num_blocks must lie in [0, 20]");
    if (kernel < 1 || kernel % 2 == 0) bad.push_back("kernel must be odd and positive");
    if (embed_dim < 1) bad.push_back("embed_dim must be > 0");
    if (!bad.empty()) throw_config("encoder config", bad);
}

void to_json(json& j, const EncoderConfig& c) {
    j = json{{"in_channels", c.in_channels}, {"hidden_channels", c.hidden_channels}, {"num_blocks", c.num_blocks},
             {"kernel", c.kernel},           {"embed_dim", c.embed_dim},             {"seed", c.seed}};
}

void from_json(const json& j, EncoderConfig& c) {
    j.at("in_channels").get_to(c.in_channels);
    j.at("hidden_channels").get_to(c.hidden_channels);
    j.at("num_blocks").get_to(c.num_blocks);
    j.at("kernel").get_to(c.kernel);
    j.at("embed_dim").get_to(c.embed_dim);
    j.at("seed").get_to(c.seed);
}

Encoder::Encoder(EncoderConfig config) : config_(std::move(config)) {
    config_.validate();
    Rng rng(mix_seed(config_.seed, 0xe4c));
    const auto D = config_.in_channels;
    const auto H = config_.hidden_channels;
    const auto K = config_.kernel;
    in_w_ = params_.add("input.weight", fan_in_uniform(D, H, D, rng));
    in_b_ = params_.add("input.bias", Matrix::Zero(1, H));
    for (int b = 0; b < config_.num_blocks; ++b) {
        const std::string p = "block" + std::to_string(b);
        BlockIds ids{};
        ids.w1 = params_.add(p + ".conv1.weight", fan_in_uniform(K * H, H, K * H, rng));
        ids.b1 = params_.add(p + ".conv1.bias", Matrix::Zero(1, H));
        ids.w2 = params_.add(p + ".conv2.weight", fan_in_uniform(K * H, H, K * H, rng));
        ids.b2 = params_.add(p + ".conv2.bias", Matrix::Zero(1, H));
        blocks_.push_back(ids);
    }
    out_w_ = params_.add("output.weight", fan_in_uniform(H, config_.embed_dim, H, rng));
    out_b_ = params_.add("output.bias", Matrix::Zero(1, config_.embed_dim));
}

ad::Var Encoder::features(ad::Tape& tape, const Matrix& x) const {
    if (x.cols() != config_.in_channels)
        throw SizeError("encoder expects " + std::to_string(config_.in_channels) + " channels, got " +
                        std::to_string(x.cols()));
    if (x.rows() < 1) throw SizeError("encoder input is empty");
    if (!x.allFinite()) throw ValidationError("encoder input has non-finite values");
    const Valid all(static_cast<std::size_t>(x.rows()), 1);
    ad::Var h = ad::add_row(ad::matmul(tape.constant(x), param(tape, in_w_)), param(tape, in_b_));
    int dilation = 1;
    for (const auto& b : blocks_) {
        auto c1 = ad::conv1d(ad::gelu(h), all, param(tape, b.w1), param(tape, b.b1), config_.kernel, dilation, false);
        auto c2 = ad::conv1d(ad::gelu(c1.out), all, param(tape, b.w2), param(tape, b.b2), config_.kernel, dilation, false);
        h = ad::add(h, c2.out);
        dilation *= 2;
    }
    return ad::add_row(ad::matmul(h, param(tape, out_w_)), param(tape, out_b_));
}

ad::Var Encoder::forward(ad::Tape& tape, const Matrix& x) const { return ad::max_rows(features(tape, x)); }

RowVector encode(const Matrix& x, const Encoder& encoder) {
    ad::Tape tape(false);
    return encoder.forward(tape, x).value();
}

RowVector encode(const Subsequence& x, const Encoder& encoder) { return encode(x.values, encoder); }

Matrix encode_all(std::span<const Subsequence> xs, const Encoder& encoder) {
    Matrix out(static_cast<Eigen::Index>(xs.size()), encoder.config().embed_dim);
    for (std::size_t i = 0; i < xs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = encode(xs[i], encoder);
    return out;
}

void save_encoder(const Encoder& encoder, const std::filesystem::path& path) {
    write_checkpoint(path, kEncoderKind, json(encoder.config()).dump(), encoder.params());
}

Encoder load_encoder(const std::filesystem::path& path) {
    Checkpoint ck = read_checkpoint(path);
    if (ck.kind != kEncoderKind)
        throw FormatError(path.string() + " holds a '" + ck.kind + "' checkpoint, expected '" + kEncoderKind + "'");
    EncoderConfig cfg;
    try {
        cfg = json::parse(ck.config_json).get<EncoderConfig>();
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": bad config header: " + e.what());
    }
    Encoder enc(cfg);
    assign_parameters(enc.params(), ck.params, path.string());
    return enc;
}

Eigen::Index ContrastConfig::mask_count() const {
    const auto n = static_cast<Eigen::Index>(std::llround(transient_mask_fraction * static_cast<double>(subseq_len)));
    return std::clamp<Eigen::Index>(n, 1, subseq_len);
}

void ContrastConfig::validate() const {
    std::vector<std::string> bad;
    if (n_cand < 1) bad.push_back("n_cand must be >= 1");
    if (!(tau > 0.0) || !std::isfinite(tau)) bad.push_back("tau must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) bad.push_back("alpha must lie in [0, 1]");
    if (batch_size < 1) bad.push_back("batch_size must be >= 1");
    if (alpha > 0.0 && batch_size == 1) bad.push_back("alpha > 0 needs batch_size > 1 for between-series negatives");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad.push_back("learning_rate must be finite and >= 0");
    if (max_epochs < 0) bad.push_back("max_epochs must be >= 0");
    if (!(transient_mask_fraction > 0.0 && transient_mask_fraction <= 1.0))
        bad.push_back("transient_mask_fraction must lie in (0, 1]");
    if (subseq_len < 2) bad.push_back("subseq_len must be >= 2");
    if (anchors_per_series < 1) bad.push_back("anchors_per_series must be >= 1");
    if (!bad.empty()) throw_config("contrastive config", bad);
}

PairLabeling label_from_distances(std::span<const double> d) {
    if (d.empty()) throw ValidationError("label_candidates: empty candidate list");
    PairLabeling out;
    for (std::size_t i = 1; i < d.size(); ++i)
        if (d[i] < d[static_cast<std::size_t>(out.positive_index)]) out.positive_index = static_cast<int>(i);
    for (std::size_t i = 0; i < d.size(); ++i)
        if (static_cast<int>(i) != out.positive_index) out.within_negative_indices.push_back(static_cast<int>(i));
    return out;
}

PairLabeling label_candidates(const Subsequence& anchor, std::span<const Subsequence> candidates,
                              const DistanceMeasure& measure, const Mask& mask) {
    if (candidates.empty()) throw ValidationError("label_candidates: empty candidate list");
    const auto d = measure.distances(anchor, candidates, mask);
    return label_from_distances(d);
}

PairLabeling label_candidates(const Subsequence& anchor, std::span<const Subsequence> candidates,
                              const RebarModel& model, const Mask& mask) {
    return label_candidates(anchor, candidates, RebarMeasure(model), mask);
}

ad::Var nt_xent(ad::Var anchor, ad::Var positive, std::span<const ad::Var> negatives, double tau) {
    if (!(tau > 0.0)) throw ValidationError("tau must be positive");
    if (negatives.empty()) throw ValidationError("nt_xent: empty negative set");
    std::vector<ad::Var> rows;
    rows.reserve(negatives.size() + 1);
    rows.push_back(positive);
    rows.insert(rows.end(), negatives.begin(), negatives.end());
    for (const auto& r : rows)
        if (r.cols() != anchor.cols()) throw SizeError("nt_xent: embedding dimensions differ");
    ad::Var a = ad::l2_normalize_rows(anchor);
    ad::Var others = ad::l2_normalize_rows(ad::concat_rows(rows));
    return ad::cross_entropy_first(ad::scale(ad::matmul_nt(a, others), 1.0 / tau));
}

namespace {
double nt_xent_value(const RowVector& anchor, const RowVector& positive, std::span<const RowVector> negatives,
                     double tau) {
    ad::Tape tape(false);
    std::vector<ad::Var> negs;
    for (const auto& n : negatives) negs.push_back(tape.constant(n));
    return nt_xent(tape.constant(anchor), tape.constant(positive), negs, tau).scalar();
}
}  // namespace

double nt_xent_within(const RowVector& anchor, const RowVector& positive, std::span<const RowVector> within_negatives,
                      double tau) {
    return nt_xent_value(anchor, positive, within_negatives, tau);
}

double nt_xent_between(const RowVector& anchor, const RowVector& positive, std::span<const RowVector> other_anchors,
                       double tau) {
    return nt_xent_value(anchor, positive, other_anchors, tau);
}

double combined_loss(double within, double between, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
    if (alpha == 0.0) return within;
    if (alpha == 1.0) return between;
    return alpha * between + (1.0 - alpha) * within;
}

namespace {

struct Item {
    const TimeSeries* series;
    AnchorAndCandidates sample;
    PairLabeling labels;
};

/// Series-distinct batches; for alpha > 0 a trailing single-series batch is
/// merged into the previous one.
std::vector<std::vector<const TimeSeries*>> make_batches(const std::vector<const TimeSeries*>& pool,
                                                         const ContrastConfig& c, Rng& rng) {
    std::vector<std::vector<const TimeSeries*>> batches;
    for (int r = 0; r < c.anchors_per_series; ++r) {
        auto order = pool;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(c.batch_size)) {
            const auto end = std::min(order.size(), i + static_cast<std::size_t>(c.batch_size));
            std::vector<const TimeSeries*> b(order.begin() + static_cast<std::ptrdiff_t>(i),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
            if (c.alpha > 0.0 && b.size() == 1 && i > 0) {
                batches.back().push_back(b.front());
                continue;
            }
            batches.push_back(std::move(b));
        }
    }
    return batches;
}

}  // namespace

ContrastResult train_contrastive(const TimeSeriesDataset& dataset, const DistanceMeasure& measure, Encoder encoder,
                                 const ContrastConfig& config, const ContrastEpochCallback& on_epoch) {
    config.validate();
    if (encoder.config().in_channels != dataset.channels())
        throw ConsistencyError("encoder expects " + std::to_string(encoder.config().in_channels) +
                               " channels, dataset has " + std::to_string(dataset.channels()));
    const Eigen::Index T = config.subseq_len;
    std::vector<const TimeSeries*> pool;
    for (const auto* s : dataset.in_split(Split::train))
        if (s->length() - T + 1 >= config.n_cand + 1)
            pool.push_back(s);
        else
            log_warning("series " + s->series_id + " is too short for an anchor and " + std::to_string(config.n_cand) +
                        " candidates; skipped");
    if (pool.empty()) throw SizeError("no train series can supply an anchor and its candidates");
    if (config.alpha > 0.0 && pool.size() < 2)
        throw ConfigError("alpha > 0 needs at least two train series for between-series negatives");

    const double alpha = config.alpha;
    const bool need_within = alpha < 1.0;
    const bool need_between = alpha > 0.0;
    const Eigen::Index mask_n = config.mask_count();

    Adam opt(encoder.params(), AdamConfig{.learning_rate = config.learning_rate});
    Rng rng(mix_seed(config.seed, 0xc0e));
    ContrastHistory hist;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto batches = make_batches(pool, config, rng);
        double sum_loss = 0.0, sum_w = 0.0, sum_b = 0.0;
        std::size_t n_items = 0, n_lab = 0, n_same = 0;

        for (const auto& batch : batches) {
            std::vector<Item> items;
            items.reserve(batch.size());
            for (const auto* s : batch) {
                Item it{s, sample_anchor_and_candidates(*s, T, config.n_cand, rng), {}};
                const Mask mask = make_transient_mask(T, mask_n, rng);
                it.labels = label_candidates(it.sample.anchor, it.sample.candidates, measure, mask);
                const auto& pos = it.sample.candidates[static_cast<std::size_t>(it.labels.positive_index)];
                if (it.sample.anchor.label != kUnlabeled && pos.label != kUnlabeled) {
                    ++n_lab;
                    if (pos.label == it.sample.anchor.label) ++n_same;
                }
                items.push_back(std::move(it));
            }

            // Embeddings without a tape; the loss tape sees them as inputs.
            struct Slot {
                const Matrix* x;
                ad::Var var;
            };
            ad::Tape loss_tape;
            std::vector<Slot> slots;
            std::vector<int> anchor_slot(items.size());
            std::vector<std::vector<int>> cand_slot(items.size());
            auto add_slot = [&](const Matrix& x) {
                slots.push_back({&x, loss_tape.input(encode(x, encoder))});
                return static_cast<int>(slots.size() - 1);
            };
            for (std::size_t i = 0; i < items.size(); ++i) {
                anchor_slot[i] = add_slot(items[i].sample.anchor.values);
                cand_slot[i].assign(items[i].sample.candidates.size(), -1);
                const int p = items[i].labels.positive_index;
                cand_slot[i][static_cast<std::size_t>(p)] = add_slot(items[i].sample.candidates[static_cast<std::size_t>(p)].values);
                if (need_within)
                    for (int j : items[i].labels.within_negative_indices)
                        cand_slot[i][static_cast<std::size_t>(j)] =
                            add_slot(items[i].sample.candidates[static_cast<std::size_t>(j)].values);
            }

            std::vector<ad::Var> terms;
            const double inv = 1.0 / static_cast<double>(items.size());
            for (std::size_t i = 0; i < items.size(); ++i) {
                ad::Var a = slots[static_cast<std::size_t>(anchor_slot[i])].var;
                ad::Var p = slots[static_cast<std::size_t>(cand_slot[i][static_cast<std::size_t>(items[i].labels.positive_index)])].var;
                if (need_within) {
                    std::vector<ad::Var> negs;
                    for (int j : items[i].labels.within_negative_indices)
                        negs.push_back(slots[static_cast<std::size_t>(cand_slot[i][static_cast<std::size_t>(j)])].var);
                    if (negs.empty()) throw ValidationError("within-series loss needs n_cand >= 2");
                    ad::Var lw = nt_xent(a, p, negs, config.tau);
                    sum_w += lw.scalar();
                    terms.push_back(ad::scale(lw, (1.0 - alpha) * inv));
                }
                if (need_between) {
                    std::vector<ad::Var> negs;
                    for (std::size_t k = 0; k < items.size(); ++k)
                        if (items[k].series != items[i].series)
                            negs.push_back(slots[static_cast<std::size_t>(anchor_slot[k])].var);
                    hist.between_negative_evaluations += negs.size();
                    ad::Var lb = nt_xent(a, p, negs, config.tau);
                    sum_b += lb.scalar();
                    terms.push_back(ad::scale(lb, alpha * inv));
                }
            }
            ad::Var loss = ad::sum_scalars(terms);
            sum_loss += loss.scalar() * static_cast<double>(items.size());
            n_items += items.size();
            if (!std::isfinite(loss.scalar()))
                throw NumericError("non-finite contrastive loss at epoch " + std::to_string(epoch));
            loss_tape.backward(loss);

            Gradients grads = encoder.params().zeros_like();
            for (const auto& s : slots) {
                const Matrix& g = loss_tape.grad(s.var);
                if (g.size() == 0) continue;
                ad::Tape tape;
                ad::Var e = encoder.forward(tape, *s.x);
                tape.backward(e, g);
                tape.accumulate(grads);
            }
            opt.step(encoder.params(), grads);
            if (!encoder.params().all_finite())
                throw NumericError("non-finite encoder parameters after epoch " + std::to_string(epoch));
        }

        ContrastEpoch rec;
        rec.epoch = epoch;
        const double n = static_cast<double>(std::max<std::size_t>(n_items, 1));
        rec.loss = sum_loss / n;
        rec.within_loss = need_within ? sum_w / n : std::nan("");
        rec.between_loss = need_between ? sum_b / n : std::nan("");
        rec.positive_same_class = n_lab ? static_cast<double>(n_same) / static_cast<double>(n_lab) : std::nan("");
        hist.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return {std::move(encoder), std::move(hist)};
}

ContrastResult train_contrastive(const TimeSeriesDataset& dataset, const RebarModel& rebar_model, Encoder encoder,
                                 const ContrastConfig& config, const ContrastEpochCallback& on_epoch) {
    return train_contrastive(dataset, RebarMeasure(rebar_model), std::move(encoder), config, on_epoch);
}

void write_contrast_csv(const ContrastHistory& history, const std::filesystem::path& path) {
    auto f = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
    std::string out = "epoch,loss,within_loss,between_loss,positive_same_class\n";
    for (const auto& e : history.epochs)
        out += std::to_string(e.epoch) + "," + f(e.loss) + "," + f(e.within_loss) + "," + f(e.between_loss) + "," +
               f(e.positive_same_class) + "\n";
    write_text_atomic(path, out);
}

}  // namespace rebar
