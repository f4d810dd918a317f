#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "rebar/autograd.hpp"
#include "rebar/data.hpp"
#include "rebar/measure.hpp"
#include "rebar/tensor.hpp"

namespace rebar {

struct EncoderConfig {
    Eigen::Index in_channels = 1;
    Eigen::Index hidden_channels = 64;
    int num_blocks = 10;
    int kernel = 3;
    Eigen::Index embed_dim = 320;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const EncoderConfig&) const = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

/// Pointwise input map, residual blocks of two dilated convolutions
/// (dilation 2^b), pointwise output map, global max pool over time.
class Encoder {
public:
    explicit Encoder(EncoderConfig config);

    const EncoderConfig& config() const noexcept { return config_; }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    /// Per-timestep outputs before pooling, [T x embed_dim].
    ad::Var features(ad::Tape& tape, const Matrix& x) const;
    /// Pooled embedding, [1 x embed_dim].
    ad::Var forward(ad::Tape& tape, const Matrix& x) const;

private:
    struct BlockIds {
        std::size_t w1, b1, w2, b2;
    };
    ad::Var param(ad::Tape& tape, std::size_t id) const { return tape.parameter(params_, id); }

    EncoderConfig config_;
    ParameterSet params_;
    std::size_t in_w_, in_b_, out_w_, out_b_;
    std::vector<BlockIds> blocks_;
};

RowVector encode(const Subsequence& x, const Encoder& encoder);
RowVector encode(const Matrix& x, const Encoder& encoder);
/// One embedding per row.
Matrix encode_all(std::span<const Subsequence> xs, const Encoder& encoder);

void save_encoder(const Encoder& encoder, const std::filesystem::path& path);
Encoder load_encoder(const std::filesystem::path& path);

struct ContrastConfig {
    int n_cand = 20;
    double tau = 0.1;
    double alpha = 0.0;
    /// Anchors (each from a distinct series) per optimizer step.
    int batch_size = 16;
    double learning_rate = 1e-3;
    int max_epochs = 50;
    double transient_mask_fraction = 0.5;
    Eigen::Index subseq_len = 128;
    /// Anchors drawn from every train series per epoch.
    int anchors_per_series = 1;
    std::uint64_t seed = 0;

    Eigen::Index mask_count() const;
    /// Throws ConfigError listing every violated field.
    void validate() const;
    bool operator==(const ContrastConfig&) const = default;
};

struct PairLabeling {
    int positive_index = 0;
    std::vector<int> within_negative_indices;
};

/// Argmin with ties to the lowest index.
PairLabeling label_from_distances(std::span<const double> distances);
/// Distances of every candidate under the one supplied mask, then argmin.
PairLabeling label_candidates(const Subsequence& anchor, std::span<const Subsequence> candidates,
                              const DistanceMeasure& measure, const Mask& mask);
PairLabeling label_candidates(const Subsequence& anchor, std::span<const Subsequence> candidates,
                              const RebarModel& model, const Mask& mask);

/// -log softmax of the positive among {positive} + negatives over cosine / tau.
ad::Var nt_xent(ad::Var anchor, ad::Var positive, std::span<const ad::Var> negatives, double tau);

double nt_xent_within(const RowVector& anchor, const RowVector& positive, std::span<const RowVector> within_negatives,
                      double tau);
double nt_xent_between(const RowVector& anchor, const RowVector& positive, std::span<const RowVector> other_anchors,
                       double tau);
double combined_loss(double within, double between, double alpha);

struct ContrastEpoch {
    int epoch = 0;
    double loss = 0.0;
    double within_loss = 0.0;
    /// NaN when alpha is 0.
    double between_loss = 0.0;
    /// Fraction of labeled anchors whose positive shares the anchor's class,
    /// over anchors and positives that carry a uniform label.
    double positive_same_class = 0.0;
};

struct ContrastHistory {
    std::vector<ContrastEpoch> epochs;
    /// Number of anchor-negative similarity terms evaluated for between losses.
    std::size_t between_negative_evaluations = 0;
};

struct ContrastResult {
    Encoder encoder;
    ContrastHistory history;
};

using ContrastEpochCallback = std::function<void(const ContrastEpoch&)>;

ContrastResult train_contrastive(const TimeSeriesDataset& dataset, const DistanceMeasure& measure, Encoder encoder,
                                 const ContrastConfig& config, const ContrastEpochCallback& on_epoch = {});
/// `rebar_model` is only read.
ContrastResult train_contrastive(const TimeSeriesDataset& dataset, const RebarModel& rebar_model, Encoder encoder,
                                 const ContrastConfig& config, const ContrastEpochCallback& on_epoch = {});

/// CSV with header epoch,loss,within_loss,between_loss,positive_same_class.
void write_contrast_csv(const ContrastHistory& history, const std::filesystem::path& path);

}  // namespace rebar
