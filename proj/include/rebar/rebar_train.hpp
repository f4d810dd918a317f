#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "rebar/data.hpp"
#include "rebar/masking.hpp"
#include "rebar/rebar_net.hpp"

namespace rebar {

struct RebarTrainConfig {
    Eigen::Index extended_mask_len = 15;
    Eigen::Index subseq_len = 128;
    int batch_size = 16;
    double learning_rate = 1e-3;
    int max_epochs = 50;
    int patience = 10;
    std::uint64_t seed = 0;
    bool ablation_linear_qkv = false;
    /// Mask family used while training; extended unless comparing protocols.
    MaskKind mask_kind = MaskKind::extended;
    /// 0 selects 4x the number of disjoint windows in the split.
    int samples_per_epoch = 0;
    int val_samples = 0;

    /// Throws ConfigError listing every violated field.
    void validate() const;
    bool operator==(const RebarTrainConfig&) const = default;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainHistory {
    double initial_val_loss = 0.0;
    std::vector<EpochRecord> epochs;
    /// 0 when no epoch improved on the initial parameters.
    int best_epoch = 0;
    double best_val_loss = 0.0;
};

struct RebarTrainResult {
    RebarModel model;
    TrainHistory history;
};

/// Masked-position MSE averaged over items.
double reconstruction_loss(std::span<const Matrix> predictions, std::span<const Matrix> targets,
                           std::span<const Mask> masks);
/// Self-reconstruction loss: every item is its own key.
double reconstruction_loss(const RebarModel& model, std::span<const Matrix> xs, std::span<const Mask> masks);

/// Warns when the receptive field is far from three times the mask length.
bool receptive_field_matches_mask(const RebarConfig& model, Eigen::Index mask_len);

/// Number of non-overlapping length-T windows over the series of a split.
Eigen::Index disjoint_windows(const TimeSeriesDataset& dataset, Split split, Eigen::Index T);

using EpochCallback = std::function<void(const EpochRecord&)>;

RebarTrainResult train_rebar(const TimeSeriesDataset& dataset, RebarModel model, const RebarTrainConfig& config,
                             const EpochCallback& on_epoch = {});

/// CSV with header epoch,train_loss,val_loss; epoch 0 holds the initial val loss.
void write_loss_csv(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace rebar
