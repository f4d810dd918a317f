#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rebar/contrastive.hpp"
#include "rebar/data.hpp"
#include "rebar/masking.hpp"
#include "rebar/measure.hpp"

namespace rebar {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    Matrix probs;
    std::vector<long> trials;
    /// 1 where no evaluated series held the class; such rows are all zero.
    std::vector<std::uint8_t> absent;
    /// (series, class) pairs skipped because the series lacks the class.
    long skipped = 0;

    double mean_diagonal() const;
};

struct MaskSpec {
    MaskKind kind = MaskKind::transient;
    Eigen::Index count = 64;
};

/// Nearest-neighbor validation: per series, per true class, per trial, an
/// anchor of that class and one candidate per class, labeled by the argmin
/// distance under one shared mask. `split` restricts the series evaluated.
ConfusionMatrix nn_validation(const TimeSeriesDataset& dataset, const DistanceMeasure& measure, Eigen::Index T,
                              int trials, const MaskSpec& mask, Rng& rng, std::optional<Split> split = std::nullopt);
ConfusionMatrix nn_validation(const TimeSeriesDataset& dataset, const RebarModel& model, Eigen::Index T, int trials,
                              const MaskSpec& mask, Rng& rng, std::optional<Split> split = std::nullopt);

struct TprReport {
    std::vector<double> per_class;  // NaN for classes with no trial
    std::vector<long> trials;
    double overall = 0.0;
};

/// Fraction of trials whose labeled positive shares the anchor's class;
/// candidates are uniform windows of the anchor's series.
TprReport candidate_tpr(const TimeSeriesDataset& dataset, const DistanceMeasure& measure, Eigen::Index T, int n_cand,
                        int trials, const MaskSpec& mask, Rng& rng, std::optional<Split> split = std::nullopt);

struct ProbeReport {
    double accuracy = 0.0;
    double auroc_macro = 0.0;
    double auprc_macro = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Multinomial logistic regression on train-standardized features.
struct LogisticModel {
    RowVector mean, scale;
    Matrix weights;  // [d x C]
    RowVector bias;  // [1 x C]
    int iterations = 0;
    bool converged = false;

    Matrix predict_proba(const Matrix& x) const;
};

LogisticModel fit_logistic(const Matrix& x, std::span<const int> labels, int num_classes, double l2 = 1e-4,
                           double grad_tol = 1e-6, int max_iter = 1000);

ProbeReport linear_probe(const Matrix& train_embs, std::span<const int> train_labels, const Matrix& test_embs,
                         std::span<const int> test_labels);

/// Mann-Whitney AUROC with midranks.
double auroc(std::span<const double> scores, std::span<const int> positive);
/// Step-wise average precision over distinct score thresholds.
double average_precision(std::span<const double> scores, std::span<const int> positive);

struct ClusterReport {
    double ari = 0.0;
    double nmi = 0.0;
    std::vector<int> assignments;
};

/// k-means++ seeding, 10 restarts, lowest inertia kept.
std::vector<int> kmeans_cluster(const Matrix& x, int k, std::uint64_t seed);
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);
/// Mutual information over the arithmetic mean of the two entropies.
double normalized_mutual_info(std::span<const int> a, std::span<const int> b);
ClusterReport cluster_report(const Matrix& x, std::span<const int> labels, int k, std::uint64_t seed);

/// Labeled non-overlapping windows of every series in `split`, in dataset order.
std::vector<Subsequence> split_windows(const TimeSeriesDataset& dataset, Split split, Eigen::Index T);

/// CSV rows: series_id,start_index,label,emb_0..emb_{d-1}.
void export_embeddings(const Encoder& encoder, const TimeSeriesDataset& dataset, Split split, Eigen::Index T,
                       const std::filesystem::path& path);

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);
std::string tpr_csv(const TprReport& r, const std::vector<std::string>& class_names);

}  // namespace rebar
