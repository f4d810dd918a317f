#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rebar/tensor.hpp"

namespace rebar {

enum class Split { train, val, test };

const char* to_string(Split s) noexcept;
Split parse_split(const std::string& s);

inline constexpr std::int32_t kUnlabeled = -1;

/// One long recording: values are [U x D] float32, labels are per timestep.
struct TimeSeries {
    std::string series_id;
    FloatMatrix values;
    std::vector<std::int32_t> labels;
    double sample_rate_hz = 1.0;

    Eigen::Index length() const noexcept { return values.rows(); }
    Eigen::Index channels() const noexcept { return values.cols(); }

    friend bool operator==(const TimeSeries& a, const TimeSeries& b) {
        return a.series_id == b.series_id && a.values.rows() == b.values.rows() &&
               a.values.cols() == b.values.cols() && a.values == b.values && a.labels == b.labels &&
               a.sample_rate_hz == b.sample_rate_hz;
    }
};

struct TimeSeriesDataset {
    std::vector<TimeSeries> series;
    int num_classes = 0;
    std::vector<std::string> class_names;
    std::map<std::string, Split> split_assignment;

    Eigen::Index channels() const;
    const TimeSeries& find(const std::string& series_id) const;
    std::vector<const TimeSeries*> in_split(Split s) const;
    /// Throws on any violated invariant.
    void validate() const;

    bool operator==(const TimeSeriesDataset&) const = default;
};

struct Subsequence {
    Matrix values;  // [T x D]
    std::string source_series_id;
    Eigen::Index start_index = 0;
    std::int32_t label = kUnlabeled;

    Eigen::Index length() const noexcept { return values.rows(); }
};

struct SyntheticConfig {
    int num_classes = 3;
    int num_series = 10;
    Eigen::Index series_length = 3000;
    Eigen::Index channels = 1;
    int motifs_per_class = 2;
    Eigen::Index motif_length = 32;
    std::pair<Eigen::Index, Eigen::Index> segment_length_range{200, 500};
    double noise_std = 0.1;
    double sample_rate_hz = 50.0;
    std::uint64_t seed = 0;
};

TimeSeriesDataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const TimeSeriesDataset& dataset, const std::filesystem::path& dir);

/// Deterministic in `config`. Splits are assigned 70/15/15 over series.
TimeSeriesDataset generate_synthetic(const SyntheticConfig& config);

/// The class templates generate_synthetic embeds, [class][motif] -> [L x D].
std::vector<std::vector<Matrix>> synthetic_templates(const SyntheticConfig& config);

/// Reads one series from CSV: one row per timestep, D value columns then a
/// label column. A header row is skipped when its first field is not numeric.
TimeSeries import_csv_series(const std::filesystem::path& csv, std::string series_id, double sample_rate_hz);

/// Shuffles series ids with `seed` and assigns the first 70% to train, half
/// of the remainder to val and the rest to test.
std::map<std::string, Split> assign_splits(const std::vector<std::string>& series_ids, std::uint64_t seed);

/// Window [start, start+T) as a subsequence; label set only when uniform.
Subsequence extract(const TimeSeries& series, Eigen::Index start, Eigen::Index T);

/// Label shared by every timestep of the window, or kUnlabeled.
std::int32_t uniform_label(const TimeSeries& series, Eigen::Index start, Eigen::Index T);

Subsequence rand_segment(const TimeSeries& series, Eigen::Index T, Rng& rng,
                         std::optional<std::int32_t> class_filter = std::nullopt);

/// True when some length-T window carries `cls` on every timestep.
bool has_class_window(const TimeSeries& series, Eigen::Index T, std::int32_t cls);

struct AnchorAndCandidates {
    Subsequence anchor;
    std::vector<Subsequence> candidates;
};

AnchorAndCandidates sample_anchor_and_candidates(const TimeSeries& series, Eigen::Index T, int n_cand, Rng& rng);

/// Non-overlapping windows tiled from t = 0 whose timesteps share one label.
std::vector<Subsequence> labeled_windows(const TimeSeries& series, Eigen::Index T);

}  // namespace rebar
