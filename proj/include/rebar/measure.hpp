#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rebar/data.hpp"
#include "rebar/masking.hpp"
#include "rebar/rebar_net.hpp"

namespace rebar {

/// Smaller is more similar. One mask is shared by all candidates of a call.
class DistanceMeasure {
public:
    virtual ~DistanceMeasure() = default;
    virtual std::string name() const = 0;
    virtual std::vector<double> distances(const Subsequence& anchor, std::span<const Subsequence> cands,
                                          const Mask& mask) const = 0;
};

class RebarMeasure final : public DistanceMeasure {
public:
    explicit RebarMeasure(const RebarModel& model) : model_(&model) {}
    std::string name() const override { return "rebar"; }
    std::vector<double> distances(const Subsequence& anchor, std::span<const Subsequence> cands,
                                  const Mask& mask) const override;

private:
    const RebarModel* model_;
};

/// Ignores the mask. Candidates are padded with their neighboring values in
/// `dataset` when their source series is found there.
class SlidingMseMeasure final : public DistanceMeasure {
public:
    explicit SlidingMseMeasure(const TimeSeriesDataset* dataset = nullptr) : dataset_(dataset) {}
    std::string name() const override { return "sliding-mse"; }
    std::vector<double> distances(const Subsequence& anchor, std::span<const Subsequence> cands,
                                  const Mask& mask) const override;

private:
    const TimeSeriesDataset* dataset_;
};

class FunctionMeasure final : public DistanceMeasure {
public:
    using Fn = std::function<double(const Subsequence& anchor, const Subsequence& cand, const Mask& mask)>;
    FunctionMeasure(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}
    std::string name() const override { return name_; }
    std::vector<double> distances(const Subsequence& anchor, std::span<const Subsequence> cands,
                                  const Mask& mask) const override;

private:
    std::string name_;
    Fn fn_;
};

/// Minimum over shifts s in [-T+1, T-1] of the MSE between the anchor and
/// window[t] = cand[t + s], with the candidate edge-replicated.
double sliding_mse_distance(const Matrix& anchor, const Matrix& cand);
/// As above, reading shifted values from `series` around the window
/// [cand_start, cand_start + T); positions past either series end repeat
/// the end value.
double sliding_mse_distance(const Matrix& anchor, const TimeSeries& series, Eigen::Index cand_start);

}  // namespace rebar
