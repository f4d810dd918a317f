#include "rebar/measure.hpp"

#include <algorithm>
#include <limits>

#include "rebar/errors.hpp"

namespace rebar {

std::vector<double> RebarMeasure::distances(const Subsequence& anchor, std::span<const Subsequence> cands,
                                            const Mask& mask) const {
    return rebar_distances(anchor, cands, mask, *model_);
}

std::vector<double> SlidingMseMeasure::distances(const Subsequence& anchor, std::span<const Subsequence> cands,
                                                 const Mask&) const {
    std::vector<double> d;
    d.reserve(cands.size());
    for (const auto& c : cands) {
        const TimeSeries* s = nullptr;
        if (dataset_)
            for (const auto& ts : dataset_->series)
                if (ts.series_id == c.source_series_id) s = &ts;
        if (s && c.start_index >= 0 && c.start_index + c.length() <= s->length())
            d.push_back(sliding_mse_distance(anchor.values, *s, c.start_index));
        else
            d.push_back(sliding_mse_distance(anchor.values, c.values));
    }
    return d;
}

std::vector<double> FunctionMeasure::distances(const Subsequence& anchor, std::span<const Subsequence> cands,
                                               const Mask& mask) const {
    std::vector<double> d;
    d.reserve(cands.size());
    for (const auto& c : cands) d.push_back(fn_(anchor, c, mask));
    return d;
}

namespace {

template <typename RowAt>
double slide(const Matrix& anchor, Eigen::Index T, RowAt row_at) {
    double best = std::numeric_limits<double>::infinity();
    const double denom = static_cast<double>(T * anchor.cols());
    for (Eigen::Index s = -T + 1; s <= T - 1; ++s) {
        double e = 0.0;
        for (Eigen::Index t = 0; t < T && e < best * denom; ++t) e += (anchor.row(t) - row_at(t + s)).squaredNorm();
        best = std::min(best, e / denom);
    }
    return best;
}

}  // namespace

double sliding_mse_distance(const Matrix& anchor, const Matrix& cand) {
    if (anchor.rows() != cand.rows() || anchor.cols() != cand.cols())
        throw SizeError("sliding_mse_distance: anchor and candidate shapes differ");
    if (anchor.rows() == 0) throw SizeError("sliding_mse_distance: empty subsequence");
    const Eigen::Index T = anchor.rows();
    return slide(anchor, T, [&](Eigen::Index i) { return cand.row(std::clamp<Eigen::Index>(i, 0, T - 1)); });
}

double sliding_mse_distance(const Matrix& anchor, const TimeSeries& series, Eigen::Index cand_start) {
    const Eigen::Index T = anchor.rows();
    if (T == 0) throw SizeError("sliding_mse_distance: empty subsequence");
    if (anchor.cols() != series.channels()) throw SizeError("sliding_mse_distance: channel counts differ");
    if (cand_start < 0 || cand_start + T > series.length()) throw SizeError("sliding_mse_distance: window out of range");
    const Eigen::Index U = series.length();
    const Matrix local = [&] {
        const Eigen::Index lo = std::max<Eigen::Index>(0, cand_start - T + 1);
        const Eigen::Index hi = std::min<Eigen::Index>(U, cand_start + 2 * T - 1);
        return Matrix(series.values.middleRows(lo, hi - lo).cast<double>());
    }();
    const Eigen::Index lo = std::max<Eigen::Index>(0, cand_start - T + 1);
    return slide(anchor, T, [&](Eigen::Index i) {
        const Eigen::Index g = std::clamp<Eigen::Index>(cand_start + i, 0, U - 1);
        return local.row(g - lo);
    });
}

}  // namespace rebar
