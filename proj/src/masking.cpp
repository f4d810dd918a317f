#include "rebar/masking.hpp"

#include <algorithm>
#include <numeric>

#include "rebar/errors.hpp"

namespace rebar {

const char* to_string(MaskKind k) noexcept { return k == MaskKind::extended ? "extended" : "transient"; }

MaskKind parse_mask_kind(const std::string& s) {
    if (s == "extended") return MaskKind::extended;
    if (s == "transient") return MaskKind::transient;
    throw ConfigError("unknown mask kind '" + s + "' (expected extended or transient)");
}

Eigen::Index Mask::count() const noexcept {
    return static_cast<Eigen::Index>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
}

Valid Mask::observed() const {
    Valid v(flags.size());
    for (std::size_t i = 0; i < flags.size(); ++i) v[i] = flags[i] ? 0 : 1;
    return v;
}

namespace {

void check_mask_size(Eigen::Index T, Eigen::Index n) {
    if (T < 1) throw SizeError("mask length must be positive");
    if (n < 1 || n > T)
        throw SizeError("mask count " + std::to_string(n) + " must lie in [1, " + std::to_string(T) + "]");
}

}  // namespace

Mask make_extended_mask_at(Eigen::Index T, Eigen::Index n, Eigen::Index start) {
    check_mask_size(T, n);
    if (start < 0 || start > T - n) throw SizeError("extended mask start out of range");
    Mask m;
    m.kind = MaskKind::extended;
    m.flags.assign(static_cast<std::size_t>(T), 0);
    std::fill_n(m.flags.begin() + start, n, std::uint8_t{1});
    return m;
}

Mask make_extended_mask(Eigen::Index T, Eigen::Index n, Rng& rng) {
    check_mask_size(T, n);
    std::uniform_int_distribution<Eigen::Index> start(0, T - n);
    return make_extended_mask_at(T, n, start(rng));
}

Mask make_transient_mask(Eigen::Index T, Eigen::Index n, Rng& rng) {
    check_mask_size(T, n);
    // Partial Fisher-Yates: the first n entries are a uniform n-subset.
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(T));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index i = 0; i < n; ++i) {
        std::uniform_int_distribution<Eigen::Index> pick(i, T - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    Mask m;
    m.kind = MaskKind::transient;
    m.flags.assign(static_cast<std::size_t>(T), 0);
    for (Eigen::Index i = 0; i < n; ++i) m.flags[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
    return m;
}

Mask make_mask(MaskKind kind, Eigen::Index T, Eigen::Index n, Rng& rng) {
    return kind == MaskKind::extended ? make_extended_mask(T, n, rng) : make_transient_mask(T, n, rng);
}

MaskedSubsequence apply_mask(const Matrix& values, const Mask& mask) {
    if (mask.length() != values.rows())
        throw SizeError("mask length " + std::to_string(mask.length()) + " differs from subsequence length " +
                        std::to_string(values.rows()));
    MaskedSubsequence out{values, mask};
    for (Eigen::Index t = 0; t < values.rows(); ++t)
        if (mask.flags[static_cast<std::size_t>(t)]) out.values.row(t).setZero();
    return out;
}

MaskedSubsequence apply_mask(const Subsequence& x, const Mask& mask) { return apply_mask(x.values, mask); }

}  // namespace rebar
