#pragma once

#include <cstdint>
#include <vector>

#include "rebar/data.hpp"
#include "rebar/tensor.hpp"

namespace rebar {

enum class MaskKind { extended, transient };

const char* to_string(MaskKind k) noexcept;
MaskKind parse_mask_kind(const std::string& s);

/// flags[t] == 1 marks timestep t as missing.
struct Mask {
    std::vector<std::uint8_t> flags;
    MaskKind kind = MaskKind::extended;

    Eigen::Index length() const noexcept { return static_cast<Eigen::Index>(flags.size()); }
    Eigen::Index count() const noexcept;
    /// Complement of flags, the observed positions.
    Valid observed() const;
    const Valid& missing() const noexcept { return flags; }
};

/// One contiguous run [start, start+n) with start uniform over [0, T-n].
Mask make_extended_mask(Eigen::Index T, Eigen::Index n, Rng& rng);
Mask make_extended_mask_at(Eigen::Index T, Eigen::Index n, Eigen::Index start);
/// n distinct positions drawn uniformly without replacement.
Mask make_transient_mask(Eigen::Index T, Eigen::Index n, Rng& rng);
Mask make_mask(MaskKind kind, Eigen::Index T, Eigen::Index n, Rng& rng);

/// Subsequence values with missing positions zero-filled, paired with the mask.
struct MaskedSubsequence {
    Matrix values;
    Mask mask;
};

MaskedSubsequence apply_mask(const Subsequence& x, const Mask& mask);
MaskedSubsequence apply_mask(const Matrix& values, const Mask& mask);

}  // namespace rebar
