#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rebar/autograd.hpp"
#include "rebar/data.hpp"
#include "rebar/masking.hpp"
#include "rebar/tensor.hpp"

namespace rebar {

/// 1 + (kernel - 1) * (2^layers - 1): the span of a stack whose layer l
/// uses dilation 2^l.
int receptive_field(int kernel, int layers);

struct RebarConfig {
    Eigen::Index in_channels = 1;
    Eigen::Index embed_channels = 256;
    Eigen::Index bottleneck_channels = 32;
    int base_kernel = 15;
    int num_layers = 2;
    int num_heads = 4;
    bool softmax_scale = true;
    double revin_eps = 1e-5;
    /// Replaces the dilated-conv query/key/value stacks by pointwise linear maps.
    bool linear_qkv = false;
    std::uint64_t seed = 0;

    int receptive_field() const { return linear_qkv ? 1 : rebar::receptive_field(base_kernel, num_layers); }
    void validate() const;
    bool operator==(const RebarConfig&) const = default;
};

void to_json(nlohmann::json& j, const RebarConfig& c);
void from_json(const nlohmann::json& j, RebarConfig& c);

/// Per-channel statistics of the query's observed positions.
struct RevinStats {
    RowVector mean;
    RowVector std;
    /// 1 where a channel had no observed position and fell back to (0, 1).
    std::vector<std::uint8_t> fallback;
};

struct RevinResult {
    Matrix query;  // masked positions stay zero
    Matrix key;
    RevinStats stats;
};

RevinStats revin_stats(const MaskedSubsequence& query, double eps);
RevinResult revin_normalize(const MaskedSubsequence& query, const Matrix& key, double eps);
Matrix revin_denormalize(const Matrix& x, const RevinStats& stats);

/// Row-stochastic [T_q x T_k] weights, one matrix per head.
using AttentionMaps = std::vector<Matrix>;

struct Reconstruction {
    Matrix values;  // [T_q x D]
    AttentionMaps attention;
    RevinStats stats;
};

class RebarModel {
public:
    enum class Stack { query, key, value };

    explicit RebarModel(RebarConfig config);

    const RebarConfig& config() const noexcept { return config_; }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    struct Graph {
        ad::Var reconstruction;
        std::vector<ad::Var> attention;
        std::vector<ad::Var> logits;
        RevinStats stats;
    };

    /// Full differentiable forward pass on `tape`.
    Graph forward(ad::Tape& tape, const MaskedSubsequence& query, const Matrix& key) const;

    /// Value path only: aggregated heads of p * f_v(key), RevIN inverted.
    ad::Var value_path(ad::Tape& tape, std::span<const ad::Var> attention, const Matrix& key_normalized,
                       const RevinStats& stats) const;

    ad::Var stack_forward(ad::Tape& tape, Stack which, ad::Var x, const Valid& valid) const;

private:
    struct LayerIds {
        std::size_t bottleneck_w, bottleneck_b, conv_w, conv_b, expand_w, expand_b;
    };
    struct StackIds {
        std::size_t in_w, in_b;
        std::vector<LayerIds> layers;
    };
    struct HeadIds {
        std::size_t w, b;
    };

    void build(Rng& rng);
    StackIds build_stack(const std::string& prefix, Rng& rng);
    ad::Var param(ad::Tape& tape, std::size_t id) const { return tape.parameter(params_, id); }
    ad::Var project(ad::Tape& tape, ad::Var x, HeadIds ids) const;

    RebarConfig config_;
    ParameterSet params_;
    StackIds q_, k_, v_;
    HeadIds proj_q_, proj_k_, proj_v_, aggregate_;
};

Reconstruction rebar_forward(const MaskedSubsequence& query, const Matrix& key, const RebarModel& model);

/// Pre-softmax attention logits per head.
std::vector<Matrix> attention_logits(const MaskedSubsequence& query, const Matrix& key, const RebarModel& model);

/// Reconstruction from given attention rows and the key alone. Throws when
/// a row is negative or its sum is more than 1e-3 away from 1.
Matrix reconstruct_from_weights(const AttentionMaps& p, const Matrix& key, const RevinStats& stats,
                                const RebarModel& model);

/// Mean squared reconstruction error of `anchor` over the masked positions
/// when the candidate is the only retrieval source.
double rebar_distance(const Subsequence& anchor, const Subsequence& cand, const Mask& mask, const RebarModel& model);
double rebar_distance(const Matrix& anchor, const Matrix& cand, const Mask& mask, const RebarModel& model);

/// Distances of one anchor to every candidate under a single shared mask.
std::vector<double> rebar_distances(const Subsequence& anchor, std::span<const Subsequence> cands, const Mask& mask,
                                    const RebarModel& model);

void save_rebar_model(const RebarModel& model, const std::filesystem::path& path);
RebarModel load_rebar_model(const std::filesystem::path& path);
/// Rejects a checkpoint whose stored config differs from `expected`.
RebarModel load_rebar_model(const std::filesystem::path& path, const RebarConfig& expected);

}  // namespace rebar
