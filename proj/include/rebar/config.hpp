#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rebar/contrastive.hpp"
#include "rebar/data.hpp"
#include "rebar/rebar_net.hpp"
#include "rebar/rebar_train.hpp"

namespace rebar {

struct EvalConfig {
    int trials = 50;
    int n_cand = 20;
    double transient_mask_fraction = 0.5;
    Split split = Split::test;
    /// Split the linear probe is fitted on.
    Split probe_train_split = Split::train;
};

/// Sections: [run], [synthetic], [rebar], [rebar_train], [encoder],
/// [contrastive], [evaluation]. Channel counts are taken from the dataset.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string name = "synthetic";
    /// Dataset directory; empty means <output_dir>/dataset_<name>.
    std::filesystem::path dataset;
    /// Empty means $REBAR_OUTPUT_ROOT/<name>, or ./runs/<name> without it.
    std::filesystem::path output_dir;

    SyntheticConfig synthetic;
    RebarConfig rebar;
    RebarTrainConfig rebar_train;
    EncoderConfig encoder;
    ContrastConfig contrastive;
    EvalConfig evaluation;

    std::filesystem::path resolved_output_dir() const;
    std::filesystem::path resolved_dataset() const;
    /// Canonical INI text, stable across runs; the manifest hashes it.
    std::string to_ini() const;
};

inline constexpr const char* kOutputRootEnv = "REBAR_OUTPUT_ROOT";

/// Parses INI text, applies `section.key=value` overrides, and validates.
/// Every problem found is reported in one ConfigError.
RunConfig parse_run_config(const std::string& ini_text, const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace rebar
