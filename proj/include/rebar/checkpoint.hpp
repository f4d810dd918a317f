#pragma once

#include <filesystem>
#include <string>

#include "rebar/tensor.hpp"

namespace rebar {

// Layout, all integers u32 little-endian:
//   magic "RBCK" | version | kind (len + bytes) | config JSON (len + bytes)
//   | tensor count | per tensor: name (len + bytes), rows, cols, rows*cols f32 LE
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string kind;
    std::string config_json;
    ParameterSet params;
};

void write_checkpoint(const std::filesystem::path& path, const std::string& kind, const std::string& config_json,
                      const ParameterSet& params);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies `src` into `dst`, requiring identical names, order and shapes.
void assign_parameters(ParameterSet& dst, const ParameterSet& src, const std::string& source);

}  // namespace rebar
