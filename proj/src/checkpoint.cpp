#include "rebar/checkpoint.hpp"

#include <algorithm>

#include "rebar/errors.hpp"
#include "rebar/io.hpp"

namespace rebar {

namespace {
constexpr char kMagic[4] = {'R', 'B', 'C', 'K'};
}

void write_checkpoint(const std::filesystem::path& path, const std::string& kind, const std::string& config_json,
                      const ParameterSet& params) {
    ByteWriter w;
    w.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
    w.u32(kCheckpointVersion);
    w.str(kind);
    w.str(config_json);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.str(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.rows()));
        w.u32(static_cast<std::uint32_t>(p.value.cols()));
        std::vector<float> f(static_cast<std::size_t>(p.value.size()));
        for (Eigen::Index i = 0; i < p.value.size(); ++i) f[static_cast<std::size_t>(i)] = static_cast<float>(p.value.data()[i]);
        w.raw(encode_le(std::span<const float>(f)));
    }
    write_file_atomic(path, w.bytes());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingArtifactError("checkpoint not found: " + path.string());
    const Bytes bytes = read_bytes(path);
    ByteReader r(bytes, path.string());
    auto magic = r.raw(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError(path.string() + " is not a checkpoint (bad magic)");
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.kind = r.str();
    ck.config_json = r.str();
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = r.str();
        const auto rows = r.u32();
        const auto cols = r.u32();
        auto f = decode_le<float>(r.raw(static_cast<std::size_t>(rows) * cols * 4));
        Matrix m(rows, cols);
        for (std::size_t k = 0; k < f.size(); ++k) m.data()[k] = f[k];
        ck.params.add(std::move(name), std::move(m));
    }
    if (!r.done()) throw FormatError(path.string() + ": trailing bytes after tensors");
    return ck;
}

void assign_parameters(ParameterSet& dst, const ParameterSet& src, const std::string& source) {
    if (dst.size() != src.size())
        throw ConsistencyError(source + ": expected " + std::to_string(dst.size()) + " tensors, found " +
                               std::to_string(src.size()));
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].name != src[i].name)
            throw ConsistencyError(source + ": tensor " + std::to_string(i) + " is '" + src[i].name + "', expected '" +
                                   dst[i].name + "'");
        if (dst[i].value.rows() != src[i].value.rows() || dst[i].value.cols() != src[i].value.cols())
            throw ConsistencyError(source + ": shape mismatch for '" + dst[i].name + "'");
        if (!src[i].value.allFinite()) throw ValidationError(source + ": non-finite values in '" + dst[i].name + "'");
        dst[i].value = src[i].value;
    }
}

}  // namespace rebar
