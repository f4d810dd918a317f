#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "rebar/errors.hpp"

namespace rebar {

using Bytes = std::vector<std::uint8_t>;

Bytes read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

/// Writes `path.tmp` then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;
std::string hex64(std::uint64_t v);
/// FNV-1a of a file's bytes; directories hash their sorted entries recursively.
std::uint64_t checksum_path(const std::filesystem::path& path);

template <typename T>
Bytes encode_le(std::span<const T> values) {
    static_assert(std::is_arithmetic_v<T> && (sizeof(T) == 4 || sizeof(T) == 8));
    Bytes out(values.size() * sizeof(T));
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint8_t raw[sizeof(T)];
        std::memcpy(raw, &values[i], sizeof(T));
        if constexpr (std::endian::native == std::endian::big)
            for (std::size_t k = 0; k < sizeof(T) / 2; ++k) std::swap(raw[k], raw[sizeof(T) - 1 - k]);
        std::memcpy(out.data() + i * sizeof(T), raw, sizeof(T));
    }
    return out;
}

template <typename T>
std::vector<T> decode_le(std::span<const std::uint8_t> bytes) {
    static_assert(std::is_arithmetic_v<T> && (sizeof(T) == 4 || sizeof(T) == 8));
    if (bytes.size() % sizeof(T) != 0) throw FormatError("payload size is not a multiple of the element size");
    std::vector<T> out(bytes.size() / sizeof(T));
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint8_t raw[sizeof(T)];
        std::memcpy(raw, bytes.data() + i * sizeof(T), sizeof(T));
        if constexpr (std::endian::native == std::endian::big)
            for (std::size_t k = 0; k < sizeof(T) / 2; ++k) std::swap(raw[k], raw[sizeof(T) - 1 - k]);
        std::memcpy(&out[i], raw, sizeof(T));
    }
    return out;
}

/// Shortest round-trip decimal form; "nan"/"inf"/"-inf" for non-finite values.
std::string format_double(double v);

/// Little-endian stream writer/reader used by the checkpoint format.
class ByteWriter {
public:
    void u32(std::uint32_t v);
    void str(std::string_view s);
    void raw(std::span<const std::uint8_t> b);
    const Bytes& bytes() const noexcept { return buf_; }

private:
    Bytes buf_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}
    std::uint32_t u32();
    std::string str();
    std::span<const std::uint8_t> raw(std::size_t n);
    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace rebar
