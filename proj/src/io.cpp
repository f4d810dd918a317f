#include "rebar/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

namespace rebar {

namespace fs = std::filesystem;

Bytes read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for " + path.string());
    return out;
}

std::string read_text(const fs::path& path) {
    auto b = read_bytes(path);
    return {b.begin(), b.end()};
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename into " + path.string());
    }
}

void write_text_atomic(const fs::path& path, std::string_view text) {
    write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h) noexcept {
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
    return fnv1a64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t checksum_path(const fs::path& path) {
    if (!fs::exists(path)) throw MissingArtifactError("no such file or directory: " + path.string());
    if (!fs::is_directory(path)) return fnv1a64(read_bytes(path));
    std::vector<fs::path> entries;
    for (const auto& e : fs::recursive_directory_iterator(path))
        if (e.is_regular_file()) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : entries) {
        const auto rel = fs::relative(p, path).generic_string();
        h = fnv1a64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(rel.data()), rel.size()), h);
        h = fnv1a64(read_bytes(p), h);
    }
    return h;
}

void ByteWriter::u32(std::uint32_t v) {
    const std::uint32_t a[1] = {v};
    auto b = encode_le(std::span<const std::uint32_t>(a));
    buf_.insert(buf_.end(), b.begin(), b.end());
}

void ByteWriter::str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::raw(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError("truncated file " + source_);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
}

std::uint32_t ByteReader::u32() { return decode_le<std::uint32_t>(raw(4))[0]; }

std::string ByteReader::str() {
    const auto n = u32();
    auto s = raw(n);
    return {s.begin(), s.end()};
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

}  // namespace rebar
