#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace crophybrid {

inline constexpr const char* kToolVersion = "0.1.0";

// Every failure surfaces as an Error carrying a short machine-readable kind
// ("shape", "grid", "optimizer", ...) plus a human-readable detail. The CLI
// prints them as a single line: "error: <kind>: <detail>".
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& detail)
        : std::runtime_error(kind + ": " + detail), kind_(std::move(kind)) {}

    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

[[noreturn]] inline void fail(const std::string& kind, const std::string& detail) {
    throw Error(kind, detail);
}

// Non-fatal conditions (empty cloud filter result, skipped parcels, ...) are
// collected here and forwarded to stderr by the CLI.
using Warnings = std::vector<std::string>;

inline void warn(Warnings* sink, const std::string& msg) {
    if (sink) sink->push_back(msg);
}

// ---- little-endian byte packing (file formats are LE by contract) ----

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// FNV-1a, used to fingerprint run configurations in artifact sidecars.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hash_hex(const std::string& s) {
    std::uint64_t h = fnv1a64(s.data(), s.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace crophybrid
