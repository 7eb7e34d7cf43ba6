#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace histsumm {

inline constexpr std::uint32_t kFnvOffsetBasis = 2166136261u;
inline constexpr std::uint32_t kFnvPrime = 16777619u;

/// 32-bit FNV-1a over the raw bytes.
constexpr std::uint32_t fnv1a(std::string_view bytes, std::uint32_t basis = kFnvOffsetBasis) {
    std::uint32_t h = basis;
    for (char c : bytes) {
        h ^= static_cast<std::uint8_t>(c);
        h *= kFnvPrime;
    }
    return h;
}

/// Lowercase hex SHA-256 of a byte string / file.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace histsumm
