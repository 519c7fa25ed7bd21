#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace cxnprobe {

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// 64-bit FNV-1a over raw bytes, continuing from `state`.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = kFnvOffsetBasis) {
  for (const char c : bytes) {
    state ^= static_cast<unsigned char>(c);
    state *= kFnvPrime;
  }
  return state;
}

/// Feeds the 8 little-endian bytes of `value` into an FNV-1a state.
constexpr std::uint64_t fnv1a64_u64(std::uint64_t value, std::uint64_t state = kFnvOffsetBasis) {
  for (int i = 0; i < 8; ++i) {
    state ^= (value >> (8 * i)) & 0xffU;
    state *= kFnvPrime;
  }
  return state;
}

/// Lowercase + NFC. Used for every lemma and word-type comparison so that
/// "Day" sentence-initially compares equal to "day".
std::string fold_case(std::string_view utf8);

std::string to_hex(std::uint64_t value);
std::uint64_t parse_hex(std::string_view hex);

/// FNV-1a digest of a file's bytes.
std::uint64_t file_digest(const std::string& path);

std::string join(std::span<const std::string> parts, std::string_view sep);

}  // namespace cxnprobe
