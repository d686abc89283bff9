#pragma once

#include <cstdint>
#include <string_view>

namespace captime {

/// 64-bit FNV-1a. Stable across platforms; used for config and vocabulary
/// fingerprints in manifests.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace captime
