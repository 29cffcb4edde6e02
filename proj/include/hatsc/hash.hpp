#pragma once

#include <cstdint>
#include <string_view>

namespace hatsc {

// FNV-1a 64-bit. Used wherever a stable, platform-independent hash is needed
// (split assignment, file fingerprints); std::hash is not reproducible
// across implementations.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// One splitmix64-style avalanche round; decorrelates nearby inputs.
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace hatsc
