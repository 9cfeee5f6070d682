#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace elden {

// All randomness flows from one master seed, split hierarchically so that
// components (envs, ensemble members, samplers) get independent streams.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t child(std::uint64_t master, std::string_view tag, std::uint64_t index = 0) {
  return splitmix64(master ^ splitmix64(hash_tag(tag) ^ splitmix64(index)));
}

inline std::mt19937_64 engine(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace rng
}  // namespace elden
