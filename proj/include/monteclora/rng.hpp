#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mclora {

using Engine = std::mt19937_64;

/// SplitMix64 step, used to decorrelate derived seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent sub-stream seed from (base, tag, index).
/// Workers, datasets and samplers each get their own tag so that consuming
/// noise in one stream never shifts another.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(base);
  for (char c : tag) h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  return splitmix64(h ^ splitmix64(index));
}

inline Engine make_engine(std::uint64_t seed) { return Engine(seed); }

inline void fill_normal(Engine& eng, std::vector<double>& out) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : out) v = dist(eng);
}

inline std::vector<double> normal_vector(Engine& eng, std::size_t n) {
  std::vector<double> out(n);
  fill_normal(eng, out);
  return out;
}

inline void fill_uniform(Engine& eng, std::vector<double>& out) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (double& v : out) v = dist(eng);
}

inline std::vector<double> uniform_vector(Engine& eng, std::size_t n) {
  std::vector<double> out(n);
  fill_uniform(eng, out);
  return out;
}

}  // namespace mclora
