#include "pointfuse/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pointfuse/errors.hpp"

namespace pointfuse {

uint64_t split_mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t seed, uint64_t tag) {
  return split_mix(seed ^ split_mix(tag));
}

uint64_t mix_seed(uint64_t seed, uint64_t tag, uint64_t tag2) {
  return mix_seed(mix_seed(seed, tag), tag2);
}

uint64_t mix_seed(uint64_t seed, uint64_t tag, uint64_t tag2, uint64_t tag3) {
  return mix_seed(mix_seed(seed, tag, tag2), tag3);
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw ValidationError("Rng::uniform_int: n must be positive");
  // rejection sampling keeps the draw exactly uniform
  uint64_t un = static_cast<uint64_t>(n);
  uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

double Rng::normal() {
  // u1 in (0, 1] so the log is finite
  double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  if (k > n || k < 0) throw SizeError("sample_without_replacement: k > n");
  // partial Fisher-Yates over an index array; fine at desk scale
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = 0; i < k; ++i) {
    int j = i + rng.uniform_int(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace pointfuse
