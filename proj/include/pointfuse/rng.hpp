#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace pointfuse {

// splitmix64 finalizer; used both to seed streams and to hash tags.
uint64_t split_mix(uint64_t x);

// Order-independent combination of a seed with a tag. Children derived with
// distinct tags give independent streams regardless of call order.
uint64_t mix_seed(uint64_t seed, uint64_t tag);
uint64_t mix_seed(uint64_t seed, uint64_t tag, uint64_t tag2);
uint64_t mix_seed(uint64_t seed, uint64_t tag, uint64_t tag2, uint64_t tag3);

// Deterministic RNG. Avoids std distributions whose output is
// implementation-defined; every draw below is pinned arithmetic on the
// mt19937_64 stream.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(split_mix(seed)) {}

  uint64_t seed() const { return seed_; }
  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int uniform_int(int n);

  // standard normal via Box-Muller (deterministic, two draws per value)
  double normal();

  // independent child stream; does not advance this stream
  Rng child(uint64_t tag) const { return Rng(mix_seed(seed_, tag)); }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

// k distinct values from [0, n), returned in ascending order.
std::vector<int> sample_without_replacement(int n, int k, Rng& rng);

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    int j = rng.uniform_int(i + 1);
    std::swap(v[i], v[j]);
  }
}

}  // namespace pointfuse
