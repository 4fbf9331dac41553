#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pars {

// Deterministic random source. Every random draw in the library goes through
// this wrapper so a run is reproducible from its seed and the generator state
// can be checkpointed mid-run. Bounded integers and normals are mapped from
// raw engine output by hand; the standard distributions are avoided because
// their output is not pinned down by the standard.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  // Independent stream for a (seed, stream) pair, e.g. one stream for
  // parameter init and another for data order.
  static Rng derive(uint64_t seed, uint64_t stream);

  uint64_t next_u64() { return engine_(); }

  // Uniform integer in [lo, hi], both inclusive. Rejection sampled.
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Uniform double in [0, 1).
  double uniform_real();
  double uniform_real(double lo, double hi);

  // Standard normal via Box-Muller. Stateless (no cached spare), so the
  // stream position is a pure function of the number of calls made.
  double normal();

  // Normal(0, stddev) with resampling outside +/- clip_sigmas.
  double truncated_normal(double stddev, double clip_sigmas = 2.0);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(0, i);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

  // k distinct indices drawn from [0, n), uniform over subsets.
  std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k);

  // Engine state as text; round-trips exactly.
  std::string serialize() const;
  static Rng deserialize(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

}  // namespace pars
