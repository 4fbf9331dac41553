#include "pars/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "pars/error.hpp"

namespace pars {

namespace {
// splitmix64, used only to decorrelate derived stream seeds.
uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

Rng Rng::derive(uint64_t seed, uint64_t stream) {
  return Rng(mix64(mix64(seed) ^ mix64(stream + 0x51ed2701ULL)));
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (lo > hi) throw InvalidInput("uniform_int: empty range");
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
  // Rejection sampling on the top of the range to avoid modulo bias.
  uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return lo + static_cast<int64_t>(x % span);
}

double Rng::uniform_real() {
  // 53 random bits -> [0, 1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_real(double lo, double hi) {
  return lo + (hi - lo) * uniform_real();
}

double Rng::normal() {
  double u1 = 1.0 - uniform_real();  // (0, 1], keeps log finite
  double u2 = uniform_real();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double stddev, double clip_sigmas) {
  double z;
  do {
    z = normal();
  } while (std::abs(z) > clip_sigmas);
  return z * stddev;
}

std::vector<int64_t> Rng::sample_without_replacement(int64_t n, int64_t k) {
  if (k < 0 || k > n) throw InvalidInput("sample_without_replacement: k out of range");
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
  for (int64_t i = 0; i < k; ++i) {
    int64_t j = uniform_int(i, n - 1);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  idx.resize(static_cast<size_t>(k));
  return idx;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng r;
  std::istringstream is(text);
  is >> r.engine_;
  if (is.fail()) throw CorruptStore("rng state: unparsable");
  return r;
}

}  // namespace pars
