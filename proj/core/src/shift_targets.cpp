#include "pars/shift_targets.hpp"

#include "pars/error.hpp"

namespace pars {

ShiftTargets compute_shift_targets(const PatchSet& ps, int64_t t_total) {
  ShiftTargets out;
  out.masked_indices = ps.masked_indices();
  out.t_total = t_total;

  int64_t n_m = out.n_masked();
  if (n_m < 2) throw InvalidInput("shift targets: need at least 2 PE-masked patches");
  int64_t m = ps.patch_len();
  for (int64_t idx : out.masked_indices) {
    if (ps.start_times[static_cast<size_t>(idx)] + m > t_total)
      throw InvalidInput("shift targets: t_total shorter than a patch extent");
  }

  out.theta = nn::Tensor({n_m, n_m});
  for (int64_t a = 0; a < n_m; ++a) {
    int64_t ta = ps.start_times[static_cast<size_t>(out.masked_indices[static_cast<size_t>(a)])];
    for (int64_t b = a + 1; b < n_m; ++b) {
      int64_t tb = ps.start_times[static_cast<size_t>(out.masked_indices[static_cast<size_t>(b)])];
      double v = static_cast<double>(ta - tb) / static_cast<double>(t_total);
      out.theta.at(a, b) = v;
      out.theta.at(b, a) = -v;  // negation of the same value: exact anti-symmetry
    }
  }
  return out;
}

std::vector<std::pair<int64_t, int64_t>> pair_index_list(int64_t n_masked) {
  std::vector<std::pair<int64_t, int64_t>> pairs;
  pairs.reserve(static_cast<size_t>(n_masked * n_masked));
  for (int64_t a = 0; a < n_masked; ++a)
    for (int64_t b = 0; b < n_masked; ++b) pairs.emplace_back(a, b);
  return pairs;
}

std::vector<std::pair<int64_t, int64_t>> pair_index_list(const ShiftTargets& t) {
  return pair_index_list(t.n_masked());
}

}  // namespace pars
