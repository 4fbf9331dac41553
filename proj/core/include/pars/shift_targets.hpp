#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pars/signal.hpp"
#include "pars/tensor.hpp"

namespace pars {

// The pairwise relative shift target matrix for one patch set: an
// anti-symmetric N_m x N_m matrix of start-time differences normalized by the
// source window length, indexed in masked-token order.
struct ShiftTargets {
  nn::Tensor theta;                     // [n_m, n_m], entries in [-1, 1]
  std::vector<int64_t> masked_indices;  // PE-masked patch indices in token order
  int64_t t_total = 0;                  // normalizing length in samples

  int64_t n_masked() const { return static_cast<int64_t>(masked_indices.size()); }
};

// theta[a, b] = (t_a - t_b) / t_total over the PE-masked patches, constructed
// exactly anti-symmetric (upper triangle computed, lower negated, zero
// diagonal). Requires at least two PE-masked patches.
ShiftTargets compute_shift_targets(const PatchSet& ps, int64_t t_total);

// All n_m^2 ordered index pairs, diagonal included, in row-major order. This
// is exactly the set of pairs supervised by the loss, in the order the pair
// embeddings are built.
std::vector<std::pair<int64_t, int64_t>> pair_index_list(int64_t n_masked);
std::vector<std::pair<int64_t, int64_t>> pair_index_list(const ShiftTargets& t);

}  // namespace pars
