#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pars/rng.hpp"
#include "pars/tensor.hpp"

namespace pars::nn {

// One named parameter. Master values and optimizer moments are float32 (the
// checkpoint format is a float32 blob, and keeping the in-memory state at the
// same width makes save/resume bit-exact). Gradients accumulate in double.
struct ParamEntry {
  std::vector<int64_t> shape;
  std::vector<float> value;
  std::vector<double> grad;          // empty until first accumulation
  std::vector<float> adam_m, adam_v; // empty until the optimizer touches it

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  bool has_grad() const { return !grad.empty(); }
};

// Ordered collection of named parameters. Iteration follows insertion order,
// which fixes the optimizer update and serialization order.
class ParameterStore {
 public:
  bool contains(const std::string& name) const { return map_.count(name) != 0; }
  ParamEntry& create(const std::string& name, std::vector<int64_t> shape);
  ParamEntry& at(const std::string& name);
  const ParamEntry& at(const std::string& name) const;

  const std::vector<std::string>& names() const { return order_; }
  std::vector<std::string> names_with_prefix(std::string_view prefix) const;
  int64_t total_params(std::string_view prefix = "") const;

  void zero_grads();
  void add_grad(const std::string& name, const Tensor& g);

  Tensor value_as_tensor(const std::string& name) const;
  void set_value(const std::string& name, const Tensor& t);

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, ParamEntry> map_;
};

// Initialization helpers (conventional transformer defaults).
void init_truncated_normal(ParameterStore& store, const std::string& name,
                           std::vector<int64_t> shape, Rng& rng,
                           double stddev = 0.02);
void init_constant(ParameterStore& store, const std::string& name,
                   std::vector<int64_t> shape, double value);

}  // namespace pars::nn
