#include "pars/params.hpp"

#include "pars/error.hpp"

namespace pars::nn {

namespace {
int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}
}  // namespace

ParamEntry& ParameterStore::create(const std::string& name, std::vector<int64_t> shape) {
  if (contains(name)) throw InvalidInput("parameter already exists: " + name);
  ParamEntry e;
  e.shape = std::move(shape);
  e.value.assign(static_cast<size_t>(shape_numel(e.shape)), 0.0f);
  order_.push_back(name);
  return map_.emplace(name, std::move(e)).first->second;
}

ParamEntry& ParameterStore::at(const std::string& name) {
  auto it = map_.find(name);
  if (it == map_.end()) throw InvalidInput("unknown parameter: " + name);
  return it->second;
}

const ParamEntry& ParameterStore::at(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw InvalidInput("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParameterStore::names_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const std::string& n : order_)
    if (n.rfind(prefix, 0) == 0) out.push_back(n);
  return out;
}

int64_t ParameterStore::total_params(std::string_view prefix) const {
  int64_t total = 0;
  for (const std::string& n : order_)
    if (n.rfind(prefix, 0) == 0) total += at(n).numel();
  return total;
}

void ParameterStore::zero_grads() {
  for (const std::string& n : order_) at(n).grad.clear();
}

void ParameterStore::add_grad(const std::string& name, const Tensor& g) {
  ParamEntry& e = at(name);
  if (g.numel() != e.numel()) throw InvalidInput("gradient shape mismatch for " + name);
  if (e.grad.empty()) e.grad.assign(static_cast<size_t>(e.numel()), 0.0);
  for (int64_t i = 0; i < g.numel(); ++i) e.grad[static_cast<size_t>(i)] += g[i];
}

Tensor ParameterStore::value_as_tensor(const std::string& name) const {
  const ParamEntry& e = at(name);
  Tensor t(e.shape);
  for (int64_t i = 0; i < e.numel(); ++i) t[i] = static_cast<double>(e.value[static_cast<size_t>(i)]);
  return t;
}

void ParameterStore::set_value(const std::string& name, const Tensor& t) {
  ParamEntry& e = at(name);
  if (t.numel() != e.numel()) throw InvalidInput("set_value shape mismatch for " + name);
  for (int64_t i = 0; i < t.numel(); ++i) e.value[static_cast<size_t>(i)] = static_cast<float>(t[i]);
}

void init_truncated_normal(ParameterStore& store, const std::string& name,
                           std::vector<int64_t> shape, Rng& rng, double stddev) {
  ParamEntry& e = store.create(name, std::move(shape));
  for (float& v : e.value) v = static_cast<float>(rng.truncated_normal(stddev));
}

void init_constant(ParameterStore& store, const std::string& name,
                   std::vector<int64_t> shape, double value) {
  ParamEntry& e = store.create(name, std::move(shape));
  for (float& v : e.value) v = static_cast<float>(value);
}

}  // namespace pars::nn
