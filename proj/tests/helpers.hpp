#pragma once

// Shared test utilities: scratch directories, signal builders, and the
// central-difference gradient checker used by every gradient test.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pars/graph.hpp"
#include "pars/params.hpp"
#include "pars/rng.hpp"
#include "pars/signal.hpp"
#include "pars/tensor.hpp"

namespace testutil {

// Unique scratch directory, removed when the test scope ends.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<uint64_t> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("pars_test_" + std::to_string(counter.fetch_add(1)) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }

  std::string str() const { return path.string(); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

inline pars::Sequence make_seq(std::vector<double> samples, double rate_hz,
                               std::string channel = "c0") {
  pars::Sequence s;
  s.samples = std::move(samples);
  s.sample_rate_hz = rate_hz;
  s.channel_id = std::move(channel);
  return s;
}

inline pars::Sequence sine_seq(double hz, double rate_hz, int64_t len, double amp = 1.0,
                               double phase = 0.0) {
  std::vector<double> v(static_cast<size_t>(len));
  for (int64_t i = 0; i < len; ++i)
    v[static_cast<size_t>(i)] =
        amp * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / rate_hz + phase);
  return make_seq(std::move(v), rate_hz);
}

inline pars::Sequence noise_seq(int64_t len, double rate_hz, pars::Rng& rng, double std_dev = 1.0) {
  std::vector<double> v(static_cast<size_t>(len));
  for (auto& x : v) x = std_dev * rng.normal();
  return make_seq(std::move(v), rate_hz);
}

inline double rms(const std::vector<double>& v, size_t begin = 0, size_t end = SIZE_MAX) {
  end = std::min(end, v.size());
  double acc = 0.0;
  for (size_t i = begin; i < end; ++i) acc += v[i] * v[i];
  return std::sqrt(acc / static_cast<double>(end - begin));
}

// Magnitude of the filter's frequency response at hz, straight from the taps.
inline double fir_response(const std::vector<double>& taps, double hz, double rate_hz) {
  double re = 0.0, im = 0.0;
  double w = 2.0 * M_PI * hz / rate_hz;
  for (size_t k = 0; k < taps.size(); ++k) {
    re += taps[k] * std::cos(w * static_cast<double>(k));
    im -= taps[k] * std::sin(w * static_cast<double>(k));
  }
  return std::sqrt(re * re + im * im);
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  size_t n = std::min(a.size(), b.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Relative disagreement with a floor so near-zero pairs compare absolutely.
inline double rel_err(double a, double b, double floor_val = 1e-3) {
  return std::abs(a - b) / std::max({floor_val, std::abs(a), std::abs(b)});
}

// Central-difference gradient check over every entry of the named parameters.
// build must construct the same scalar loss from the current store contents on
// every call. Perturbations use the exactly-realized float32 spacing, so the
// quotient has no endpoint rounding error. Returns the worst relative
// disagreement across all checked entries.
inline double max_grad_rel_error(pars::nn::ParameterStore& store,
                                 const std::function<pars::nn::Value(pars::nn::Graph&)>& build,
                                 const std::vector<std::string>& names,
                                 int64_t stride = 1) {
  namespace nn = pars::nn;
  store.zero_grads();
  {
    nn::Graph g(&store);
    nn::Value loss = build(g);
    g.backward(loss);
  }
  std::map<std::string, std::vector<double>> analytic;
  for (const auto& name : names) {
    const auto& e = store.at(name);
    analytic[name] =
        e.has_grad() ? e.grad : std::vector<double>(static_cast<size_t>(e.numel()), 0.0);
  }

  auto eval_loss = [&]() {
    nn::Graph g(&store);
    return build(g).scalar();
  };

  const double h = 1.0 / 8192.0;  // exactly representable, large against f32 ulps
  double worst = 0.0;
  for (const auto& name : names) {
    auto& e = store.at(name);
    const auto& ga = analytic[name];
    for (int64_t i = 0; i < e.numel(); i += stride) {
      float v0 = e.value[static_cast<size_t>(i)];
      float vp = static_cast<float>(static_cast<double>(v0) + h);
      float vm = static_cast<float>(static_cast<double>(v0) - h);
      e.value[static_cast<size_t>(i)] = vp;
      double fp = eval_loss();
      e.value[static_cast<size_t>(i)] = vm;
      double fm = eval_loss();
      e.value[static_cast<size_t>(i)] = v0;
      double numeric = (fp - fm) / (static_cast<double>(vp) - static_cast<double>(vm));
      worst = std::max(worst, rel_err(ga[static_cast<size_t>(i)], numeric));
    }
  }
  return worst;
}

// Registers a free-standing tensor parameter with explicit values.
inline void set_param(pars::nn::ParameterStore& store, const std::string& name,
                      std::vector<int64_t> shape, const std::vector<double>& values) {
  if (!store.contains(name)) store.create(name, shape);
  auto& e = store.at(name);
  for (size_t i = 0; i < values.size(); ++i) e.value[i] = static_cast<float>(values[i]);
}

inline void set_param_random(pars::nn::ParameterStore& store, const std::string& name,
                             std::vector<int64_t> shape, pars::Rng& rng, double scale = 0.5) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = scale * rng.normal();
  set_param(store, name, std::move(shape), v);
}

}  // namespace testutil
