// Microbenchmarks over the hot paths: patch sampling and shift targets,
// encoder forward at several token counts, full pretext steps, and the
// optimizer update.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "pars/graph.hpp"
#include "pars/layers.hpp"
#include "pars/optim.hpp"
#include "pars/pretext_pars.hpp"
#include "pars/rng.hpp"
#include "pars/shift_targets.hpp"
#include "pars/signal.hpp"

namespace {

using namespace pars;

nn::EncoderConfig bench_encoder(int64_t d_model) {
  nn::EncoderConfig enc;
  enc.patch_len = 50;
  enc.d_model = d_model;
  enc.n_blocks = 2;
  enc.n_heads = 4;
  enc.ff_hidden = d_model;
  return enc;
}

Sequence noise(int64_t len, uint64_t seed) {
  Rng rng(seed);
  Sequence s;
  s.sample_rate_hz = 100.0;
  s.samples.resize(static_cast<size_t>(len));
  for (auto& x : s.samples) x = rng.normal();
  return s;
}

void bm_shift_targets(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(1);
  Sequence seq = noise(6000, 2);
  PatchSet ps = sample_patches_random(seq, n, 200, 0.8, rng);
  for (auto _ : state) {
    ShiftTargets t = compute_shift_targets(ps, seq.length());
    benchmark::DoNotOptimize(t.theta[0]);
  }
}
BENCHMARK(bm_shift_targets)->Arg(10)->Arg(40)->Arg(160);

void bm_patch_sampling(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(1);
  Sequence seq = noise(6000, 2);
  for (auto _ : state) {
    PatchSet ps = sample_patches_random(seq, n, 200, 0.8, rng);
    benchmark::DoNotOptimize(ps.start_times.data());
  }
}
BENCHMARK(bm_patch_sampling)->Arg(10)->Arg(40)->Arg(160);

void bm_encoder_forward(benchmark::State& state) {
  const int64_t n_tokens = state.range(0);
  const nn::EncoderConfig enc = bench_encoder(64);
  nn::ParameterStore store;
  Rng rng(3);
  nn::register_encoder(store, enc, rng);
  Sequence seq = noise(n_tokens * enc.patch_len, 4);
  PatchSet ps = sample_patches_fixed(seq, enc.patch_len, enc.patch_len);
  for (auto _ : state) {
    nn::Graph g(&store);
    nn::Value out = nn::encode_patchset(g, enc, ps);
    benchmark::DoNotOptimize(out.tensor()[0]);
  }
}
BENCHMARK(bm_encoder_forward)->Arg(8)->Arg(16)->Arg(40);

void bm_attention_layer(benchmark::State& state) {
  const int64_t n_tokens = state.range(0);
  const int64_t d = 64;
  nn::ParameterStore store;
  Rng rng(5);
  nn::register_attention(store, "attn", d, rng);
  store.create("x", {n_tokens, d});
  {
    auto& e = store.at("x");
    Rng xr(6);
    for (auto& v : e.value) v = static_cast<float>(xr.normal());
  }
  for (auto _ : state) {
    nn::Graph g(&store);
    nn::Value x = g.param("x");
    nn::Value out = nn::attention_layer(g, "attn", x, x, 4);
    benchmark::DoNotOptimize(out.tensor()[0]);
  }
}
BENCHMARK(bm_attention_layer)->Arg(16)->Arg(64)->Arg(256);

void bm_pars_training_step(benchmark::State& state) {
  ParsConfig cfg;
  cfg.encoder = bench_encoder(64);
  cfg.n_patches = 8;
  cfg.gamma_pos = 0.8;
  cfg.window_len = 400;
  nn::ParameterStore store;
  Rng init(7);
  register_pars_model(store, cfg, init);
  nn::AdamWConfig ocfg;
  ocfg.lr = 1e-4;
  nn::AdamW optim(store, ocfg);

  std::vector<MultiChannelWindow> windows(4);
  for (size_t i = 0; i < windows.size(); ++i) {
    windows[i].channels.push_back(noise(400, 10 + i));
    windows[i].subject_id = "s" + std::to_string(i);
  }
  std::vector<const MultiChannelWindow*> batch;
  for (const auto& w : windows) batch.push_back(&w);

  Rng rng(8);
  for (auto _ : state) {
    nn::StepResult r = pars_training_step(store, optim, cfg, batch, rng);
    benchmark::DoNotOptimize(r.loss);
  }
}
BENCHMARK(bm_pars_training_step)->Unit(benchmark::kMillisecond);

void bm_adamw_update(benchmark::State& state) {
  nn::ParameterStore store;
  Rng rng(9);
  nn::register_encoder(store, bench_encoder(64), rng);
  for (const auto& name : store.names()) {
    auto& e = store.at(name);
    e.grad.assign(static_cast<size_t>(e.numel()), 1e-3);
  }
  nn::AdamWConfig ocfg;
  ocfg.lr = 1e-4;
  nn::AdamW optim(store, ocfg);
  for (auto _ : state) {
    for (const auto& name : store.names()) {
      auto& e = store.at(name);
      e.grad.assign(static_cast<size_t>(e.numel()), 1e-3);
    }
    bool ok = optim.step();
    benchmark::DoNotOptimize(ok);
  }
}
BENCHMARK(bm_adamw_update)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
