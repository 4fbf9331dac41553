#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "pars/baselines.hpp"
#include "pars/error.hpp"
#include "pars/layers.hpp"
#include "pars/optim.hpp"
#include "pars/pretext_pars.hpp"
#include "pars/shift_targets.hpp"
#include "pars/signal.hpp"

using namespace pars;
using testutil::noise_seq;
using testutil::set_param_random;

namespace {

// Hand-built patch set with explicit starts and mask flags; patch content is a
// ramp so shuffles are detectable.
PatchSet manual_patchset(const std::vector<int64_t>& starts, const std::vector<uint8_t>& masked,
                         int64_t patch_len, int64_t source_len) {
  PatchSet ps;
  ps.source_length = source_len;
  ps.start_times = starts;
  ps.pe_masked = masked;
  for (size_t i = 0; i < starts.size(); ++i) {
    std::vector<double> p(static_cast<size_t>(patch_len));
    for (int64_t j = 0; j < patch_len; ++j)
      p[static_cast<size_t>(j)] = static_cast<double>(starts[i] + j);
    ps.patches.push_back(std::move(p));
  }
  return ps;
}

nn::EncoderConfig toy_encoder() {
  nn::EncoderConfig cfg;
  cfg.patch_len = 10;
  cfg.d_model = 16;
  cfg.n_blocks = 2;
  cfg.n_heads = 2;
  cfg.ff_hidden = 16;
  return cfg;
}

ParsConfig toy_pars(ParsDecoder decoder = ParsDecoder::kCrossAttention) {
  ParsConfig cfg;
  cfg.encoder = toy_encoder();
  cfg.n_patches = 6;
  cfg.gamma_pos = 0.8;  // round(0.8 * 6) = 5 masked
  cfg.window_len = 100;
  cfg.decoder = decoder;
  cfg.mlp_hidden = 32;
  return cfg;
}

MultiChannelWindow toy_window(uint64_t seed, int64_t len = 100, int64_t channels = 1) {
  MultiChannelWindow w;
  Rng rng(seed);
  for (int64_t c = 0; c < channels; ++c)
    w.channels.push_back(noise_seq(len, 100.0, rng));
  w.subject_id = "s00";
  return w;
}

}  // namespace

// --- shift targets ---------------------------------------------------------------

TEST_CASE("shift targets hand example") {
  PatchSet ps = manual_patchset({0, 2000, 4000}, {1, 1, 1}, 200, 6000);
  ShiftTargets t = compute_shift_targets(ps, 6000);
  REQUIRE(t.n_masked() == 3);
  CHECK(t.theta.at(0, 0) == 0.0);
  CHECK(t.theta.at(0, 1) == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
  CHECK(t.theta.at(0, 2) == doctest::Approx(-2.0 / 3.0).epsilon(1e-15));
  CHECK(t.theta.at(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(t.t_total == 6000);
  CHECK(t.masked_indices == std::vector<int64_t>{0, 1, 2});
}

TEST_CASE("shift targets match a brute-force oracle on random patch sets") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t t_total = 500 + rng.uniform_int(0, 1500);
    const int64_t m = 20;
    const int64_t n = 3 + rng.uniform_int(0, 5);
    std::vector<int64_t> starts;
    std::vector<uint8_t> masked;
    int64_t n_masked = 0;
    for (int64_t i = 0; i < n; ++i) {
      starts.push_back(rng.uniform_int(0, t_total - m));
      masked.push_back(static_cast<uint8_t>(rng.uniform_int(0, 1)));
      n_masked += masked.back();
    }
    if (n_masked < 2) {
      masked[0] = masked[1] = 1;
    }
    PatchSet ps = manual_patchset(starts, masked, m, t_total);
    ShiftTargets t = compute_shift_targets(ps, t_total);

    // Independent double loop straight over the masked timestamps.
    std::vector<int64_t> idx = ps.masked_indices();
    REQUIRE(t.masked_indices == idx);
    for (size_t a = 0; a < idx.size(); ++a)
      for (size_t b = 0; b < idx.size(); ++b) {
        double want = static_cast<double>(starts[static_cast<size_t>(idx[a])] -
                                          starts[static_cast<size_t>(idx[b])]) /
                      static_cast<double>(t_total);
        CHECK(t.theta.at(static_cast<int64_t>(a), static_cast<int64_t>(b)) == want);
      }

    // Exact anti-symmetry and bounds.
    for (int64_t a = 0; a < t.n_masked(); ++a) {
      CHECK(t.theta.at(a, a) == 0.0);
      for (int64_t b = 0; b < t.n_masked(); ++b) {
        CHECK(t.theta.at(a, b) == -t.theta.at(b, a));
        CHECK(std::abs(t.theta.at(a, b)) < 1.0);
      }
    }
  }
}

TEST_CASE("shift targets permute with the masked-token order") {
  std::vector<int64_t> starts = {10, 400, 90, 250};
  PatchSet ps = manual_patchset(starts, {1, 1, 1, 1}, 20, 500);
  ShiftTargets base = compute_shift_targets(ps, 500);

  std::vector<int64_t> perm = {2, 0, 3, 1};
  std::vector<int64_t> p_starts;
  for (int64_t i : perm) p_starts.push_back(starts[static_cast<size_t>(i)]);
  PatchSet permuted = manual_patchset(p_starts, {1, 1, 1, 1}, 20, 500);
  ShiftTargets got = compute_shift_targets(permuted, 500);

  for (int64_t a = 0; a < 4; ++a)
    for (int64_t b = 0; b < 4; ++b)
      CHECK(got.theta.at(a, b) ==
            base.theta.at(perm[static_cast<size_t>(a)], perm[static_cast<size_t>(b)]));
}

TEST_CASE("shift targets need at least two masked patches") {
  CHECK_THROWS_AS(compute_shift_targets(manual_patchset({0, 50}, {1, 0}, 10, 100), 100),
                  InvalidInput);
  CHECK_THROWS_AS(compute_shift_targets(manual_patchset({0, 50}, {0, 0}, 10, 100), 100),
                  InvalidInput);
}

TEST_CASE("pair enumeration is row-major over ordered pairs with the diagonal") {
  SUBCASE("two masked tokens") {
    auto pairs = pair_index_list(2);
    REQUIRE(pairs.size() == 4);
    CHECK(pairs[0] == std::pair<int64_t, int64_t>{0, 0});
    CHECK(pairs[1] == std::pair<int64_t, int64_t>{0, 1});
    CHECK(pairs[2] == std::pair<int64_t, int64_t>{1, 0});
    CHECK(pairs[3] == std::pair<int64_t, int64_t>{1, 1});
  }

  SUBCASE("both orders of every off-diagonal pair appear") {
    auto pairs = pair_index_list(3);
    REQUIRE(pairs.size() == 9);
    for (int64_t a = 0; a < 3; ++a)
      for (int64_t b = 0; b < 3; ++b)
        CHECK(pairs[static_cast<size_t>(a * 3 + b)] == std::pair<int64_t, int64_t>{a, b});
  }

  SUBCASE("thirty-two masked tokens give 1024 pairs") {
    CHECK(pair_index_list(32).size() == 1024);
  }
}

// --- pars loss and forward --------------------------------------------------------

TEST_CASE("pars loss hand value and basic identities") {
  PatchSet ps = manual_patchset({0, 2000, 4000}, {1, 1, 1}, 200, 6000);
  ShiftTargets t = compute_shift_targets(ps, 6000);

  SUBCASE("zero prediction against the three-patch example") {
    // Off-diagonal targets are +/-1/3 (four entries) and +/-2/3 (two), so the
    // mean of squares over the nine ordered pairs is (4/9 + 8/9) / 9 = 12/81.
    nn::Tensor zero({3, 3});
    CHECK(pars_loss(zero, t) == doctest::Approx(12.0 / 81.0).epsilon(1e-15));
  }

  SUBCASE("perfect prediction scores zero") {
    CHECK(pars_loss(t.theta, t) == 0.0);
  }

  SUBCASE("simultaneous row and column permutation leaves the loss unchanged") {
    Rng rng(5);
    nn::Tensor pred({3, 3});
    for (int64_t i = 0; i < 9; ++i) pred[i] = rng.normal();
    double base = pars_loss(pred, t);

    std::vector<int64_t> perm = {2, 0, 1};
    PatchSet ps_perm = manual_patchset(
        {ps.start_times[2], ps.start_times[0], ps.start_times[1]}, {1, 1, 1}, 200, 6000);
    ShiftTargets t_perm = compute_shift_targets(ps_perm, 6000);
    nn::Tensor pred_perm({3, 3});
    for (int64_t a = 0; a < 3; ++a)
      for (int64_t b = 0; b < 3; ++b)
        pred_perm.at(a, b) = pred.at(perm[static_cast<size_t>(a)], perm[static_cast<size_t>(b)]);
    CHECK(pars_loss(pred_perm, t_perm) == doctest::Approx(base).epsilon(1e-12));
  }

  SUBCASE("shape mismatch rejected") {
    nn::Tensor wrong({2, 2});
    CHECK_THROWS_AS(pars_loss(wrong, t), InvalidInput);
  }
}

TEST_CASE("pars config counts and validation") {
  ParsConfig cfg = toy_pars();
  CHECK(cfg.n_masked() == 5);

  ParsConfig paper;
  paper.n_patches = 40;
  paper.gamma_pos = 0.8;
  CHECK(paper.n_masked() == 32);

  ParsConfig bad = toy_pars();
  bad.gamma_pos = 0.1;  // round(0.6) < 2 supervised tokens
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = toy_pars();
  bad.gamma_pos = 1.5;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = toy_pars();
  bad.window_len = 5;  // shorter than one patch
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("pars model namespaces per decoder") {
  ParsConfig cfg = toy_pars();
  nn::ParameterStore cross;
  Rng r1(7);
  register_pars_model(cross, cfg, r1);
  CHECK(!cross.names_with_prefix("encoder.").empty());
  CHECK(cross.contains("pe.mask_token"));
  CHECK(cross.contains("pars.dec.a_q"));
  CHECK(cross.contains("pars.dec.out.weight"));
  CHECK(cross.names_with_prefix("pars.mlp.").empty());

  nn::ParameterStore mlp;
  Rng r2(7);
  register_pars_model(mlp, toy_pars(ParsDecoder::kPairwiseMlp), r2);
  CHECK(mlp.contains("pars.mlp.fc1.weight"));
  CHECK(mlp.contains("pars.mlp.fc2.weight"));
  CHECK(mlp.names_with_prefix("pars.dec.").empty());
}

TEST_CASE("pars forward: shapes, self-consistency, and sane starting loss") {
  ParsConfig cfg = toy_pars();
  nn::ParameterStore store;
  Rng rng(8);
  register_pars_model(store, cfg, rng);

  Rng data_rng(9);
  Sequence seq = noise_seq(cfg.window_len, 100.0, data_rng);
  Rng sample_rng(10);
  PatchSet ps = sample_patches_random(seq, cfg.n_patches, cfg.encoder.patch_len, cfg.gamma_pos,
                                      sample_rng);

  nn::Graph g(&store);
  ParsForward fwd = pars_forward(g, cfg, ps);
  REQUIRE(fwd.theta_hat.rows() == 5);
  REQUIRE(fwd.theta_hat.cols() == 5);

  // The graph's reduction agrees with the reference-path loss.
  CHECK(fwd.loss.scalar() == doctest::Approx(pars_loss(fwd.theta_hat, fwd.targets)).epsilon(1e-12));

  // Freshly initialized decoder output stays near zero, so the loss sits
  // near the target second moment and strictly below one.
  CHECK(fwd.loss.scalar() > 0.0);
  CHECK(fwd.loss.scalar() < 1.0);
  double mean_abs = 0.0;
  for (int64_t i = 0; i < fwd.theta_hat.numel(); ++i) mean_abs += std::abs(fwd.theta_hat[i]);
  mean_abs /= static_cast<double>(fwd.theta_hat.numel());
  CHECK(mean_abs < 0.5);

  SUBCASE("cross-attention decoder records one weight matrix per head") {
    CHECK(fwd.decoder_attention.head_weights.size() ==
          static_cast<size_t>(cfg.encoder.n_heads));
    // Keys and values cover every sampled patch, masked or not.
    CHECK(fwd.decoder_attention.head_weights[0].cols() == cfg.n_patches);
    CHECK(fwd.decoder_attention.head_weights[0].rows() == 25);
  }
}

TEST_CASE("pars loss is invariant to token order for fixed parameters") {
  ParsConfig cfg = toy_pars();
  nn::ParameterStore store;
  Rng rng(11);
  register_pars_model(store, cfg, rng);

  Rng data_rng(12);
  Sequence seq = noise_seq(cfg.window_len, 100.0, data_rng);
  Rng sample_rng(13);
  PatchSet ps = sample_patches_random(seq, cfg.n_patches, cfg.encoder.patch_len, cfg.gamma_pos,
                                      sample_rng);

  PatchSet shuffled;
  shuffled.source_length = ps.source_length;
  std::vector<int64_t> perm = {4, 1, 5, 0, 3, 2};
  for (int64_t i : perm) {
    shuffled.patches.push_back(ps.patches[static_cast<size_t>(i)]);
    shuffled.start_times.push_back(ps.start_times[static_cast<size_t>(i)]);
    shuffled.pe_masked.push_back(ps.pe_masked[static_cast<size_t>(i)]);
  }

  nn::Graph g1(&store);
  double base = pars_forward(g1, cfg, ps).loss.scalar();
  nn::Graph g2(&store);
  double permuted = pars_forward(g2, cfg, shuffled).loss.scalar();
  CHECK(testutil::rel_err(base, permuted, 1e-12) < 1e-9);
}

TEST_CASE("pairwise MLP decoder maps each pair row independently") {
  ParsConfig cfg = toy_pars(ParsDecoder::kPairwiseMlp);
  nn::ParameterStore store;
  Rng rng(14);
  register_pars_model(store, cfg, rng);
  Rng init(15);
  set_param_random(store, "y_pairs", {4, 2 * cfg.encoder.d_model}, init);

  auto decode = [&]() {
    nn::Graph g(&store);
    nn::Value h = g.relu(nn::linear_layer(g, "pars.mlp.fc1", g.param("y_pairs")));
    return nn::linear_layer(g, "pars.mlp.fc2", h).tensor();
  };
  nn::Tensor before = decode();
  auto& pairs = store.at("y_pairs");
  for (int64_t j = 0; j < 2 * cfg.encoder.d_model; ++j)
    pairs.value[static_cast<size_t>(2 * 2 * cfg.encoder.d_model + j)] += 1.0f;  // bump row 2
  nn::Tensor after = decode();
  CHECK(after.at(0, 0) == before.at(0, 0));
  CHECK(after.at(1, 0) == before.at(1, 0));
  CHECK(after.at(2, 0) != before.at(2, 0));
  CHECK(after.at(3, 0) == before.at(3, 0));
}

TEST_CASE("gradient checks: both pretext decoders end to end") {
  Rng data_rng(16);
  Sequence seq = noise_seq(100, 100.0, data_rng);

  for (ParsDecoder dec : {ParsDecoder::kCrossAttention, ParsDecoder::kPairwiseMlp}) {
    const int decoder_id = static_cast<int>(dec);
    CAPTURE(decoder_id);
    ParsConfig cfg = toy_pars(dec);
    cfg.n_patches = 4;
    cfg.gamma_pos = 0.8;  // round(3.2) = 3 masked
    cfg.encoder.d_model = 8;
    cfg.encoder.ff_hidden = 8;
    cfg.encoder.n_blocks = 1;
    cfg.mlp_hidden = 8;

    nn::ParameterStore store;
    Rng rng(17);
    register_pars_model(store, cfg, rng);
    // Sampling seed chosen so no MLP hidden pre-activation sits within the
    // finite-difference step of the relu kink, where the quotient stops
    // approximating any derivative.
    Rng sample_rng(20);
    PatchSet ps = sample_patches_random(seq, cfg.n_patches, cfg.encoder.patch_len, cfg.gamma_pos,
                                        sample_rng);
    auto build = [&](nn::Graph& g) { return pars_forward(g, cfg, ps).loss; };
    CHECK(testutil::max_grad_rel_error(store, build, store.names()) < 1e-3);
  }
}

TEST_CASE("step-input sampling honors the config and the generator") {
  ParsConfig cfg = toy_pars();
  MultiChannelWindow w = toy_window(20, 140, 2);  // longer than the window, two channels

  Rng r1(21), r2(21);
  PatchSet a = pars_sample_step_input(w, cfg, r1);
  PatchSet b = pars_sample_step_input(w, cfg, r2);
  CHECK(a.n() == cfg.n_patches);
  CHECK(a.patch_len() == cfg.encoder.patch_len);
  CHECK(a.n_masked() == cfg.n_masked());
  CHECK(a.source_length == cfg.window_len);
  CHECK(a.start_times == b.start_times);
  CHECK(a.pe_masked == b.pe_masked);

  Rng r3(22);
  PatchSet c = pars_sample_step_input(w, cfg, r3);
  CHECK(a.start_times != c.start_times);
}

TEST_CASE("pars training steps reduce the loss on a fixed toy batch") {
  ParsConfig cfg = toy_pars();
  nn::ParameterStore store;
  Rng init_rng(23);
  register_pars_model(store, cfg, init_rng);
  nn::AdamWConfig ocfg;
  ocfg.lr = 3e-3;
  ocfg.weight_decay = 0.0;
  nn::AdamW optim(store, ocfg);

  std::vector<MultiChannelWindow> windows;
  for (uint64_t s = 0; s < 4; ++s) windows.push_back(toy_window(30 + s));
  std::vector<const MultiChannelWindow*> batch;
  for (const auto& w : windows) batch.push_back(&w);

  Rng train_rng(24);
  std::vector<double> losses;
  for (int step = 0; step < 40; ++step) {
    nn::StepResult r = pars_training_step(store, optim, cfg, batch, train_rng);
    REQUIRE(r.stepped);
    losses.push_back(r.loss);
  }
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 5; ++i) {
    head += losses[static_cast<size_t>(i)] / 5.0;
    tail += losses[losses.size() - 1 - static_cast<size_t>(i)] / 5.0;
  }
  CHECK(tail < head);
}

TEST_CASE("eval loss is deterministic and leaves parameters untouched") {
  ParsConfig cfg = toy_pars();
  nn::ParameterStore store;
  Rng init_rng(25);
  register_pars_model(store, cfg, init_rng);

  MultiChannelWindow w = toy_window(26);
  std::vector<const MultiChannelWindow*> batch = {&w};

  std::vector<std::vector<float>> before;
  for (const auto& name : store.names()) before.push_back(store.at(name).value);

  Rng r1(27), r2(27);
  double e1 = pars_eval_loss(store, cfg, batch, r1);
  double e2 = pars_eval_loss(store, cfg, batch, r2);
  CHECK(e1 == e2);

  size_t i = 0;
  for (const auto& name : store.names()) CHECK(store.at(name).value == before[i++]);
}

// --- baselines ---------------------------------------------------------------------

TEST_CASE("baseline configs count their grids") {
  MaeConfig mae;
  mae.encoder = toy_encoder();
  mae.window_len = 100;
  CHECK(mae.grid_patches() == 10);
  CHECK(mae.n_masked() == 5);
  mae.mask_ratio = 0.0;
  CHECK_THROWS_AS(mae.validate(), InvalidInput);

  Mp3Config mp3;
  mp3.encoder = toy_encoder();
  mp3.window_len = 100;
  CHECK(mp3.grid_patches() == 10);
  mp3.kv_mask_ratio = 0.99;  // would hide every token
  CHECK_THROWS_AS(mp3.validate(), InvalidInput);

  DropPosConfig dp;
  dp.encoder = toy_encoder();
  dp.window_len = 100;
  dp.mask_ratio = 0.5;
  dp.pos_drop_ratio = 0.8;
  CHECK(dp.n_kept() == 5);
  CHECK(dp.n_supervised() == 4);
  dp.pos_drop_ratio = 0.0;
  CHECK_THROWS_AS(dp.validate(), InvalidInput);
}

TEST_CASE("grid input is normalized fixed-stride patching") {
  MultiChannelWindow w = toy_window(40, 130, 3);
  Rng rng(41);
  PatchSet ps = baseline_grid_input(w, toy_encoder(), 100, rng);
  REQUIRE(ps.n() == 10);
  CHECK(ps.n_masked() == 0);
  for (int64_t i = 0; i < ps.n(); ++i) CHECK(ps.start_times[static_cast<size_t>(i)] == i * 10);
  double sum = 0.0;
  for (const auto& p : ps.patches)
    for (double v : p) sum += v;
  CHECK(std::abs(sum / 100.0) < 1e-6);  // instance-normalized source
}

TEST_CASE("mae forward reconstructs shapes and honors the loss flag") {
  MaeConfig cfg;
  cfg.encoder = toy_encoder();
  cfg.window_len = 100;
  nn::ParameterStore store;
  Rng rng(42);
  register_mae_model(store, cfg, rng);

  MultiChannelWindow w = toy_window(43);
  Rng data_rng(44);
  PatchSet ps = baseline_grid_input(w, cfg.encoder, cfg.window_len, data_rng);
  std::vector<int64_t> masked = {1, 3, 4, 7, 8};

  nn::Graph g(&store);
  MaeForward fwd = mae_forward(g, cfg, ps, masked);
  CHECK(fwd.loss.scalar() == doctest::Approx(fwd.full_mse).epsilon(1e-9));
  CHECK(fwd.full_mse > 0.0);
  CHECK(fwd.visible_mse > 0.0);
  CHECK(fwd.masked_mse > 0.0);

  SUBCASE("masked-only variant scores only the hidden patches") {
    cfg.masked_loss_only = true;
    nn::Graph g2(&store);
    MaeForward fwd2 = mae_forward(g2, cfg, ps, masked);
    CHECK(fwd2.loss.scalar() == doctest::Approx(fwd2.masked_mse).epsilon(1e-9));
  }

  SUBCASE("masking everything is rejected") {
    std::vector<int64_t> all = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    nn::Graph g3(&store);
    CHECK_THROWS_AS(mae_forward(g3, cfg, ps, all), InvalidInput);
  }

  SUBCASE("training step runs") {
    nn::AdamW optim(store, nn::AdamWConfig{});
    std::vector<const MultiChannelWindow*> batch = {&w};
    Rng step_rng(45);
    nn::StepResult r = mae_step(store, optim, cfg, batch, step_rng);
    CHECK(r.stepped);
    CHECK(std::isfinite(r.loss));
  }
}

TEST_CASE("mp3 forward classifies positions, starting from the uniform baseline") {
  Mp3Config cfg;
  cfg.encoder = toy_encoder();
  cfg.window_len = 100;
  nn::ParameterStore store;
  Rng rng(46);
  register_mp3_model(store, cfg, rng);

  MultiChannelWindow w = toy_window(47);
  Rng data_rng(48);
  PatchSet ps = baseline_grid_input(w, cfg.encoder, cfg.window_len, data_rng);
  shuffle_patches(ps, data_rng);
  std::vector<uint8_t> kv_keep(10, 1);
  kv_keep[2] = kv_keep[6] = 0;

  nn::Graph g(&store);
  PositionForward fwd = mp3_forward(g, cfg, ps, kv_keep);
  CHECK(fwd.n_scored == 10);
  CHECK(fwd.accuracy >= 0.0);
  CHECK(fwd.accuracy <= 1.0);
  // Near-zero head weights at initialization give near-uniform logits.
  CHECK(std::abs(fwd.loss.scalar() - std::log(10.0)) < 0.1 * std::log(10.0));

  SUBCASE("training step runs") {
    nn::AdamW optim(store, nn::AdamWConfig{});
    std::vector<const MultiChannelWindow*> batch = {&w};
    Rng step_rng(49);
    nn::StepResult r = mp3_step(store, optim, cfg, batch, step_rng);
    CHECK(r.stepped);
  }
}

TEST_CASE("droppos forward scores exactly the position-dropped tokens") {
  DropPosConfig cfg;
  cfg.encoder = toy_encoder();
  cfg.window_len = 100;
  cfg.mask_ratio = 0.5;
  cfg.pos_drop_ratio = 0.8;
  nn::ParameterStore store;
  Rng rng(50);
  register_droppos_model(store, cfg, rng);

  MultiChannelWindow w = toy_window(51);
  Rng data_rng(52);
  PatchSet grid = baseline_grid_input(w, cfg.encoder, cfg.window_len, data_rng);
  // Keep five grid slots, then withhold the position of four of them.
  PatchSet kept;
  kept.source_length = grid.source_length;
  for (int64_t i : {0, 2, 5, 8, 9}) {
    kept.patches.push_back(grid.patches[static_cast<size_t>(i)]);
    kept.start_times.push_back(grid.start_times[static_cast<size_t>(i)]);
    kept.pe_masked.push_back(0);
  }
  assign_pe_mask(kept, cfg.pos_drop_ratio, data_rng);
  REQUIRE(kept.n_masked() == 4);

  nn::Graph g(&store);
  PositionForward fwd = droppos_forward(g, cfg, kept);
  CHECK(fwd.n_scored == 4);
  CHECK(std::abs(fwd.loss.scalar() - std::log(10.0)) < 0.1 * std::log(10.0));

  SUBCASE("training step runs") {
    nn::AdamW optim(store, nn::AdamWConfig{});
    std::vector<const MultiChannelWindow*> batch = {&w};
    Rng step_rng(53);
    nn::StepResult r = droppos_step(store, optim, cfg, batch, step_rng);
    CHECK(r.stepped);
  }
}

TEST_CASE("every pretext task pretrains the identical encoder namespace") {
  nn::EncoderConfig enc = toy_encoder();
  Rng r1(60), r2(60), r3(60), r4(60);

  nn::ParameterStore pars_store;
  ParsConfig pc = toy_pars();
  register_pars_model(pars_store, pc, r1);

  nn::ParameterStore mae_store;
  MaeConfig mc;
  mc.encoder = enc;
  mc.window_len = 100;
  register_mae_model(mae_store, mc, r2);

  nn::ParameterStore mp3_store;
  Mp3Config p3;
  p3.encoder = enc;
  p3.window_len = 100;
  register_mp3_model(mp3_store, p3, r3);

  nn::ParameterStore dp_store;
  DropPosConfig dp;
  dp.encoder = enc;
  dp.window_len = 100;
  register_droppos_model(dp_store, dp, r4);

  auto enc_names = pars_store.names_with_prefix("encoder.");
  CHECK(enc_names == mae_store.names_with_prefix("encoder."));
  CHECK(enc_names == mp3_store.names_with_prefix("encoder."));
  CHECK(enc_names == dp_store.names_with_prefix("encoder."));
  for (const auto& name : enc_names) {
    CHECK(mae_store.at(name).shape == pars_store.at(name).shape);
    CHECK(mp3_store.at(name).shape == pars_store.at(name).shape);
    CHECK(dp_store.at(name).shape == pars_store.at(name).shape);
  }
}
