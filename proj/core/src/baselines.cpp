#include "pars/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "pars/error.hpp"

namespace pars {

using nn::Graph;
using nn::Tensor;
using nn::Value;

namespace {

int64_t grid_count(int64_t window_len, int64_t patch_len) {
  if (window_len < patch_len) throw InvalidInput("baseline: window shorter than one patch");
  return (window_len - patch_len) / patch_len + 1;
}

PatchSet take_rows(const PatchSet& ps, const std::vector<int64_t>& rows) {
  PatchSet out;
  out.source_length = ps.source_length;
  out.patches.reserve(rows.size());
  out.start_times.reserve(rows.size());
  out.pe_masked.reserve(rows.size());
  for (int64_t r : rows) {
    out.patches.push_back(ps.patches[static_cast<size_t>(r)]);
    out.start_times.push_back(ps.start_times[static_cast<size_t>(r)]);
    out.pe_masked.push_back(ps.pe_masked[static_cast<size_t>(r)]);
  }
  return out;
}

std::vector<int64_t> sorted_sample(Rng& rng, int64_t n, int64_t k) {
  std::vector<int64_t> s = rng.sample_without_replacement(n, k);
  std::sort(s.begin(), s.end());
  return s;
}

std::vector<int64_t> complement_of(const std::vector<int64_t>& chosen, int64_t n) {
  std::vector<std::uint8_t> in(static_cast<size_t>(n), 0);
  for (int64_t c : chosen) in[static_cast<size_t>(c)] = 1;
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(n) - chosen.size());
  for (int64_t i = 0; i < n; ++i)
    if (!in[static_cast<size_t>(i)]) out.push_back(i);
  return out;
}

std::vector<int> grid_labels(const PatchSet& ps, int64_t patch_len) {
  std::vector<int> labels(static_cast<size_t>(ps.n()));
  for (int64_t i = 0; i < ps.n(); ++i) {
    const int64_t t = ps.start_times[static_cast<size_t>(i)];
    if (t % patch_len != 0) throw InvalidInput("baseline: patch start is off the fixed grid");
    labels[static_cast<size_t>(i)] = static_cast<int>(t / patch_len);
  }
  return labels;
}

double row_subset_mse(const Tensor& pred, const Tensor& target, const std::vector<int64_t>& rows) {
  if (rows.empty()) return 0.0;
  double acc = 0.0;
  for (int64_t r : rows)
    for (int64_t j = 0; j < pred.cols(); ++j) {
      const double d = pred.at(r, j) - target.at(r, j);
      acc += d * d;
    }
  return acc / static_cast<double>(rows.size() * pred.cols());
}

template <typename Forward>
nn::StepResult run_step(nn::ParameterStore& store, nn::AdamW& optim,
                        const std::vector<const MultiChannelWindow*>& batch, Forward&& forward) {
  if (batch.empty()) throw InvalidInput("training step: empty batch");
  Graph g(&store);
  std::vector<Value> losses;
  losses.reserve(batch.size());
  for (const MultiChannelWindow* w : batch) losses.push_back(forward(g, *w));
  Value loss = g.mean_scalars(losses);
  store.zero_grads();
  g.backward(loss);
  nn::StepResult result;
  result.loss = loss.scalar();
  result.stepped = optim.step(&result.diagnostic);
  return result;
}

}  // namespace

int64_t MaeConfig::grid_patches() const { return grid_count(window_len, encoder.patch_len); }
int64_t MaeConfig::n_masked() const {
  return static_cast<int64_t>(std::llround(mask_ratio * static_cast<double>(grid_patches())));
}

void MaeConfig::validate() const {
  encoder.validate();
  if (mask_ratio <= 0.0 || mask_ratio >= 1.0) throw InvalidInput("mae: mask_ratio must lie in (0, 1)");
  if (grid_patches() - n_masked() < 1) throw InvalidInput("mae: no visible patches at this mask_ratio");
}

int64_t Mp3Config::grid_patches() const { return grid_count(window_len, encoder.patch_len); }

void Mp3Config::validate() const {
  encoder.validate();
  if (kv_mask_ratio < 0.0 || kv_mask_ratio >= 1.0)
    throw InvalidInput("mp3: kv_mask_ratio must lie in [0, 1)");
  const int64_t n = grid_patches();
  if (n - static_cast<int64_t>(std::llround(kv_mask_ratio * static_cast<double>(n))) < 1)
    throw InvalidInput("mp3: every token would be hidden from keys and values");
}

int64_t DropPosConfig::grid_patches() const { return grid_count(window_len, encoder.patch_len); }
int64_t DropPosConfig::n_kept() const {
  const int64_t n = grid_patches();
  return n - static_cast<int64_t>(std::llround(mask_ratio * static_cast<double>(n)));
}
int64_t DropPosConfig::n_supervised() const {
  return static_cast<int64_t>(std::llround(pos_drop_ratio * static_cast<double>(n_kept())));
}

void DropPosConfig::validate() const {
  encoder.validate();
  if (mask_ratio < 0.0 || mask_ratio >= 1.0)
    throw InvalidInput("droppos: mask_ratio must lie in [0, 1)");
  if (pos_drop_ratio < 0.0 || pos_drop_ratio > 1.0)
    throw InvalidInput("droppos: pos_drop_ratio must lie in [0, 1]");
  if (n_kept() < 1) throw InvalidInput("droppos: no tokens survive masking");
  if (n_supervised() < 1)
    throw InvalidInput("droppos: no position-dropped tokens to supervise at these ratios");
}

void register_mae_model(nn::ParameterStore& store, const MaeConfig& cfg, Rng& rng) {
  cfg.validate();
  register_encoder(store, cfg.encoder, rng);
  nn::init_truncated_normal(store, "mae.mask_embed", {1, cfg.encoder.d_model}, rng);
  nn::register_transformer_block(store, "mae.dec.block0", cfg.encoder.d_model,
                                 cfg.encoder.ff_hidden, rng);
  nn::register_layer_norm(store, "mae.dec.final_ln", cfg.encoder.d_model);
  nn::register_linear(store, "mae.head", cfg.encoder.d_model, cfg.encoder.patch_len, rng);
}

void register_mp3_model(nn::ParameterStore& store, const Mp3Config& cfg, Rng& rng) {
  cfg.validate();
  register_encoder(store, cfg.encoder, rng);
  nn::register_linear(store, "mp3.head", cfg.encoder.d_model, cfg.grid_patches(), rng);
}

void register_droppos_model(nn::ParameterStore& store, const DropPosConfig& cfg, Rng& rng) {
  cfg.validate();
  register_encoder(store, cfg.encoder, rng);
  nn::register_mask_token(store, cfg.encoder, rng);
  nn::register_linear(store, "droppos.head", cfg.encoder.d_model, cfg.grid_patches(), rng);
}

PatchSet baseline_grid_input(const MultiChannelWindow& window, const nn::EncoderConfig& encoder,
                             int64_t window_len, Rng& rng) {
  window.validate();
  const int64_t c = window.n_channels() == 1 ? 0 : rng.uniform_int(0, window.n_channels() - 1);
  Sequence seq = random_crop(window.channels[static_cast<size_t>(c)], window_len, rng);
  seq = instance_normalize(seq).sequence;
  return sample_patches_fixed(seq, encoder.patch_len, encoder.patch_len);
}

MaeForward mae_forward(Graph& g, const MaeConfig& cfg, const PatchSet& ps,
                       const std::vector<int64_t>& masked_rows) {
  const int64_t n = ps.n();
  const Tensor all_patches = nn::patches_to_tensor(ps);
  const std::vector<double> positions = nn::patch_positions(ps.start_times, cfg.encoder.patch_len);
  const std::vector<int64_t> visible = complement_of(masked_rows, n);
  if (visible.empty()) throw InvalidInput("mae: every patch is masked");

  // Encode the visible subset only; each visible token carries its own PE.
  PatchSet vis = take_rows(ps, visible);
  std::vector<double> vis_positions;
  vis_positions.reserve(visible.size());
  for (int64_t r : visible) vis_positions.push_back(positions[static_cast<size_t>(r)]);
  Value vis_tokens = nn::tokenize(g, cfg.encoder, nn::patches_to_tensor(vis));
  Value y_vis = nn::encode_tokens(g, cfg.encoder, vis_tokens, vis_positions, {});

  // Reassemble the full-length sequence for the decoder: encoded tokens at
  // visible slots, the learnable embedding at masked slots, plus a positional
  // code on every slot so masked positions are distinguishable.
  Value dec_in = g.scatter_rows(y_vis, visible, n);
  if (!masked_rows.empty()) dec_in = g.scatter_add_row(dec_in, g.param("mae.mask_embed"), masked_rows);
  dec_in = g.add(dec_in, g.constant(nn::sinusoidal_position_embedding(positions, cfg.encoder.d_model)));

  Value dec = nn::transformer_block(g, "mae.dec.block0", cfg.encoder.n_heads, dec_in);
  dec = nn::layer_norm_layer(g, "mae.dec.final_ln", dec);
  Value pred = nn::linear_layer(g, "mae.head", dec);  // [n, patch_len]

  MaeForward out;
  if (cfg.masked_loss_only) {
    Tensor target = Tensor::zeros({static_cast<int64_t>(masked_rows.size()), ps.patch_len()});
    for (size_t i = 0; i < masked_rows.size(); ++i)
      for (int64_t j = 0; j < ps.patch_len(); ++j)
        target.at(static_cast<int64_t>(i), j) = all_patches.at(masked_rows[i], j);
    out.loss = g.mse_loss(g.gather_rows(pred, masked_rows), target);
  } else {
    out.loss = g.mse_loss(pred, all_patches);
  }

  const Tensor& pred_t = pred.tensor();
  std::vector<int64_t> all_rows(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) all_rows[static_cast<size_t>(i)] = i;
  out.full_mse = row_subset_mse(pred_t, all_patches, all_rows);
  out.visible_mse = row_subset_mse(pred_t, all_patches, visible);
  out.masked_mse = row_subset_mse(pred_t, all_patches, masked_rows);
  return out;
}

nn::StepResult mae_step(nn::ParameterStore& store, nn::AdamW& optim, const MaeConfig& cfg,
                        const std::vector<const MultiChannelWindow*>& batch, Rng& rng) {
  return run_step(store, optim, batch, [&](Graph& g, const MultiChannelWindow& w) {
    PatchSet ps = baseline_grid_input(w, cfg.encoder, cfg.window_len, rng);
    const std::vector<int64_t> masked = sorted_sample(rng, ps.n(), cfg.n_masked());
    return mae_forward(g, cfg, ps, masked).loss;
  });
}

PositionForward mp3_forward(Graph& g, const Mp3Config& cfg, const PatchSet& shuffled,
                            const std::vector<std::uint8_t>& kv_keep) {
  const std::vector<int> labels = grid_labels(shuffled, cfg.encoder.patch_len);
  nn::EncodeOptions opt;
  opt.use_positions = false;
  opt.kv_keep = &kv_keep;
  Value tokens = nn::tokenize(g, cfg.encoder, nn::patches_to_tensor(shuffled));
  Value y = nn::encode_tokens(g, cfg.encoder, tokens, {}, {}, opt);
  Value logits = nn::linear_layer(g, "mp3.head", y);

  PositionForward out;
  out.loss = g.softmax_cross_entropy(logits, labels);
  const Tensor& lt = logits.tensor();
  int64_t hits = 0;
  for (int64_t i = 0; i < lt.rows(); ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < lt.cols(); ++j)
      if (lt.at(i, j) > lt.at(i, best)) best = j;
    if (best == labels[static_cast<size_t>(i)]) ++hits;
  }
  out.n_scored = lt.rows();
  out.accuracy = static_cast<double>(hits) / static_cast<double>(out.n_scored);
  return out;
}

nn::StepResult mp3_step(nn::ParameterStore& store, nn::AdamW& optim, const Mp3Config& cfg,
                        const std::vector<const MultiChannelWindow*>& batch, Rng& rng) {
  return run_step(store, optim, batch, [&](Graph& g, const MultiChannelWindow& w) {
    PatchSet ps = baseline_grid_input(w, cfg.encoder, cfg.window_len, rng);
    shuffle_patches(ps, rng);
    const int64_t n = ps.n();
    const int64_t n_hidden = static_cast<int64_t>(std::llround(cfg.kv_mask_ratio * static_cast<double>(n)));
    std::vector<std::uint8_t> kv_keep(static_cast<size_t>(n), 1);
    for (int64_t h : rng.sample_without_replacement(n, n_hidden)) kv_keep[static_cast<size_t>(h)] = 0;
    return mp3_forward(g, cfg, ps, kv_keep).loss;
  });
}

PositionForward droppos_forward(Graph& g, const DropPosConfig& cfg, const PatchSet& kept) {
  const std::vector<int> labels = grid_labels(kept, cfg.encoder.patch_len);
  const std::vector<int64_t> supervised = kept.masked_indices();
  if (supervised.empty()) throw InvalidInput("droppos: no position-dropped tokens in this patch set");

  // The head distinguishes all grid slots, including ones whose token was
  // removed: a removed slot is still a valid class, just never the answer
  // for a surviving token.
  Value y = nn::encode_patchset(g, cfg.encoder, kept);
  Value logits = nn::linear_layer(g, "droppos.head", y);

  PositionForward out;
  out.loss = g.softmax_cross_entropy(logits, labels, nullptr, &supervised);
  const Tensor& lt = logits.tensor();
  int64_t hits = 0;
  for (int64_t r : supervised) {
    int64_t best = 0;
    for (int64_t j = 1; j < lt.cols(); ++j)
      if (lt.at(r, j) > lt.at(r, best)) best = j;
    if (best == labels[static_cast<size_t>(r)]) ++hits;
  }
  out.n_scored = static_cast<int64_t>(supervised.size());
  out.accuracy = static_cast<double>(hits) / static_cast<double>(out.n_scored);
  return out;
}

nn::StepResult droppos_step(nn::ParameterStore& store, nn::AdamW& optim, const DropPosConfig& cfg,
                            const std::vector<const MultiChannelWindow*>& batch, Rng& rng) {
  return run_step(store, optim, batch, [&](Graph& g, const MultiChannelWindow& w) {
    PatchSet ps = baseline_grid_input(w, cfg.encoder, cfg.window_len, rng);
    const int64_t n = ps.n();
    const int64_t n_removed = n - cfg.n_kept();
    PatchSet kept = take_rows(ps, complement_of(sorted_sample(rng, n, n_removed), n));
    assign_pe_mask(kept, cfg.pos_drop_ratio, rng);
    return droppos_forward(g, cfg, kept).loss;
  });
}

}  // namespace pars
