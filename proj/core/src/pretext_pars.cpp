#include "pars/pretext_pars.hpp"

#include <cmath>

#include "pars/error.hpp"

namespace pars {

using nn::Graph;
using nn::Tensor;
using nn::Value;

int64_t ParsConfig::n_masked() const {
  return static_cast<int64_t>(std::llround(gamma_pos * static_cast<double>(n_patches)));
}

void ParsConfig::validate() const {
  encoder.validate();
  if (n_patches < 1) throw InvalidInput("pars: n_patches must be positive");
  if (gamma_pos < 0.0 || gamma_pos > 1.0) throw InvalidInput("pars: gamma_pos must lie in [0, 1]");
  if (n_masked() < 2) throw InvalidInput("pars: round(gamma_pos * n_patches) must be at least 2");
  if (window_len < encoder.patch_len) throw InvalidInput("pars: window shorter than one patch");
  if (decoder == ParsDecoder::kPairwiseMlp && mlp_hidden < 1)
    throw InvalidInput("pars: mlp_hidden must be positive");
}

void register_pars_model(nn::ParameterStore& store, const ParsConfig& cfg, Rng& rng) {
  cfg.validate();
  register_encoder(store, cfg.encoder, rng);
  register_mask_token(store, cfg.encoder, rng);
  const int64_t f = cfg.encoder.d_model;
  if (cfg.decoder == ParsDecoder::kCrossAttention) {
    nn::init_truncated_normal(store, "pars.dec.a_q", {2 * f, f}, rng);
    nn::register_attention(store, "pars.dec.attn", f, rng);
    nn::register_linear(store, "pars.dec.out", f, 1, rng);
  } else {
    nn::register_linear(store, "pars.mlp.fc1", 2 * f, cfg.mlp_hidden, rng);
    nn::register_linear(store, "pars.mlp.fc2", cfg.mlp_hidden, 1, rng);
  }
}

double pars_loss(const Tensor& theta_hat, const ShiftTargets& targets) {
  if (theta_hat.shape() != targets.theta.shape())
    throw InvalidInput("pars_loss: prediction and target shapes differ");
  const int64_t n = theta_hat.numel();
  if (n == 0) throw InvalidInput("pars_loss: empty prediction");
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = theta_hat[i] - targets.theta[i];
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

ParsForward pars_forward(Graph& g, const ParsConfig& cfg, const PatchSet& ps) {
  const ShiftTargets targets = compute_shift_targets(ps, cfg.window_len);
  const std::vector<int64_t> masked = targets.masked_indices;
  const int64_t n_m = targets.n_masked();

  Value y = encode_patchset(g, cfg.encoder, ps);

  // Ordered pairs over the PE-masked tokens, row-major, diagonal included;
  // the flattened target vector uses the same order.
  std::vector<std::pair<int64_t, int64_t>> pairs;
  pairs.reserve(static_cast<size_t>(n_m * n_m));
  for (const auto& [a, b] : pair_index_list(targets))
    pairs.emplace_back(masked[static_cast<size_t>(a)], masked[static_cast<size_t>(b)]);
  Value y_pairs = g.pair_concat(y, std::move(pairs));

  ParsForward out{Value{}, Tensor(), targets, nn::AttentionTrace{}};
  Value pred;  // [n_m^2, 1]
  if (cfg.decoder == ParsDecoder::kCrossAttention) {
    Value queries = g.matmul(y_pairs, g.param("pars.dec.a_q"));
    Value dec = nn::attention_layer(g, "pars.dec.attn", queries, y, cfg.encoder.n_heads, nullptr,
                                    &out.decoder_attention);
    pred = nn::linear_layer(g, "pars.dec.out", dec);
  } else {
    Value h = g.relu(nn::linear_layer(g, "pars.mlp.fc1", y_pairs));
    pred = nn::linear_layer(g, "pars.mlp.fc2", h);
  }

  Tensor target_flat = Tensor::zeros({n_m * n_m, 1});
  for (int64_t i = 0; i < n_m * n_m; ++i) target_flat[i] = targets.theta[i];
  out.loss = g.mse_loss(pred, target_flat);

  out.theta_hat = Tensor::zeros({n_m, n_m});
  const Tensor& pred_t = pred.tensor();
  for (int64_t i = 0; i < n_m * n_m; ++i) out.theta_hat[i] = pred_t[i];
  return out;
}

PatchSet pars_sample_step_input(const MultiChannelWindow& window, const ParsConfig& cfg, Rng& rng) {
  window.validate();
  const int64_t c = window.n_channels() == 1 ? 0 : rng.uniform_int(0, window.n_channels() - 1);
  Sequence seq = random_crop(window.channels[static_cast<size_t>(c)], cfg.window_len, rng);
  seq = instance_normalize(seq).sequence;
  PatchSet ps;
  if (cfg.sampling == PatchSampling::kRandom) {
    ps = sample_patches_random(seq, cfg.n_patches, cfg.encoder.patch_len, cfg.gamma_pos, rng);
  } else {
    ps = sample_patches_fixed(seq, cfg.encoder.patch_len, cfg.encoder.patch_len);
    assign_pe_mask(ps, cfg.gamma_pos, rng);
  }
  shuffle_patches(ps, rng);
  return ps;
}

nn::StepResult pars_training_step(nn::ParameterStore& store, nn::AdamW& optim,
                                  const ParsConfig& cfg,
                                  const std::vector<const MultiChannelWindow*>& batch, Rng& rng) {
  if (batch.empty()) throw InvalidInput("pars_training_step: empty batch");
  Graph g(&store);
  std::vector<Value> losses;
  losses.reserve(batch.size());
  for (const MultiChannelWindow* w : batch) {
    const PatchSet ps = pars_sample_step_input(*w, cfg, rng);
    losses.push_back(pars_forward(g, cfg, ps).loss);
  }
  Value loss = g.mean_scalars(losses);
  store.zero_grads();
  g.backward(loss);
  nn::StepResult result;
  result.loss = loss.scalar();
  result.stepped = optim.step(&result.diagnostic);
  return result;
}

double pars_eval_loss(nn::ParameterStore& store, const ParsConfig& cfg,
                      const std::vector<const MultiChannelWindow*>& batch, Rng& rng) {
  if (batch.empty()) throw InvalidInput("pars_eval_loss: empty batch");
  Graph g(&store);
  std::vector<Value> losses;
  losses.reserve(batch.size());
  for (const MultiChannelWindow* w : batch) {
    const PatchSet ps = pars_sample_step_input(*w, cfg, rng);
    losses.push_back(pars_forward(g, cfg, ps).loss);
  }
  return g.mean_scalars(losses).scalar();
}

}  // namespace pars
