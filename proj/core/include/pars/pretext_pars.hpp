#pragma once

#include <cstdint>
#include <vector>

#include "pars/graph.hpp"
#include "pars/layers.hpp"
#include "pars/optim.hpp"
#include "pars/shift_targets.hpp"
#include "pars/signal.hpp"

namespace pars {

enum class ParsDecoder { kCrossAttention, kPairwiseMlp };
enum class PatchSampling { kRandom, kFixed };

struct ParsConfig {
  nn::EncoderConfig encoder;
  int64_t n_patches = 40;     // patches sampled per window (N)
  double gamma_pos = 0.8;     // fraction of patches whose PE is withheld
  int64_t window_len = 6000;  // training window in samples (T_s)
  ParsDecoder decoder = ParsDecoder::kCrossAttention;
  int64_t mlp_hidden = 512;   // hidden width of the pairwise MLP variant
  PatchSampling sampling = PatchSampling::kRandom;

  int64_t n_masked() const;   // round(gamma_pos * n_patches)
  void validate() const;
};

// Registers encoder, mask token and the selected decoder head.
void register_pars_model(nn::ParameterStore& store, const ParsConfig& cfg, Rng& rng);

struct ParsForward {
  nn::Value loss;
  nn::Tensor theta_hat;           // [n_m, n_m] decoder output
  ShiftTargets targets;
  nn::AttentionTrace decoder_attention;  // cross-attention decoder only
};

// Full pretext forward for one already-sampled patch set: encode with masked
// positions, build pair embeddings over the PE-masked tokens, decode the
// predicted shift matrix and take the mean squared error against the targets.
ParsForward pars_forward(nn::Graph& g, const ParsConfig& cfg, const PatchSet& ps);

// Mean of (theta - theta_hat)^2 over all n_m^2 ordered pairs. Reference-path
// loss used by tests and diagnostics; the training graph computes the same
// reduction internally.
double pars_loss(const nn::Tensor& theta_hat, const ShiftTargets& targets);

// Draws one patch set from a window the way a training step does: pick one
// channel uniformly, random-crop to window_len, instance-normalize, sample
// patches (random or fixed grid re-masked per step), shuffle token order.
PatchSet pars_sample_step_input(const MultiChannelWindow& window, const ParsConfig& cfg, Rng& rng);

// One optimizer update over a batch of windows; the returned loss is the mean
// of per-window pair-mean losses.
nn::StepResult pars_training_step(nn::ParameterStore& store, nn::AdamW& optim,
                                  const ParsConfig& cfg,
                                  const std::vector<const MultiChannelWindow*>& batch, Rng& rng);

// Batch loss without touching parameters (also consumes generator draws for
// the per-window sampling, exactly like a training step).
double pars_eval_loss(nn::ParameterStore& store, const ParsConfig& cfg,
                      const std::vector<const MultiChannelWindow*>& batch, Rng& rng);

}  // namespace pars
