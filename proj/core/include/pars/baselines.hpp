#pragma once

#include <cstdint>
#include <vector>

#include "pars/graph.hpp"
#include "pars/layers.hpp"
#include "pars/optim.hpp"
#include "pars/signal.hpp"

namespace pars {

// The three comparison pretext tasks. All of them use fixed non-overlapping
// patching (the position classes need a grid) and share the exact encoder
// parameter namespace with the main pretext task, so any of their checkpoints
// can warm-start the same fine-tuning model.

struct MaeConfig {
  nn::EncoderConfig encoder;
  double mask_ratio = 0.5;       // fraction of patches hidden from the encoder
  bool masked_loss_only = false; // reconstruct loss over masked patches only
  int64_t window_len = 6000;

  int64_t grid_patches() const;
  int64_t n_masked() const;  // round(mask_ratio * grid_patches)
  void validate() const;
};

struct Mp3Config {
  nn::EncoderConfig encoder;
  double kv_mask_ratio = 0.5;  // fraction of tokens hidden from keys/values
  int64_t window_len = 6000;

  int64_t grid_patches() const;  // also the number of position classes
  void validate() const;
};

struct DropPosConfig {
  nn::EncoderConfig encoder;
  double mask_ratio = 0.5;     // tokens removed outright
  double pos_drop_ratio = 0.8; // surviving tokens whose PE is withheld
  int64_t window_len = 6000;

  int64_t grid_patches() const;
  int64_t n_kept() const;        // grid_patches - round(mask_ratio * grid)
  int64_t n_supervised() const;  // round(pos_drop_ratio * n_kept)
  void validate() const;
};

void register_mae_model(nn::ParameterStore& store, const MaeConfig& cfg, Rng& rng);
void register_mp3_model(nn::ParameterStore& store, const Mp3Config& cfg, Rng& rng);
void register_droppos_model(nn::ParameterStore& store, const DropPosConfig& cfg, Rng& rng);

// Channel choice, random crop, instance normalization, fixed-grid patching:
// the shared input preparation for all three tasks.
PatchSet baseline_grid_input(const MultiChannelWindow& window, const nn::EncoderConfig& encoder,
                             int64_t window_len, Rng& rng);

// --- MAE ---------------------------------------------------------------------

struct MaeForward {
  nn::Value loss;
  double full_mse = 0.0;     // reconstruction error over every patch
  double visible_mse = 0.0;  // over patches the encoder saw
  double masked_mse = 0.0;   // over patches it had to infer
};

// masked_rows selects the patches withheld from the encoder. Positions are
// attached to every token before masking; the decoder sees encoded visible
// tokens, a learnable embedding at each masked slot, plus its own positional
// code so masked slots are distinguishable.
MaeForward mae_forward(nn::Graph& g, const MaeConfig& cfg, const PatchSet& ps,
                       const std::vector<int64_t>& masked_rows);

nn::StepResult mae_step(nn::ParameterStore& store, nn::AdamW& optim, const MaeConfig& cfg,
                        const std::vector<const MultiChannelWindow*>& batch, Rng& rng);

// --- position-prediction tasks ------------------------------------------------

struct PositionForward {
  nn::Value loss;
  double accuracy = 0.0;  // argmax match rate over the scored tokens
  int64_t n_scored = 0;
};

// Tokens arrive shuffled and carry no positional embedding; kv_keep hides a
// token subset from keys and values in every block. Every token is classified
// into its original grid slot.
PositionForward mp3_forward(nn::Graph& g, const Mp3Config& cfg, const PatchSet& shuffled,
                            const std::vector<std::uint8_t>& kv_keep);

nn::StepResult mp3_step(nn::ParameterStore& store, nn::AdamW& optim, const Mp3Config& cfg,
                        const std::vector<const MultiChannelWindow*>& batch, Rng& rng);

// kept carries the surviving tokens (after MAE-style removal) with pe_masked
// marking the position-dropped ones; only those rows are scored.
PositionForward droppos_forward(nn::Graph& g, const DropPosConfig& cfg, const PatchSet& kept);

nn::StepResult droppos_step(nn::ParameterStore& store, nn::AdamW& optim, const DropPosConfig& cfg,
                            const std::vector<const MultiChannelWindow*>& batch, Rng& rng);

}  // namespace pars
