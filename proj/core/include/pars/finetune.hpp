#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pars/graph.hpp"
#include "pars/layers.hpp"
#include "pars/optim.hpp"
#include "pars/signal.hpp"

namespace pars {

struct FinetuneConfig {
  nn::EncoderConfig encoder;
  int n_classes = 2;
  double spatial_drop_p = 0.5;  // per-channel token drop during training
  int64_t epochs = 200;
  int64_t batch_size = 32;
  double lr = 1e-4;
  double weight_decay = 1e-4;

  void validate() const;
};

// Encoder plus the multi-channel head (learnable query, spatial
// cross-attention, linear classifier). Warm starts overwrite the encoder
// values afterwards; the head always trains from fresh initialization.
void register_finetune_model(nn::ParameterStore& store, const FinetuneConfig& cfg, Rng& rng);

// One spatial token per channel: instance-normalize, patch on the fixed
// non-overlapping grid, encode with standard positions, average over time.
nn::Value embed_multichannel(nn::Graph& g, const FinetuneConfig& cfg,
                             const MultiChannelWindow& window);

// Collapse spatial tokens through the learnable-query cross-attention into
// class logits [1, K]. In train mode each token is dropped independently with
// spatial_drop_p; an all-dropped draw is resampled so at least one survives.
nn::Value classify(nn::Graph& g, const FinetuneConfig& cfg, nn::Value spatial_tokens,
                   bool train_mode, Rng& rng);

// w_c = total / (K * count_c); classes with no examples get weight zero.
std::vector<double> class_weights_from_counts(const std::vector<int64_t>& counts);

// Single-example reference: -weights[label] * log softmax(logits)[label].
// The training batch reduction is the weight-normalized mean of these.
double weighted_cross_entropy(const nn::Tensor& logits, int label,
                              const std::vector<double>& weights);

nn::StepResult finetune_step(nn::ParameterStore& store, nn::AdamW& optim, const FinetuneConfig& cfg,
                             const std::vector<const MultiChannelWindow*>& batch,
                             const std::vector<double>& class_weights, Rng& rng);

// Eval-mode loss (no dropout) with the same weighted reduction as training.
double finetune_eval_loss(nn::ParameterStore& store, const FinetuneConfig& cfg,
                          const std::vector<const MultiChannelWindow*>& windows,
                          const std::vector<double>& class_weights);

// Eval-mode argmax prediction for one window.
int predict_class(nn::ParameterStore& store, const FinetuneConfig& cfg,
                  const MultiChannelWindow& window);

struct FinetuneEpochRow {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_kappa = 0.0;
};

struct FinetuneResult {
  int64_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<FinetuneEpochRow> history;  // one row per epoch
};

// Full fine-tuning run over the given split. Class weights come from the
// training labels. The store is left holding the parameters of the epoch
// with the lowest validation loss. Optional sink receives one line per epoch.
FinetuneResult finetune_loop(nn::ParameterStore& store, const FinetuneConfig& cfg,
                             const std::vector<const MultiChannelWindow*>& train,
                             const std::vector<const MultiChannelWindow*>& val, Rng& rng,
                             const std::function<void(const std::string&)>& log_line = nullptr);

}  // namespace pars
