#include "pars/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "pars/error.hpp"
#include "pars/metrics.hpp"

namespace pars {

using nn::Graph;
using nn::Tensor;
using nn::Value;

void FinetuneConfig::validate() const {
  encoder.validate();
  if (n_classes < 2) throw InvalidInput("finetune: need at least two classes");
  if (spatial_drop_p < 0.0 || spatial_drop_p >= 1.0)
    throw InvalidInput("finetune: spatial_drop_p must lie in [0, 1)");
  if (epochs < 1) throw InvalidInput("finetune: epochs must be positive");
  if (batch_size < 1) throw InvalidInput("finetune: batch_size must be positive");
  if (lr <= 0.0) throw InvalidInput("finetune: lr must be positive");
  if (weight_decay < 0.0) throw InvalidInput("finetune: weight_decay must be non-negative");
}

void register_finetune_model(nn::ParameterStore& store, const FinetuneConfig& cfg, Rng& rng) {
  cfg.validate();
  register_encoder(store, cfg.encoder, rng);
  nn::init_truncated_normal(store, "head.query", {1, cfg.encoder.d_model}, rng);
  nn::register_attention(store, "head.attn", cfg.encoder.d_model, rng);
  nn::register_linear(store, "head.out", cfg.encoder.d_model, cfg.n_classes, rng);
}

Value embed_multichannel(Graph& g, const FinetuneConfig& cfg, const MultiChannelWindow& window) {
  window.validate();
  if (window.length() < cfg.encoder.patch_len)
    throw InvalidInput("finetune: window shorter than one patch");
  std::vector<Value> spatial;
  spatial.reserve(static_cast<size_t>(window.n_channels()));
  for (const Sequence& channel : window.channels) {
    const Sequence normed = instance_normalize(channel).sequence;
    const PatchSet ps = sample_patches_fixed(normed, cfg.encoder.patch_len, cfg.encoder.patch_len);
    Value y = nn::encode_patchset(g, cfg.encoder, ps);
    spatial.push_back(g.mean_rows(y));
  }
  return g.stack_rows(spatial);
}

Value classify(Graph& g, const FinetuneConfig& cfg, Value spatial_tokens, bool train_mode,
               Rng& rng) {
  Value tokens = spatial_tokens;
  if (train_mode && cfg.spatial_drop_p > 0.0) {
    const int64_t c = spatial_tokens.tensor().rows();
    std::vector<int64_t> kept;
    do {
      kept.clear();
      for (int64_t i = 0; i < c; ++i)
        if (rng.uniform_real() >= cfg.spatial_drop_p) kept.push_back(i);
    } while (kept.empty());
    if (static_cast<int64_t>(kept.size()) < c) tokens = g.gather_rows(tokens, kept);
  }
  Value pooled = nn::attention_layer(g, "head.attn", g.param("head.query"), tokens,
                                     cfg.encoder.n_heads);
  return nn::linear_layer(g, "head.out", pooled);
}

std::vector<double> class_weights_from_counts(const std::vector<int64_t>& counts) {
  int64_t total = 0;
  for (int64_t c : counts) {
    if (c < 0) throw InvalidInput("class weights: negative count");
    total += c;
  }
  if (total == 0) throw InvalidInput("class weights: no labeled examples");
  const double k = static_cast<double>(counts.size());
  std::vector<double> w(counts.size(), 0.0);
  for (size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0) w[c] = static_cast<double>(total) / (k * static_cast<double>(counts[c]));
  return w;
}

double weighted_cross_entropy(const Tensor& logits, int label, const std::vector<double>& weights) {
  const int64_t k = logits.numel();
  if (label < 0 || label >= k) throw InvalidInput("weighted_cross_entropy: label out of range");
  if (static_cast<int64_t>(weights.size()) != k)
    throw InvalidInput("weighted_cross_entropy: one weight per class required");
  double row_max = logits[0];
  for (int64_t j = 1; j < k; ++j) row_max = std::max(row_max, logits[j]);
  double denom = 0.0;
  for (int64_t j = 0; j < k; ++j) denom += std::exp(logits[j] - row_max);
  const double log_softmax = logits[label] - row_max - std::log(denom);
  return -weights[static_cast<size_t>(label)] * log_softmax;
}

namespace {

void check_labels(const std::vector<const MultiChannelWindow*>& windows, int n_classes) {
  for (const MultiChannelWindow* w : windows)
    if (w->label == kUnlabeled || w->label < 0 || w->label >= n_classes)
      throw InvalidInput("finetune: window label outside [0, n_classes)");
}

Value batch_loss(Graph& g, const FinetuneConfig& cfg,
                 const std::vector<const MultiChannelWindow*>& batch,
                 const std::vector<double>& class_weights, bool train_mode, Rng* rng) {
  std::vector<Value> rows;
  std::vector<int> labels;
  rows.reserve(batch.size());
  labels.reserve(batch.size());
  Rng unused(0);
  for (const MultiChannelWindow* w : batch) {
    Value spatial = embed_multichannel(g, cfg, *w);
    rows.push_back(classify(g, cfg, spatial, train_mode, rng != nullptr ? *rng : unused));
    labels.push_back(w->label);
  }
  Value logits = g.stack_rows(rows);
  return g.softmax_cross_entropy(logits, labels, &class_weights);
}

}  // namespace

nn::StepResult finetune_step(nn::ParameterStore& store, nn::AdamW& optim, const FinetuneConfig& cfg,
                             const std::vector<const MultiChannelWindow*>& batch,
                             const std::vector<double>& class_weights, Rng& rng) {
  if (batch.empty()) throw InvalidInput("finetune_step: empty batch");
  check_labels(batch, cfg.n_classes);
  Graph g(&store);
  Value loss = batch_loss(g, cfg, batch, class_weights, true, &rng);
  store.zero_grads();
  g.backward(loss);
  nn::StepResult result;
  result.loss = loss.scalar();
  result.stepped = optim.step(&result.diagnostic);
  return result;
}

double finetune_eval_loss(nn::ParameterStore& store, const FinetuneConfig& cfg,
                          const std::vector<const MultiChannelWindow*>& windows,
                          const std::vector<double>& class_weights) {
  if (windows.empty()) throw InvalidInput("finetune_eval_loss: no windows");
  check_labels(windows, cfg.n_classes);
  Graph g(&store);
  return batch_loss(g, cfg, windows, class_weights, false, nullptr).scalar();
}

int predict_class(nn::ParameterStore& store, const FinetuneConfig& cfg,
                  const MultiChannelWindow& window) {
  Graph g(&store);
  Rng unused(0);
  Value spatial = embed_multichannel(g, cfg, window);
  const Tensor& logits = classify(g, cfg, spatial, false, unused).tensor();
  int best = 0;
  for (int j = 1; j < cfg.n_classes; ++j)
    if (logits.at(0, j) > logits.at(0, best)) best = j;
  return best;
}

FinetuneResult finetune_loop(nn::ParameterStore& store, const FinetuneConfig& cfg,
                             const std::vector<const MultiChannelWindow*>& train,
                             const std::vector<const MultiChannelWindow*>& val, Rng& rng,
                             const std::function<void(const std::string&)>& log_line) {
  cfg.validate();
  if (train.empty() || val.empty()) throw InvalidInput("finetune_loop: empty train or val split");
  check_labels(train, cfg.n_classes);
  check_labels(val, cfg.n_classes);

  std::vector<int64_t> counts(static_cast<size_t>(cfg.n_classes), 0);
  for (const MultiChannelWindow* w : train) ++counts[static_cast<size_t>(w->label)];
  const std::vector<double> weights = class_weights_from_counts(counts);

  nn::AdamW optim(store, nn::AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  FinetuneResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<std::pair<std::string, std::vector<float>>> best_values;

  std::vector<const MultiChannelWindow*> order(train.begin(), train.end());
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int64_t n_batches = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      std::vector<const MultiChannelWindow*> batch(order.begin() + static_cast<int64_t>(begin),
                                                   order.begin() + static_cast<int64_t>(end));
      const nn::StepResult step = finetune_step(store, optim, cfg, batch, weights, rng);
      if (!step.stepped) throw std::runtime_error("finetune: " + step.diagnostic);
      loss_sum += step.loss;
      ++n_batches;
    }

    FinetuneEpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(n_batches);
    row.val_loss = finetune_eval_loss(store, cfg, val, weights);
    std::vector<int> truth, pred;
    truth.reserve(val.size());
    pred.reserve(val.size());
    for (const MultiChannelWindow* w : val) {
      truth.push_back(w->label);
      pred.push_back(predict_class(store, cfg, *w));
    }
    row.val_kappa = cohens_kappa(ConfusionMatrix::from_labels(truth, pred, cfg.n_classes));
    result.history.push_back(row);

    if (log_line != nullptr) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "epoch=%lld train_loss=%.9g val_loss=%.9g val_kappa=%.9g",
                    static_cast<long long>(epoch), row.train_loss, row.val_loss, row.val_kappa);
      log_line(buf);
    }

    if (row.val_loss < result.best_val_loss) {
      result.best_val_loss = row.val_loss;
      result.best_epoch = epoch;
      best_values.clear();
      for (const std::string& name : store.names())
        best_values.emplace_back(name, store.at(name).value);
    }
  }

  for (const auto& [name, values] : best_values) store.at(name).value = values;
  return result;
}

}  // namespace pars
