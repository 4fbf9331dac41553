#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pars/baselines.hpp"
#include "pars/finetune.hpp"
#include "pars/layers.hpp"
#include "pars/pretext_pars.hpp"

namespace pars {

enum class Task { kPars, kMae, kMp3, kDropPos, kFinetune, kScratch };

std::string task_name(Task t);
std::string sampling_name(PatchSampling s);
std::string decoder_name(ParsDecoder d);

// Which split evaluate scores. Training-split evaluation is permitted; the
// report carries the split name so it cannot masquerade as held-out numbers.
enum class EvalSplit { kTrain, kVal, kTest, kAll };

std::string eval_split_name(EvalSplit s);

struct DataConfig {
  std::string store_path;
  std::string finetune_store_path;  // labeled store for the ablation sweep
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
  uint64_t split_seed = 7;
  int64_t n_subjects = 0;        // 0 = keep every training subject
  int64_t labeled_per_class = 0; // 0 = keep every labeled training window
};

struct PretrainConfig {
  int64_t epochs = 1000;
  int64_t warmup_epochs = 100;
  int64_t batch_size = 512;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int64_t window_len = 6000;
  int64_t n_patches = 40;
  double gamma_pos = 0.8;
  PatchSampling sampling = PatchSampling::kRandom;
  ParsDecoder decoder = ParsDecoder::kCrossAttention;
  int64_t mlp_hidden = 512;
  double mask_ratio = 0.5;      // mae: masked patches; droppos: removed tokens
  double kv_mask_ratio = 0.5;   // mp3: keys/values hidden from attention
  double pos_drop_ratio = 0.8;  // droppos: kept tokens stripped of position
  bool mae_masked_loss_only = false;
  int64_t checkpoint_every = 10;  // epochs between checkpoint rewrites
};

struct FinetunePhaseConfig {
  int64_t epochs = 200;
  int64_t batch_size = 32;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double spatial_drop_p = 0.5;
  std::string pretrained;  // checkpoint dir; empty = random init (scratch)
  int64_t seeds = 1;
};

struct AblateGridConfig {
  std::vector<int64_t> n_patches = {20, 40};
  std::vector<double> gamma_pos = {0.8};
  std::vector<PatchSampling> sampling = {PatchSampling::kRandom};
  std::vector<ParsDecoder> decoder = {ParsDecoder::kCrossAttention};
  int64_t seeds = 3;
};

struct RunConfig {
  Task task = Task::kPars;
  uint64_t seed = 1;
  std::string output_dir = "runs/default";
  EvalSplit eval_split = EvalSplit::kTest;
  DataConfig data;
  nn::EncoderConfig encoder;
  PretrainConfig pretrain;
  FinetunePhaseConfig finetune;
  AblateGridConfig ablate;
};

// Parses the sectioned key=value format. Unknown sections or keys, malformed
// values, and semantic violations are all collected and reported together in
// one InvalidInput; origin names the source in those messages.
RunConfig parse_run_config(const std::string& text, const std::string& origin);

RunConfig load_run_config(const std::string& path);

// Canonical resolved snapshot; parse(serialize(c)) == c.
std::string serialize_run_config(const RunConfig& cfg);

// Semantic checks only (ranges, cross-field consistency); appends messages.
void validate_run_config(const RunConfig& cfg, std::vector<std::string>& errors);

}  // namespace pars
