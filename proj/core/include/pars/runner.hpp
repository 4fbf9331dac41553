#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pars/config.hpp"
#include "pars/metrics.hpp"
#include "pars/window_store.hpp"

namespace pars {

// Orchestration over the library: each run_* call owns one run directory and
// leaves behind config_resolved.txt, metrics.log, run_record.txt and any
// checkpoints. Runs are a pure function of (config, seed): reruns reproduce
// the metric logs byte for byte.

struct PretrainOutcome {
  std::string checkpoint_dir;
  std::vector<double> epoch_loss;  // mean step loss per epoch run by this call
  int64_t global_steps = 0;        // total steps after the run
};

// Trains the configured pretext task over the training split of the store.
// With resume = true and an existing checkpoint, picks up where that run
// stopped (identical trajectory to the uninterrupted run). A non-negative
// stop_after_epochs bounds how many epochs this call runs before
// checkpointing and returning, so long runs can be sliced across invocations.
PretrainOutcome run_pretrain(const RunConfig& cfg, bool resume, std::ostream& console,
                             int64_t stop_after_epochs = -1);

struct SeedOutcome {
  uint64_t seed = 0;
  int64_t best_epoch = 0;
  double best_val_loss = 0.0;
  double kappa = 0.0;
  double balanced_acc = 0.0;
  double macro_f1_score = 0.0;
  double auroc_score = 0.0;  // meaningful only when n_classes == 2
  std::string checkpoint_dir;
};

struct FinetuneOutcome {
  std::vector<SeedOutcome> per_seed;
  std::map<std::string, std::string> report;  // contents of metrics.txt
};

// Fine-tunes (or trains from scratch when no pretrained path is set) over
// finetune.seeds seeds: seed s trains with cfg.seed + s and its own random
// subject subset, mirroring a label-efficiency protocol. Reports test-split
// metrics per seed plus mean and standard deviation.
FinetuneOutcome run_finetune(const RunConfig& cfg, std::ostream& console);

struct EvalOutcome {
  std::map<std::string, std::string> report;
  std::vector<int> truth, predicted;  // pooled over the scored split
};

// Scores a classifier checkpoint on the configured split of the store;
// emits pooled and per-subject metrics labeled with the split name.
EvalOutcome run_evaluate(const RunConfig& cfg, const std::string& checkpoint_dir,
                         std::ostream& console);

struct AblateCellOutcome {
  int64_t n_patches = 0;
  double gamma_pos = 0.0;
  PatchSampling sampling = PatchSampling::kRandom;
  ParsDecoder decoder = ParsDecoder::kCrossAttention;
  bool ok = false;
  std::string error;                // set when ok is false
  std::vector<double> seed_kappas;  // test kappa per seed
  double median_kappa = 0.0;
};

struct AblateOutcome {
  std::vector<AblateCellOutcome> cells;
  std::string table_path;
};

// Pretrain + fine-tune per grid cell and seed; a failing cell is recorded and
// the sweep moves on. Emits one key=value row per cell into ablate_table.txt.
AblateOutcome run_ablate(const RunConfig& cfg, std::ostream& console);

// Training-split window selection for fine-tuning: labeled windows of the
// (optionally subsampled) training subjects, optionally capped per class.
// Exposed for tests that need to see exactly what a run would train on.
struct FinetuneData {
  SplitManifest manifest;
  std::vector<const MultiChannelWindow*> train, val, test;
};
FinetuneData select_finetune_data(const WindowStore& store, const DataConfig& data,
                                  uint64_t run_seed);

// Build-time content hash over the library and tool sources.
std::string code_version();

}  // namespace pars
