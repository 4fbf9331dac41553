#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pars/params.hpp"

namespace pars::nn {

// On-disk checkpoint layout (one directory per checkpoint):
//   manifest.tsv  name, dtype, shape, byte offset, byte count per parameter
//   params.bin    raw float32 little-endian values, concatenated per manifest
//   optim.tsv     same row format for Adam moments (<param>.adam_m / .adam_v)
//   optim.bin     raw float32 moment values
//   state.txt     epoch / step counters and the serialized training generator
//   model.txt     free-form key=value metadata (task, dimensions, classes)

struct CheckpointState {
  int64_t epoch = 0;        // next epoch to run
  int64_t global_step = 0;  // optimizer steps completed
  int64_t adam_steps = 0;   // bias-correction counter
  std::string rng_text;     // training generator state
};

struct ManifestEntry {
  std::string name;
  std::vector<int64_t> shape;
  int64_t offset = 0;
  int64_t nbytes = 0;
};

void save_checkpoint(const std::string& dir, const ParameterStore& store,
                     const CheckpointState& state,
                     const std::map<std::string, std::string>& model_info);

// Full resume: values, moments and counters. The live store must have been
// registered with the same configuration; any key or shape difference is a
// ManifestMismatch listing everything that disagrees.
void load_checkpoint(const std::string& dir, ParameterStore& store, CheckpointState* state);

// Warm start: copy only values whose name starts with prefix. The key set
// under the prefix must agree exactly between the checkpoint and the store.
void load_params_with_prefix(const std::string& dir, ParameterStore& store,
                             const std::string& prefix);

std::vector<ManifestEntry> read_manifest(const std::string& dir);
std::map<std::string, std::string> read_model_info(const std::string& dir);
CheckpointState read_state(const std::string& dir);
bool checkpoint_exists(const std::string& dir);

}  // namespace pars::nn
