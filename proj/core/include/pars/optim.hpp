#pragma once

#include <cstdint>
#include <string>

#include "pars/params.hpp"

namespace pars::nn {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Adam with decoupled weight decay and bias correction. Moments live in the
// parameter store as float32 (so optimizer state checkpoints are width-exact);
// each update is computed in double from the float32 state and rounded once,
// which makes a resumed run reproduce the original trajectory bit for bit.
class AdamW {
 public:
  AdamW(ParameterStore& store, AdamWConfig cfg) : store_(store), cfg_(cfg) {}

  // One update from the gradients currently in the store; parameters without
  // gradients are left untouched. If any gradient is non-finite the step is
  // rejected outright (no state changes) and diagnostic names the offender.
  bool step(std::string* diagnostic = nullptr);

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  const AdamWConfig& config() const { return cfg_; }

  int64_t steps_taken() const { return t_; }
  void set_steps_taken(int64_t t) { t_ = t; }

 private:
  ParameterStore& store_;
  AdamWConfig cfg_;
  int64_t t_ = 0;
};

// Warmup then cosine decay, evaluated per epoch. Ramps linearly from 10% of
// the base rate to full over warmup_epochs, then anneals to zero by
// max_epochs.
double lr_schedule(double base_lr, int64_t epoch, int64_t warmup_epochs, int64_t max_epochs);

// Outcome of one training step (forward, backward, optimizer update).
struct StepResult {
  double loss = 0.0;
  bool stepped = false;        // false when the optimizer rejected the update
  std::string diagnostic;      // set when stepped is false
};

}  // namespace pars::nn
