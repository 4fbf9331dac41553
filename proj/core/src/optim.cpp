#include "pars/optim.hpp"

#include <cmath>

#include "pars/error.hpp"

namespace pars::nn {

bool AdamW::step(std::string* diagnostic) {
  // Validate every gradient before touching any state, so a rejected step
  // leaves parameters and moments exactly as they were.
  for (const std::string& name : store_.names()) {
    const ParamEntry& e = store_.at(name);
    if (!e.has_grad()) continue;
    for (double g : e.grad) {
      if (!std::isfinite(g)) {
        if (diagnostic != nullptr) *diagnostic = "non-finite gradient in " + name;
        return false;
      }
    }
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const std::string& name : store_.names()) {
    ParamEntry& e = store_.at(name);
    if (!e.has_grad()) continue;
    const size_t n = e.value.size();
    if (e.adam_m.empty()) {
      e.adam_m.assign(n, 0.0f);
      e.adam_v.assign(n, 0.0f);
    }
    for (size_t i = 0; i < n; ++i) {
      const double g = e.grad[i];
      // Round the moments to float32 before using them: the checkpoint holds
      // float32, and a resumed step must see the same numbers this one did.
      const float mf = static_cast<float>(cfg_.beta1 * static_cast<double>(e.adam_m[i]) +
                                          (1.0 - cfg_.beta1) * g);
      const float vf = static_cast<float>(cfg_.beta2 * static_cast<double>(e.adam_v[i]) +
                                          (1.0 - cfg_.beta2) * g * g);
      e.adam_m[i] = mf;
      e.adam_v[i] = vf;
      const double mhat = static_cast<double>(mf) / bc1;
      const double vhat = static_cast<double>(vf) / bc2;
      const double w = static_cast<double>(e.value[i]);
      const double update = mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w;
      e.value[i] = static_cast<float>(w - cfg_.lr * update);
    }
  }
  return true;
}

double lr_schedule(double base_lr, int64_t epoch, int64_t warmup_epochs, int64_t max_epochs) {
  if (base_lr <= 0.0) throw InvalidInput("lr_schedule: base rate must be positive");
  if (max_epochs < 1) throw InvalidInput("lr_schedule: max_epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs > max_epochs)
    throw InvalidInput("lr_schedule: warmup must lie within [0, max_epochs]");
  if (epoch < 0) throw InvalidInput("lr_schedule: negative epoch");
  if (epoch < warmup_epochs) {
    const double frac = static_cast<double>(epoch) / static_cast<double>(warmup_epochs);
    return base_lr * (0.1 + 0.9 * frac);
  }
  if (max_epochs == warmup_epochs) return base_lr;
  const int64_t e = std::min(epoch, max_epochs);
  const double frac =
      static_cast<double>(e - warmup_epochs) / static_cast<double>(max_epochs - warmup_epochs);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * frac));
}

}  // namespace pars::nn
