#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pars {

// K x K contingency table: rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int k);
  static ConfusionMatrix from_labels(const std::vector<int>& truth, const std::vector<int>& predicted,
                                     int k);

  int k() const { return k_; }
  int64_t& at(int truth, int predicted);
  int64_t at(int truth, int predicted) const;
  void add(int truth, int predicted, int64_t count = 1);
  int64_t total() const;
  int64_t row_total(int truth) const;
  int64_t col_total(int predicted) const;

 private:
  int k_ = 0;
  std::vector<int64_t> counts_;
};

// (p_o - p_e) / (1 - p_e); 0 when chance agreement is total (p_e = 1).
double cohens_kappa(const ConfusionMatrix& cm);

// Mean per-class recall over classes that actually occur.
double balanced_accuracy(const ConfusionMatrix& cm);

// Unweighted mean of per-class F1; a class with no predictions and no
// examples contributes 0.
double macro_f1(const ConfusionMatrix& cm);

// Mann-Whitney AUROC for binary labels (ties count half). Requires at least
// one positive and one negative.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Flat key=value report, deterministically ordered.
std::string format_metrics_report(const std::map<std::string, std::string>& fields);

}  // namespace pars
