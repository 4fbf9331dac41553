#include "pars/metrics.hpp"

#include <algorithm>

#include "pars/error.hpp"

namespace pars {

ConfusionMatrix::ConfusionMatrix(int k) : k_(k) {
  if (k < 1) throw InvalidInput("confusion matrix needs at least one class");
  counts_.assign(static_cast<size_t>(k) * static_cast<size_t>(k), 0);
}

ConfusionMatrix ConfusionMatrix::from_labels(const std::vector<int>& truth,
                                             const std::vector<int>& predicted, int k) {
  if (truth.size() != predicted.size())
    throw InvalidInput("confusion matrix: label vectors differ in length");
  ConfusionMatrix cm(k);
  for (size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

int64_t& ConfusionMatrix::at(int truth, int predicted) {
  if (truth < 0 || truth >= k_ || predicted < 0 || predicted >= k_)
    throw InvalidInput("confusion matrix: class index out of range");
  return counts_[static_cast<size_t>(truth) * static_cast<size_t>(k_) + static_cast<size_t>(predicted)];
}

int64_t ConfusionMatrix::at(int truth, int predicted) const {
  return const_cast<ConfusionMatrix*>(this)->at(truth, predicted);
}

void ConfusionMatrix::add(int truth, int predicted, int64_t count) { at(truth, predicted) += count; }

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts_) t += c;
  return t;
}

int64_t ConfusionMatrix::row_total(int truth) const {
  int64_t t = 0;
  for (int p = 0; p < k_; ++p) t += at(truth, p);
  return t;
}

int64_t ConfusionMatrix::col_total(int predicted) const {
  int64_t t = 0;
  for (int r = 0; r < k_; ++r) t += at(r, predicted);
  return t;
}

double cohens_kappa(const ConfusionMatrix& cm) {
  const double total = static_cast<double>(cm.total());
  if (total <= 0.0) throw InvalidInput("kappa: empty confusion matrix");
  double diag = 0.0, chance = 0.0;
  for (int c = 0; c < cm.k(); ++c) {
    diag += static_cast<double>(cm.at(c, c));
    chance += static_cast<double>(cm.row_total(c)) * static_cast<double>(cm.col_total(c));
  }
  const double p_o = diag / total;
  const double p_e = chance / (total * total);
  if (p_e >= 1.0) return 0.0;
  return (p_o - p_e) / (1.0 - p_e);
}

double balanced_accuracy(const ConfusionMatrix& cm) {
  double recall_sum = 0.0;
  int present = 0;
  for (int c = 0; c < cm.k(); ++c) {
    const int64_t support = cm.row_total(c);
    if (support == 0) continue;
    recall_sum += static_cast<double>(cm.at(c, c)) / static_cast<double>(support);
    ++present;
  }
  if (present == 0) throw InvalidInput("balanced accuracy: no class has any examples");
  return recall_sum / static_cast<double>(present);
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.total() <= 0) throw InvalidInput("macro F1: empty confusion matrix");
  double f1_sum = 0.0;
  for (int c = 0; c < cm.k(); ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const double pred = static_cast<double>(cm.col_total(c));
    const double truth = static_cast<double>(cm.row_total(c));
    if (pred + truth == 0.0) continue;  // degenerate class contributes 0
    const double precision = pred > 0.0 ? tp / pred : 0.0;
    const double recall = truth > 0.0 ? tp / truth : 0.0;
    if (precision + recall > 0.0) f1_sum += 2.0 * precision * recall / (precision + recall);
  }
  return f1_sum / static_cast<double>(cm.k());
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw InvalidInput("auroc: scores and labels differ in length");
  int64_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1)
      ++n_pos;
    else if (y == 0)
      ++n_neg;
    else
      throw InvalidInput("auroc: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0) throw InvalidInput("auroc: both classes must be present");

  // Rank-sum form of the Mann-Whitney statistic: average ranks over tied
  // groups give tied pairs exactly half credit.
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
    for (size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::string format_metrics_report(const std::map<std::string, std::string>& fields) {
  std::string out;
  for (const auto& [k, v] : fields) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace pars
