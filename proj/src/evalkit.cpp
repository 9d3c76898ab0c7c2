#include "bsa/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace bsa {

RegressionReport regression_metrics(const std::vector<double>& pred,
                                    const std::vector<double>& truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("regression_metrics: size mismatch");
  const size_t n = truth.size();
  if (n < 2) throw std::invalid_argument("regression_metrics: need at least 2 samples");

  double mae = 0.0, mean = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mae += std::abs(pred[i] - truth[i]);
    mean += truth[i];
  }
  mae /= static_cast<double>(n);
  mean /= static_cast<double>(n);

  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ss_res += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot <= 0.0) throw std::invalid_argument("regression_metrics: degenerate truth variance");
  return {mae, 1.0 - ss_res / ss_tot};
}

double binary_auc(const std::vector<double>& scores, const std::vector<uint8_t>& is_positive) {
  if (scores.size() != is_positive.size()) throw std::invalid_argument("binary_auc: size mismatch");
  const size_t n = scores.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // average ranks over tie groups
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (size_t t = i; t <= j; ++t) rank[idx[t]] = avg;
    i = j + 1;
  }

  double rank_sum_pos = 0.0;
  size_t n_pos = 0;
  for (size_t t = 0; t < n; ++t)
    if (is_positive[t]) {
      rank_sum_pos += rank[t];
      ++n_pos;
    }
  const size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("binary_auc: one class is empty");
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ClassificationReport classification_metrics(const std::vector<int>& pred_labels,
                                            const Eigen::MatrixXd& scores,
                                            const std::vector<int>& truth, int num_classes) {
  const size_t n = truth.size();
  if (pred_labels.size() != n) throw std::invalid_argument("classification_metrics: size mismatch");
  if (scores.rows() != static_cast<Eigen::Index>(n) || scores.cols() != num_classes)
    throw std::invalid_argument("classification_metrics: bad score matrix");

  ClassificationReport report;
  report.confusion = Eigen::MatrixXi::Zero(num_classes, num_classes);
  for (size_t i = 0; i < n; ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || pred_labels[i] < 0 || pred_labels[i] >= num_classes)
      throw std::invalid_argument("classification_metrics: label out of range");
    report.confusion(truth[i], pred_labels[i]) += 1;
  }
  report.acc = static_cast<double>(report.confusion.trace()) / static_cast<double>(n);

  double recall_sum = 0.0, auc_sum = 0.0;
  int present = 0, auc_classes = 0;
  for (int c = 0; c < num_classes; ++c) {
    const int truth_count = report.confusion.row(c).sum();
    if (truth_count == 0) {
      report.warnings.push_back("class " + std::to_string(c) +
                                " absent from truth; excluded from bacc/auc");
      continue;
    }
    ++present;
    recall_sum += static_cast<double>(report.confusion(c, c)) / static_cast<double>(truth_count);

    if (truth_count == static_cast<int>(n)) {
      report.warnings.push_back("class " + std::to_string(c) +
                                " has no negatives; excluded from auc");
      continue;
    }
    std::vector<double> class_scores(n);
    std::vector<uint8_t> is_pos(n);
    for (size_t i = 0; i < n; ++i) {
      class_scores[i] = scores(static_cast<Eigen::Index>(i), c);
      is_pos[i] = truth[i] == c;
    }
    auc_sum += binary_auc(class_scores, is_pos);
    ++auc_classes;
  }
  if (present == 0) throw std::invalid_argument("classification_metrics: no class present in truth");
  report.bacc = recall_sum / present;
  report.auc = auc_classes > 0 ? auc_sum / auc_classes : std::numeric_limits<double>::quiet_NaN();
  return report;
}

}  // namespace bsa
