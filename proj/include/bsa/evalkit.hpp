#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace bsa {

struct RegressionReport {
  double mae = 0.0;
  double r2 = 0.0;
};

// mae = mean |pred - truth|; r2 = 1 - SS_res / SS_tot. Degenerate truth
// variance is rejected.
RegressionReport regression_metrics(const std::vector<double>& pred,
                                    const std::vector<double>& truth);

struct ClassificationReport {
  double acc = 0.0;
  double bacc = 0.0;
  double auc = 0.0;
  Eigen::MatrixXi confusion;  // rows: truth, cols: predicted
  std::vector<std::string> warnings;
};

// Binary AUC as the Mann-Whitney rank statistic with half credit for ties.
double binary_auc(const std::vector<double>& scores, const std::vector<uint8_t>& is_positive);

// acc = trace/total; bacc = mean per-class recall; auc = macro one-vs-rest
// average of binary AUCs over per-class scores. Classes absent from the truth
// are excluded from the bacc/auc means with a warning.
ClassificationReport classification_metrics(const std::vector<int>& pred_labels,
                                            const Eigen::MatrixXd& scores,
                                            const std::vector<int>& truth, int num_classes);

}  // namespace bsa
