#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "bsa/rng.hpp"

namespace bsa {

enum class KernelKind { Linear, Poly, Rbf };

const char* kernel_name(KernelKind k);
KernelKind kernel_from_name(const std::string& name);

struct KernelSpec {
  KernelKind kind = KernelKind::Linear;
  double gamma = 1.0;   // poly/rbf; default 1/s set by callers
  double coef0 = 1.0;   // poly
  int degree = 3;       // poly
};

// linear: x.z; poly: (gamma x.z + coef0)^degree; rbf: exp(-gamma |x-z|^2)
double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& z);

// C_i = 10^(-1.5 + 2 i / 99), i = 0..99
std::vector<double> make_c_grid();

struct BinarySvm {
  Eigen::MatrixXd support;   // one support vector per row
  Eigen::VectorXd alpha_y;   // alpha_i * y_i per support vector
  double bias = 0.0;
  KernelSpec kernel;

  double decision(const Eigen::VectorXd& x) const;
};

// Sequential minimal optimization on the soft-margin dual. Labels are +-1.
// At convergence every KKT violation is below tol. Returns the model plus
// the full alpha vector for diagnostics.
BinarySvm smo_train_binary(const Eigen::MatrixXd& X, const std::vector<int>& y,
                           const KernelSpec& kernel, double C, double tol = 1e-3,
                           Eigen::VectorXd* alpha_out = nullptr);

// Dual objective sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
double svm_dual_objective(const Eigen::MatrixXd& X, const std::vector<int>& y,
                          const KernelSpec& kernel, const Eigen::VectorXd& alpha);

// One-vs-one multi-class model over standardized features.
struct SvmModel {
  std::vector<std::string> class_names;
  std::vector<std::pair<int, int>> pairs;  // class index pairs, first < second
  std::vector<BinarySvm> models;           // one per pair; +1 = first class
  Eigen::VectorXd feat_mean, feat_scale;
  KernelSpec kernel;
  double C = 1.0;
};

SvmModel ovo_train(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                   const std::vector<std::string>& class_names, const KernelSpec& kernel, double C,
                   double tol = 1e-3);

struct OvoDecision {
  int label = 0;
  Eigen::VectorXd scores;  // per class: votes + logistic(sum of signed margins)
};

OvoDecision ovo_classify(const SvmModel& model, const Eigen::VectorXd& x);

struct GridSearchConfig {
  std::vector<KernelKind> kernels{KernelKind::Linear, KernelKind::Poly, KernelKind::Rbf};
  std::vector<double> c_values;  // defaults to make_c_grid() when empty
  int folds = 10;
};

struct GridCell {
  KernelKind kernel;
  double C = 0.0;
  std::vector<double> fold_bacc;
  double mean_bacc = 0.0;
};

struct GridSearchResult {
  KernelKind best_kernel = KernelKind::Linear;
  double best_c = 1.0;
  double best_bacc = 0.0;
  std::vector<GridCell> cells;
  std::vector<std::string> warnings;
};

// Stratified k-fold cross-validation over every (kernel, C) cell, scored by
// mean balanced accuracy. Ties prefer the smaller C, then the kernel order
// linear < poly < rbf.
GridSearchResult grid_search(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                             int num_classes, const GridSearchConfig& cfg, Rng& rng);

void save_svm(const SvmModel& model, const std::string& path);
SvmModel load_svm(const std::string& path);

}  // namespace bsa
