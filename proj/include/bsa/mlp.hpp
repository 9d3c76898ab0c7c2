#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "bsa/nnkit.hpp"
#include "bsa/optim.hpp"
#include "bsa/rng.hpp"
#include "bsa/voxelage.hpp"

namespace bsa {

struct MlpRecipe {
  int batch_size = 8;
  int patience = 50;
  double learning_rate = 1e-3;
  int max_epochs = 1500;
};

// One cross-validation fold: the net plus the fold's feature and target
// standardization, both computed from the training 9/10 only.
struct MlpFold {
  Network<float> net;
  Eigen::VectorXd feat_mean, feat_scale;
  double target_mean = 0.0, target_sigma = 1.0;
  TrainReport report;
};

// Layer widths 4s, 2s, s, 1 with ReLU between; fold predictions are averaged.
struct MlpEnsemble {
  int num_features = 0;
  std::vector<MlpFold> folds;
};

Network<float> build_mlp(int num_features, Rng& rng);

MlpEnsemble train_mlp_cv(const Eigen::MatrixXd& features, const Eigen::VectorXd& ages, int folds,
                         const MlpRecipe& recipe, Rng& rng);

double predict_age(const MlpEnsemble& ensemble, const Eigen::VectorXd& features);

void save_mlp(const MlpEnsemble& ensemble, const std::string& dir);
MlpEnsemble load_mlp(const std::string& dir);

}  // namespace bsa
