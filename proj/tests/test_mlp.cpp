#include "doctest.h"

#include <filesystem>

#include "bsa/mlp.hpp"
#include "bsa/rng.hpp"

using namespace bsa;

namespace {

// features carry the age linearly with small noise, like corrected BSA does
void synthetic_regression(int n, int s, uint64_t seed, Eigen::MatrixXd& X, Eigen::VectorXd& ages) {
  Rng rng(seed);
  X.resize(n, s);
  ages.resize(n);
  for (int i = 0; i < n; ++i) {
    ages[i] = rng.uniform(20.0, 90.0);
    for (int j = 0; j < s; ++j) X(i, j) = ages[i] + 2.0 * rng.normal() + 5.0 * j;
  }
}

MlpFold stub_fold(double value, int s) {
  MlpFold fm;
  Rng rng(1);
  fm.net = build_mlp(s, rng);
  for (auto& layer : fm.net.layers) {
    for (auto& w : layer.weight.data) w = 0.0f;
    for (auto& b : layer.bias.data) b = 0.0f;
  }
  // final dense bias carries the standardized value
  fm.net.layers.back().bias.data[0] = static_cast<float>(value);
  fm.feat_mean = Eigen::VectorXd::Zero(s);
  fm.feat_scale = Eigen::VectorXd::Ones(s);
  fm.target_mean = 0.0;
  fm.target_sigma = 1.0;
  return fm;
}

}  // namespace

TEST_CASE("mlp widths follow 4s, 2s, s, 1") {
  Rng rng(2);
  const Network<float> net12 = build_mlp(12, rng);
  std::vector<std::pair<int, int>> dense_dims;
  for (const auto& l : net12.layers)
    if (l.kind == LayerKind::Dense) dense_dims.emplace_back(l.in_features, l.out_features);
  REQUIRE(dense_dims.size() == 4);
  CHECK(dense_dims[0] == std::pair<int, int>{12, 48});
  CHECK(dense_dims[1] == std::pair<int, int>{48, 24});
  CHECK(dense_dims[2] == std::pair<int, int>{24, 12});
  CHECK(dense_dims[3] == std::pair<int, int>{12, 1});

  const Network<float> net133 = build_mlp(133, rng);
  CHECK(net133.layers[0].out_features == 532);
  CHECK(net133.layers[2].out_features == 266);
  CHECK(net133.layers[4].out_features == 133);
  CHECK(net133.layers.back().out_features == 1);
}

TEST_CASE("ensemble prediction averages the folds") {
  MlpEnsemble ens;
  ens.num_features = 3;
  ens.folds.push_back(stub_fold(60.0, 3));
  ens.folds.push_back(stub_fold(70.0, 3));
  CHECK(predict_age(ens, Eigen::VectorXd::Zero(3)) == doctest::Approx(65.0));

  MlpEnsemble same;
  same.num_features = 3;
  for (int f = 0; f < 5; ++f) same.folds.push_back(stub_fold(42.0, 3));
  CHECK(predict_age(same, Eigen::VectorXd::Ones(3)) == doctest::Approx(42.0));
}

TEST_CASE("train_mlp_cv produces folds deterministically") {
  Eigen::MatrixXd X;
  Eigen::VectorXd ages;
  synthetic_regression(40, 4, 7, X, ages);

  MlpRecipe recipe;
  recipe.max_epochs = 60;
  recipe.patience = 20;

  Rng a(11), b(11);
  const MlpEnsemble m1 = train_mlp_cv(X, ages, 4, recipe, a);
  const MlpEnsemble m2 = train_mlp_cv(X, ages, 4, recipe, b);
  REQUIRE(m1.folds.size() == 4);
  for (size_t f = 0; f < m1.folds.size(); ++f) {
    CHECK(param_hash(m1.folds[f].net) == param_hash(m2.folds[f].net));
    CHECK(m1.folds[f].report.epochs_run <=
          m1.folds[f].report.best_epoch + recipe.patience);
  }
  CHECK(predict_age(m1, X.row(0).transpose()) == predict_age(m2, X.row(0).transpose()));
}

TEST_CASE("per-fold standardization centers its own training rows") {
  Eigen::MatrixXd X;
  Eigen::VectorXd ages;
  synthetic_regression(30, 3, 13, X, ages);
  MlpRecipe recipe;
  recipe.max_epochs = 5;
  recipe.patience = 5;
  Rng rng(17);
  const MlpEnsemble ens = train_mlp_cv(X, ages, 3, recipe, rng);

  // reconstruct fold membership is not exposed; check the transform against
  // the whole cohort bounds instead: stored scales are positive and finite
  for (const auto& fm : ens.folds) {
    for (Eigen::Index j = 0; j < fm.feat_scale.size(); ++j) {
      CHECK(fm.feat_scale[j] > 0.0);
      CHECK(std::isfinite(fm.feat_scale[j]));
    }
    CHECK(fm.target_sigma > 0.0);
  }
}

TEST_CASE("mlp learns the linear age signal") {
  Eigen::MatrixXd X;
  Eigen::VectorXd ages;
  synthetic_regression(80, 4, 23, X, ages);
  MlpRecipe recipe;
  recipe.max_epochs = 400;
  recipe.patience = 60;
  Rng rng(29);
  const MlpEnsemble ens = train_mlp_cv(X, ages, 5, recipe, rng);

  Eigen::MatrixXd Xt;
  Eigen::VectorXd at;
  synthetic_regression(30, 4, 31, Xt, at);
  double mae = 0.0;
  for (int i = 0; i < 30; ++i) mae += std::abs(predict_age(ens, Xt.row(i).transpose()) - at[i]);
  mae /= 30.0;
  CHECK(mae < 3.0);
}

TEST_CASE("fewer samples than folds is rejected") {
  Eigen::MatrixXd X(5, 2);
  X.setZero();
  Eigen::VectorXd ages(5);
  ages << 30, 40, 50, 60, 70;
  MlpRecipe recipe;
  Rng rng(37);
  CHECK_THROWS_AS(train_mlp_cv(X, ages, 10, recipe, rng), std::invalid_argument);
}

TEST_CASE("mlp ensemble round trips through disk") {
  Eigen::MatrixXd X;
  Eigen::VectorXd ages;
  synthetic_regression(30, 3, 41, X, ages);
  MlpRecipe recipe;
  recipe.max_epochs = 30;
  recipe.patience = 10;
  Rng rng(43);
  const MlpEnsemble ens = train_mlp_cv(X, ages, 3, recipe, rng);

  const auto dir = (std::filesystem::temp_directory_path() / "bsa_test_mlp").string();
  save_mlp(ens, dir);
  const MlpEnsemble back = load_mlp(dir);
  REQUIRE(back.folds.size() == ens.folds.size());
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd probe = X.row(i).transpose();
    CHECK(predict_age(back, probe) == predict_age(ens, probe));
  }
  std::filesystem::remove_all(dir);
}
