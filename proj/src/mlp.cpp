#include "bsa/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "bsa/model_io.hpp"

namespace bsa {

Network<float> build_mlp(int num_features, Rng& rng) {
  if (num_features < 1) throw std::invalid_argument("build_mlp: need at least one feature");
  const int s = num_features;
  Network<float> net;
  net.input_shape = {s};
  net.add_dense(s, 4 * s, rng);
  net.add_relu();
  net.add_dense(4 * s, 2 * s, rng);
  net.add_relu();
  net.add_dense(2 * s, s, rng);
  net.add_relu();
  net.add_dense(s, 1, rng);
  return net;
}

namespace {

Tensor<float> to_input(const Eigen::VectorXd& standardized) {
  Tensor<float> t({static_cast<int>(standardized.size())});
  for (Eigen::Index j = 0; j < standardized.size(); ++j)
    t.data[j] = static_cast<float>(standardized[j]);
  return t;
}

double fold_val_loss_years(const Network<float>& net, const std::vector<Tensor<float>>& xs,
                           const std::vector<float>& z_targets, double sigma) {
  double acc = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const Tensor<float> pred = forward(net, xs[i]);
    acc += std::abs(static_cast<double>(pred.data[0]) - static_cast<double>(z_targets[i]));
  }
  return acc / static_cast<double>(xs.size()) * sigma;
}

}  // namespace

MlpEnsemble train_mlp_cv(const Eigen::MatrixXd& features, const Eigen::VectorXd& ages, int folds,
                         const MlpRecipe& recipe, Rng& rng) {
  const int n = static_cast<int>(features.rows());
  if (folds < 2) throw std::invalid_argument("train_mlp_cv: need at least 2 folds");
  if (n < folds) throw std::invalid_argument("train_mlp_cv: fewer samples than folds");
  if (ages.size() != n) throw std::invalid_argument("train_mlp_cv: age count mismatch");

  MlpEnsemble ensemble;
  ensemble.num_features = static_cast<int>(features.cols());

  std::vector<int> fold_of(n);
  {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
    for (int i = 0; i < n; ++i) fold_of[order[i]] = i % folds;
  }

  for (int fold = 0; fold < folds; ++fold) {
    std::vector<int> train_rows, val_rows;
    for (int i = 0; i < n; ++i) (fold_of[i] == fold ? val_rows : train_rows).push_back(i);

    MlpFold fm;
    const Eigen::Index nt = static_cast<Eigen::Index>(train_rows.size());
    Eigen::MatrixXd Xt(nt, features.cols());
    Eigen::VectorXd yt(nt);
    for (Eigen::Index i = 0; i < nt; ++i) {
      Xt.row(i) = features.row(train_rows[i]);
      yt[i] = ages[train_rows[i]];
    }
    fm.feat_mean = Xt.colwise().mean();
    Eigen::MatrixXd centered = Xt.rowwise() - fm.feat_mean.transpose();
    fm.feat_scale = (centered.array().square().colwise().sum() / static_cast<double>(nt)).sqrt();
    for (Eigen::Index j = 0; j < fm.feat_scale.size(); ++j)
      if (fm.feat_scale[j] < 1e-12) fm.feat_scale[j] = 1.0;
    fm.target_mean = yt.mean();
    const double var = (yt.array() - fm.target_mean).square().mean();
    fm.target_sigma = var > 1e-18 ? std::sqrt(var) : 1.0;

    auto standardized_input = [&](int row) {
      const Eigen::VectorXd xs =
          (features.row(row).transpose() - fm.feat_mean).array() / fm.feat_scale.array();
      return to_input(xs);
    };

    std::vector<Tensor<float>> train_x, val_x;
    std::vector<float> train_z, val_z;
    for (int r : train_rows) {
      train_x.push_back(standardized_input(r));
      train_z.push_back(static_cast<float>((ages[r] - fm.target_mean) / fm.target_sigma));
    }
    for (int r : val_rows) {
      val_x.push_back(standardized_input(r));
      val_z.push_back(static_cast<float>((ages[r] - fm.target_mean) / fm.target_sigma));
    }

    Network<float> net = build_mlp(ensemble.num_features, rng);
    OptimizerState<float> opt = OptimizerState<float>::adam(recipe.learning_rate);
    opt.init_like(net);
    NetGrads<float> grads;
    grads.init_like(net);

    Network<float> best = net;
    double best_val = std::numeric_limits<double>::infinity();
    TrainReport report;

    std::vector<size_t> order(train_x.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= recipe.max_epochs; ++epoch) {
      for (size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(0, static_cast<int>(i))]);
      for (size_t start = 0; start < order.size(); start += recipe.batch_size) {
        const size_t stop = std::min(order.size(), start + recipe.batch_size);
        std::vector<Tensor<float>> xs, ys;
        for (size_t i = start; i < stop; ++i) {
          xs.push_back(train_x[order[i]]);
          ys.emplace_back(std::vector<int>{1}, train_z[order[i]]);
        }
        batch_gradients(net, xs, ys, grads);
        opt.step(net, grads);
      }
      const double val_loss = fold_val_loss_years(net, val_x, val_z, fm.target_sigma);
      report.epochs_run = epoch;
      if (val_loss < best_val) {
        best_val = val_loss;
        best = net;
        report.best_epoch = epoch;
      } else if (epoch - report.best_epoch >= recipe.patience) {
        break;
      }
    }
    report.best_val_loss = best_val;
    fm.report = report;
    fm.net = std::move(best);
    ensemble.folds.push_back(std::move(fm));
  }
  return ensemble;
}

double predict_age(const MlpEnsemble& ensemble, const Eigen::VectorXd& features) {
  if (features.size() != ensemble.num_features)
    throw std::invalid_argument("predict_age: feature length mismatch");
  if (ensemble.folds.empty()) throw std::invalid_argument("predict_age: untrained ensemble");
  double acc = 0.0;
  for (const auto& fm : ensemble.folds) {
    const Eigen::VectorXd xs = (features - fm.feat_mean).array() / fm.feat_scale.array();
    Tensor<float> t({static_cast<int>(xs.size())});
    for (Eigen::Index j = 0; j < xs.size(); ++j) t.data[j] = static_cast<float>(xs[j]);
    const Tensor<float> pred = forward(fm.net, t);
    acc += fm.target_mean + fm.target_sigma * static_cast<double>(pred.data[0]);
  }
  return acc / static_cast<double>(ensemble.folds.size());
}

void save_mlp(const MlpEnsemble& ensemble, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir + "/mlp.txt");
  if (!os) throw std::runtime_error("save_mlp: cannot open manifest in " + dir);
  os.precision(17);
  os << "MLP1\n";
  os << "features " << ensemble.num_features << '\n';
  os << "folds " << ensemble.folds.size() << '\n';
  for (size_t f = 0; f < ensemble.folds.size(); ++f) {
    const auto& fm = ensemble.folds[f];
    os << "fold " << f << " target_mean " << fm.target_mean << " target_sigma " << fm.target_sigma
       << " epochs " << fm.report.epochs_run << " best_epoch " << fm.report.best_epoch
       << " best_val " << fm.report.best_val_loss << '\n';
    os << "feat_mean";
    for (Eigen::Index j = 0; j < fm.feat_mean.size(); ++j) os << ' ' << fm.feat_mean[j];
    os << '\n';
    os << "feat_scale";
    for (Eigen::Index j = 0; j < fm.feat_scale.size(); ++j) os << ' ' << fm.feat_scale[j];
    os << '\n';
  }
  for (size_t f = 0; f < ensemble.folds.size(); ++f) {
    std::ostringstream name;
    name << dir << "/fold_" << f << ".nnet";
    save_network(ensemble.folds[f].net, name.str());
  }
}

MlpEnsemble load_mlp(const std::string& dir) {
  std::ifstream is(dir + "/mlp.txt");
  if (!is) throw std::runtime_error("load_mlp: cannot open manifest in " + dir);
  std::string line, tag;
  if (!std::getline(is, line) || line != "MLP1") throw std::runtime_error("load_mlp: bad magic");

  MlpEnsemble ensemble;
  size_t n_folds = 0;
  is >> tag >> ensemble.num_features;
  is >> tag >> n_folds;
  std::getline(is, line);
  for (size_t f = 0; f < n_folds; ++f) {
    MlpFold fm;
    if (!std::getline(is, line)) throw std::runtime_error("load_mlp: truncated manifest");
    {
      std::istringstream ss(line);
      std::string key;
      size_t idx;
      ss >> key >> idx;
      while (ss >> key) {
        if (key == "target_mean") ss >> fm.target_mean;
        else if (key == "target_sigma") ss >> fm.target_sigma;
        else if (key == "epochs") ss >> fm.report.epochs_run;
        else if (key == "best_epoch") ss >> fm.report.best_epoch;
        else if (key == "best_val") ss >> fm.report.best_val_loss;
      }
    }
    fm.feat_mean.resize(ensemble.num_features);
    fm.feat_scale.resize(ensemble.num_features);
    if (!std::getline(is, line)) throw std::runtime_error("load_mlp: truncated manifest");
    {
      std::istringstream ss(line);
      ss >> tag;
      for (Eigen::Index j = 0; j < fm.feat_mean.size(); ++j) ss >> fm.feat_mean[j];
    }
    if (!std::getline(is, line)) throw std::runtime_error("load_mlp: truncated manifest");
    {
      std::istringstream ss(line);
      ss >> tag;
      for (Eigen::Index j = 0; j < fm.feat_scale.size(); ++j) ss >> fm.feat_scale[j];
    }
    std::ostringstream name;
    name << dir << "/fold_" << f << ".nnet";
    fm.net = load_network(name.str());
    ensemble.folds.push_back(std::move(fm));
  }
  return ensemble;
}

}  // namespace bsa
