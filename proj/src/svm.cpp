#include "bsa/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "bsa/evalkit.hpp"

namespace bsa {

const char* kernel_name(KernelKind k) {
  switch (k) {
    case KernelKind::Linear: return "linear";
    case KernelKind::Poly: return "poly";
    case KernelKind::Rbf: return "rbf";
  }
  return "?";
}

KernelKind kernel_from_name(const std::string& name) {
  if (name == "linear") return KernelKind::Linear;
  if (name == "poly" || name == "polynomial") return KernelKind::Poly;
  if (name == "rbf") return KernelKind::Rbf;
  throw std::invalid_argument("unknown kernel: " + name);
}

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
  if (x.size() != z.size()) throw std::invalid_argument("kernel_eval: length mismatch");
  switch (spec.kind) {
    case KernelKind::Linear: return x.dot(z);
    case KernelKind::Poly: return std::pow(spec.gamma * x.dot(z) + spec.coef0, spec.degree);
    case KernelKind::Rbf: return std::exp(-spec.gamma * (x - z).squaredNorm());
  }
  return 0.0;
}

std::vector<double> make_c_grid() {
  std::vector<double> grid(100);
  for (int i = 0; i < 100; ++i) grid[i] = std::pow(10.0, -1.5 + 2.0 * i / 99.0);
  return grid;
}

double BinarySvm::decision(const Eigen::VectorXd& x) const {
  double f = bias;
  for (Eigen::Index i = 0; i < support.rows(); ++i)
    f += alpha_y[i] * kernel_eval(kernel, support.row(i).transpose(), x);
  return f;
}

namespace {

// Platt-style SMO with a full Gram matrix and error cache. All heuristics
// are deterministic: fallback scans start just past the current index.
class SmoSolver {
 public:
  SmoSolver(const Eigen::MatrixXd& X, const std::vector<int>& y, const KernelSpec& kernel,
            double C, double tol)
      : x_(X), y_(y), c_(C), tol_(tol), n_(static_cast<int>(y.size())) {
    gram_.resize(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j <= i; ++j) {
        const double k = kernel_eval(kernel, X.row(i).transpose(), X.row(j).transpose());
        gram_(i, j) = k;
        gram_(j, i) = k;
      }
    alpha_ = Eigen::VectorXd::Zero(n_);
    errors_ = Eigen::VectorXd::Zero(n_);
    for (int i = 0; i < n_; ++i) errors_[i] = -y_[i];  // f = 0 initially
  }

  void solve() {
    int num_changed = 0;
    bool examine_all = true;
    int guard = 0;
    const int guard_limit = 2000 * std::max(1, n_);
    while ((num_changed > 0 || examine_all) && guard++ < guard_limit) {
      num_changed = 0;
      for (int i = 0; i < n_; ++i) {
        if (!examine_all && (alpha_[i] <= 0.0 || alpha_[i] >= c_)) continue;
        num_changed += examine(i);
      }
      if (examine_all)
        examine_all = false;
      else if (num_changed == 0)
        examine_all = true;
    }
  }

  const Eigen::VectorXd& alpha() const { return alpha_; }
  double bias() const { return b_; }

 private:
  bool violates_kkt(int i) const {
    const double r = errors_[i] * y_[i];
    return (r < -tol_ && alpha_[i] < c_) || (r > tol_ && alpha_[i] > 0.0);
  }

  int examine(int i2) {
    if (!violates_kkt(i2)) return 0;

    // second-choice heuristic: largest |E1 - E2| among non-bound points
    int best = -1;
    double best_gap = -1.0;
    for (int i = 0; i < n_; ++i) {
      if (i == i2 || alpha_[i] <= 0.0 || alpha_[i] >= c_) continue;
      const double gap = std::abs(errors_[i] - errors_[i2]);
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (best >= 0 && take_step(best, i2)) return 1;

    for (int off = 1; off <= n_; ++off) {
      const int i1 = (i2 + off) % n_;
      if (alpha_[i1] > 0.0 && alpha_[i1] < c_ && take_step(i1, i2)) return 1;
    }
    for (int off = 1; off <= n_; ++off) {
      const int i1 = (i2 + off) % n_;
      if (take_step(i1, i2)) return 1;
    }
    return 0;
  }

  bool take_step(int i1, int i2) {
    if (i1 == i2) return false;
    const double a1_old = alpha_[i1], a2_old = alpha_[i2];
    const int y1 = y_[i1], y2 = y_[i2];
    const double e1 = errors_[i1], e2 = errors_[i2];
    const double s = y1 * y2;

    double lo, hi;
    if (y1 != y2) {
      lo = std::max(0.0, a2_old - a1_old);
      hi = std::min(c_, c_ + a2_old - a1_old);
    } else {
      lo = std::max(0.0, a1_old + a2_old - c_);
      hi = std::min(c_, a1_old + a2_old);
    }
    if (lo >= hi) return false;

    const double k11 = gram_(i1, i1), k12 = gram_(i1, i2), k22 = gram_(i2, i2);
    const double eta = k11 + k22 - 2.0 * k12;
    double a2;
    if (eta > 0.0) {
      a2 = a2_old + y2 * (e1 - e2) / eta;
      a2 = std::clamp(a2, lo, hi);
    } else {
      // eta cannot be negative for a PSD kernel; at zero the dual is linear
      // along the constraint segment, so move to whichever end it climbs to
      const double slope = y2 * (e1 - e2);
      if (slope > 1e-15)
        a2 = hi;
      else if (slope < -1e-15)
        a2 = lo;
      else
        return false;
    }
    if (std::abs(a2 - a2_old) < 1e-12 * (a2 + a2_old + 1e-12)) return false;
    const double a1 = a1_old + s * (a2_old - a2);

    const double d1 = y1 * (a1 - a1_old), d2 = y2 * (a2 - a2_old);
    const double b1 = b_ - e1 - d1 * k11 - d2 * k12;
    const double b2 = b_ - e2 - d1 * k12 - d2 * k22;
    double b_new;
    if (a1 > 0.0 && a1 < c_)
      b_new = b1;
    else if (a2 > 0.0 && a2 < c_)
      b_new = b2;
    else
      b_new = 0.5 * (b1 + b2);

    const double db = b_new - b_;
    for (int i = 0; i < n_; ++i) errors_[i] += d1 * gram_(i1, i) + d2 * gram_(i2, i) + db;
    alpha_[i1] = a1;
    alpha_[i2] = a2;
    b_ = b_new;
    return true;
  }

  const Eigen::MatrixXd& x_;
  const std::vector<int>& y_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd alpha_, errors_;
  double b_ = 0.0;
  double c_, tol_;
  int n_;
};

}  // namespace

BinarySvm smo_train_binary(const Eigen::MatrixXd& X, const std::vector<int>& y,
                           const KernelSpec& kernel, double C, double tol,
                           Eigen::VectorXd* alpha_out) {
  const int n = static_cast<int>(y.size());
  if (X.rows() != n || n < 2) throw std::invalid_argument("smo_train_binary: bad data");
  bool has_pos = false, has_neg = false;
  for (int v : y) {
    if (v == 1) has_pos = true;
    else if (v == -1) has_neg = true;
    else throw std::invalid_argument("smo_train_binary: labels must be +-1");
  }
  if (!has_pos || !has_neg) throw std::invalid_argument("smo_train_binary: single-class input");
  if (C <= 0.0) throw std::invalid_argument("smo_train_binary: C must be positive");

  SmoSolver solver(X, y, kernel, C, tol);
  solver.solve();
  if (alpha_out) *alpha_out = solver.alpha();

  BinarySvm model;
  model.kernel = kernel;
  model.bias = solver.bias();
  std::vector<int> sv;
  for (int i = 0; i < n; ++i)
    if (solver.alpha()[i] > 0.0) sv.push_back(i);
  model.support.resize(static_cast<Eigen::Index>(sv.size()), X.cols());
  model.alpha_y.resize(static_cast<Eigen::Index>(sv.size()));
  for (size_t i = 0; i < sv.size(); ++i) {
    model.support.row(static_cast<Eigen::Index>(i)) = X.row(sv[i]);
    model.alpha_y[static_cast<Eigen::Index>(i)] = solver.alpha()[sv[i]] * y[sv[i]];
  }
  return model;
}

double svm_dual_objective(const Eigen::MatrixXd& X, const std::vector<int>& y,
                          const KernelSpec& kernel, const Eigen::VectorXd& alpha) {
  const int n = static_cast<int>(y.size());
  double obj = alpha.sum();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      obj -= 0.5 * alpha[i] * alpha[j] * y[i] * y[j] *
             kernel_eval(kernel, X.row(i).transpose(), X.row(j).transpose());
  return obj;
}

SvmModel ovo_train(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                   const std::vector<std::string>& class_names, const KernelSpec& kernel, double C,
                   double tol) {
  const int n = static_cast<int>(labels.size());
  const int n_classes = static_cast<int>(class_names.size());
  if (X.rows() != n || n == 0) throw std::invalid_argument("ovo_train: bad data");
  std::vector<int> counts(n_classes, 0);
  for (int l : labels) {
    if (l < 0 || l >= n_classes) throw std::invalid_argument("ovo_train: label out of range");
    ++counts[l];
  }
  for (int c = 0; c < n_classes; ++c)
    if (counts[c] == 0)
      throw std::invalid_argument("ovo_train: class " + class_names[c] + " has no samples");

  SvmModel model;
  model.class_names = class_names;
  model.kernel = kernel;
  model.C = C;

  model.feat_mean = X.colwise().mean();
  Eigen::MatrixXd centered = X.rowwise() - model.feat_mean.transpose();
  model.feat_scale = (centered.array().square().colwise().sum() / n).sqrt();
  for (Eigen::Index j = 0; j < model.feat_scale.size(); ++j)
    if (model.feat_scale[j] < 1e-12) model.feat_scale[j] = 1.0;
  Eigen::MatrixXd Xs = centered.array().rowwise() / model.feat_scale.transpose().array();

  for (int a = 0; a < n_classes; ++a)
    for (int b = a + 1; b < n_classes; ++b) {
      std::vector<int> rows, y;
      for (int i = 0; i < n; ++i) {
        if (labels[i] == a) {
          rows.push_back(i);
          y.push_back(1);
        } else if (labels[i] == b) {
          rows.push_back(i);
          y.push_back(-1);
        }
      }
      Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), X.cols());
      for (size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = Xs.row(rows[i]);
      model.pairs.emplace_back(a, b);
      model.models.push_back(smo_train_binary(sub, y, kernel, C, tol));
    }
  return model;
}

OvoDecision ovo_classify(const SvmModel& model, const Eigen::VectorXd& x) {
  const int n_classes = static_cast<int>(model.class_names.size());
  const Eigen::VectorXd xs =
      (x - model.feat_mean).array() / model.feat_scale.array();

  Eigen::VectorXd votes = Eigen::VectorXd::Zero(n_classes);
  Eigen::VectorXd margins = Eigen::VectorXd::Zero(n_classes);
  for (size_t p = 0; p < model.pairs.size(); ++p) {
    const auto [a, b] = model.pairs[p];
    const double d = model.models[p].decision(xs);
    if (d > 0.0)
      votes[a] += 1.0;
    else
      votes[b] += 1.0;
    margins[a] += d;
    margins[b] -= d;
  }

  OvoDecision out;
  out.scores = Eigen::VectorXd(n_classes);
  for (int c = 0; c < n_classes; ++c)
    out.scores[c] = votes[c] + 1.0 / (1.0 + std::exp(-margins[c]));

  int best = 0;
  for (int c = 1; c < n_classes; ++c) {
    if (votes[c] > votes[best] ||
        (votes[c] == votes[best] && margins[c] > margins[best]))
      best = c;
  }
  out.label = best;
  return out;
}

namespace {

// deal class members round-robin into folds after a per-class shuffle
std::vector<int> stratified_fold_of(const std::vector<int>& labels, int num_classes, int folds,
                                    Rng& rng, std::vector<std::string>* warnings) {
  std::vector<int> fold_of(labels.size(), 0);
  for (int c = 0; c < num_classes; ++c) {
    std::vector<int> members;
    for (size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) members.push_back(static_cast<int>(i));
    if (warnings && !members.empty() && static_cast<int>(members.size()) < folds) {
      std::ostringstream msg;
      msg << "class " << c << " has " << members.size() << " members for " << folds
          << " folds; using proportional assignment";
      warnings->push_back(msg.str());
    }
    for (size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[rng.uniform_int(0, static_cast<int>(i) - 1)]);
    for (size_t i = 0; i < members.size(); ++i) fold_of[members[i]] = static_cast<int>(i % folds);
  }
  return fold_of;
}

}  // namespace

GridSearchResult grid_search(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                             int num_classes, const GridSearchConfig& cfg, Rng& rng) {
  GridSearchResult result;
  const std::vector<double> c_values = cfg.c_values.empty() ? make_c_grid() : cfg.c_values;
  const auto fold_of = stratified_fold_of(labels, num_classes, cfg.folds, rng, &result.warnings);

  std::vector<std::string> class_names(num_classes);
  for (int c = 0; c < num_classes; ++c) class_names[c] = std::to_string(c);

  for (KernelKind kernel : cfg.kernels) {
    KernelSpec spec;
    spec.kind = kernel;
    spec.gamma = 1.0 / static_cast<double>(X.cols());
    for (double C : c_values) {
      GridCell cell;
      cell.kernel = kernel;
      cell.C = C;
      for (int fold = 0; fold < cfg.folds; ++fold) {
        std::vector<int> train_rows, val_rows;
        for (size_t i = 0; i < labels.size(); ++i)
          (fold_of[i] == fold ? val_rows : train_rows).push_back(static_cast<int>(i));
        if (val_rows.empty()) continue;

        Eigen::MatrixXd Xt(static_cast<Eigen::Index>(train_rows.size()), X.cols());
        std::vector<int> yt(train_rows.size());
        for (size_t i = 0; i < train_rows.size(); ++i) {
          Xt.row(static_cast<Eigen::Index>(i)) = X.row(train_rows[i]);
          yt[i] = labels[train_rows[i]];
        }
        const SvmModel model = ovo_train(Xt, yt, class_names, spec, C);

        std::vector<int> pred(val_rows.size()), truth(val_rows.size());
        Eigen::MatrixXd scores(static_cast<Eigen::Index>(val_rows.size()), num_classes);
        for (size_t i = 0; i < val_rows.size(); ++i) {
          const OvoDecision d = ovo_classify(model, X.row(val_rows[i]).transpose());
          pred[i] = d.label;
          truth[i] = labels[val_rows[i]];
          scores.row(static_cast<Eigen::Index>(i)) = d.scores.transpose();
        }
        const ClassificationReport rep = classification_metrics(pred, scores, truth, num_classes);
        cell.fold_bacc.push_back(rep.bacc);
      }
      cell.mean_bacc = cell.fold_bacc.empty()
                           ? 0.0
                           : std::accumulate(cell.fold_bacc.begin(), cell.fold_bacc.end(), 0.0) /
                                 static_cast<double>(cell.fold_bacc.size());
      result.cells.push_back(std::move(cell));
    }
  }

  // argmax with ties resolved toward smaller C, then kernel order
  auto rank_of = [](KernelKind k) {
    return k == KernelKind::Linear ? 0 : (k == KernelKind::Poly ? 1 : 2);
  };
  const GridCell* best = nullptr;
  for (const auto& cell : result.cells) {
    if (!best || cell.mean_bacc > best->mean_bacc ||
        (cell.mean_bacc == best->mean_bacc &&
         (cell.C < best->C || (cell.C == best->C && rank_of(cell.kernel) < rank_of(best->kernel)))))
      best = &cell;
  }
  if (!best) throw std::runtime_error("grid_search: empty grid");
  result.best_kernel = best->kernel;
  result.best_c = best->C;
  result.best_bacc = best->mean_bacc;
  return result;
}

void save_svm(const SvmModel& model, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_svm: cannot open " + path);
  os.precision(17);
  os << "SVM1\n";
  os << "classes";
  for (const auto& c : model.class_names) os << ' ' << c;
  os << '\n';
  os << "kernel " << kernel_name(model.kernel.kind) << " gamma " << model.kernel.gamma << " coef0 "
     << model.kernel.coef0 << " degree " << model.kernel.degree << '\n';
  os << "C " << model.C << '\n';
  os << "features " << model.feat_mean.size() << '\n';
  os << "mean";
  for (Eigen::Index j = 0; j < model.feat_mean.size(); ++j) os << ' ' << model.feat_mean[j];
  os << '\n';
  os << "scale";
  for (Eigen::Index j = 0; j < model.feat_scale.size(); ++j) os << ' ' << model.feat_scale[j];
  os << '\n';
  os << "pairs " << model.pairs.size() << '\n';
  for (size_t p = 0; p < model.pairs.size(); ++p) {
    const auto& m = model.models[p];
    os << "pair " << model.pairs[p].first << ' ' << model.pairs[p].second << " sv "
       << m.support.rows() << " bias " << m.bias << '\n';
    for (Eigen::Index i = 0; i < m.support.rows(); ++i) {
      os << m.alpha_y[i];
      for (Eigen::Index j = 0; j < m.support.cols(); ++j) os << ' ' << m.support(i, j);
      os << '\n';
    }
  }
  if (!os) throw std::runtime_error("save_svm: write failed for " + path);
}

SvmModel load_svm(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_svm: cannot open " + path);
  std::string line, tag;
  if (!std::getline(is, line) || line != "SVM1") throw std::runtime_error("load_svm: bad magic");

  SvmModel model;
  Eigen::Index n_features = 0;
  size_t n_pairs = 0;

  if (!std::getline(is, line)) throw std::runtime_error("load_svm: truncated");
  {
    std::istringstream ss(line);
    ss >> tag;
    std::string name;
    while (ss >> name) model.class_names.push_back(name);
  }
  if (!std::getline(is, line)) throw std::runtime_error("load_svm: truncated");
  {
    std::istringstream ss(line);
    std::string kname, key;
    ss >> tag >> kname;
    model.kernel.kind = kernel_from_name(kname);
    while (ss >> key) {
      if (key == "gamma") ss >> model.kernel.gamma;
      else if (key == "coef0") ss >> model.kernel.coef0;
      else if (key == "degree") ss >> model.kernel.degree;
    }
  }
  is >> tag >> model.C;
  is >> tag >> n_features;
  model.feat_mean.resize(n_features);
  model.feat_scale.resize(n_features);
  is >> tag;
  for (Eigen::Index j = 0; j < n_features; ++j) is >> model.feat_mean[j];
  is >> tag;
  for (Eigen::Index j = 0; j < n_features; ++j) is >> model.feat_scale[j];
  is >> tag >> n_pairs;
  for (size_t p = 0; p < n_pairs; ++p) {
    int a, b;
    Eigen::Index sv;
    BinarySvm m;
    m.kernel = model.kernel;
    is >> tag >> a >> b >> tag >> sv >> tag >> m.bias;
    m.support.resize(sv, n_features);
    m.alpha_y.resize(sv);
    for (Eigen::Index i = 0; i < sv; ++i) {
      is >> m.alpha_y[i];
      for (Eigen::Index j = 0; j < n_features; ++j) is >> m.support(i, j);
    }
    model.pairs.emplace_back(a, b);
    model.models.push_back(std::move(m));
  }
  if (!is) throw std::runtime_error("load_svm: truncated file " + path);
  return model;
}

}  // namespace bsa
