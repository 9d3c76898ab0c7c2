#include "bsa/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace bsa::pipeline {

namespace fs = std::filesystem;

PhantomSpec spec_from_config(const PipelineConfig& cfg) {
  PhantomSpec spec = PhantomSpec::desk_default();
  spec.noise_sigma = cfg.noise_sigma;
  spec.voxel_volume = cfg.voxel_volume;
  spec.size_jitter = cfg.size_jitter;
  if (cfg.phantom_nx != spec.nx || cfg.phantom_ny != spec.ny || cfg.phantom_nz != spec.nz) {
    // rescale the default geometry onto the requested grid
    const double sx = static_cast<double>(cfg.phantom_nx) / spec.nx;
    const double sy = static_cast<double>(cfg.phantom_ny) / spec.ny;
    const double sz = static_cast<double>(cfg.phantom_nz) / spec.nz;
    for (auto& s : spec.structures) {
      s.shape.cx *= sx;
      s.shape.rx *= sx;
      s.shape.cy *= sy;
      s.shape.ry *= sy;
      s.shape.cz *= sz;
      s.shape.rz *= sz;
    }
    spec.nx = cfg.phantom_nx;
    spec.ny = cfg.phantom_ny;
    spec.nz = cfg.phantom_nz;
  }
  spec.validate();
  return spec;
}

void write_cohort(const std::vector<PhantomSubject>& cohort, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.csv");
  if (!manifest) throw std::runtime_error("write_cohort: cannot open manifest in " + dir);
  manifest.precision(17);
  manifest << "id,age,class,seed\n";
  for (const auto& s : cohort) {
    manifest << s.id << ',' << s.age << ',' << s.class_id << ',' << s.seed << '\n';
    store_volume(s.volume, dir + "/vol_" + s.id + ".vol3");
    store_labels(s.labels, dir + "/lab_" + s.id + ".lab3");
  }
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("missing cohort manifest: " + path);
  std::string line;
  std::getline(is, line);  // header
  std::vector<ManifestRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestRow r;
    std::string field;
    std::getline(ss, r.id, ',');
    std::getline(ss, field, ',');
    r.age = std::stod(field);
    std::getline(ss, r.class_id, ',');
    std::getline(ss, field, ',');
    r.seed = std::stoull(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<PhantomSubject> load_cohort(const std::string& dir) {
  const auto manifest = read_manifest(dir + "/manifest.csv");
  std::vector<PhantomSubject> cohort;
  cohort.reserve(manifest.size());
  for (const auto& r : manifest) {
    PhantomSubject s;
    s.id = r.id;
    s.age = r.age;
    s.class_id = r.class_id;
    s.seed = r.seed;
    const std::string vol_path = dir + "/vol_" + r.id + ".vol3";
    const std::string lab_path = dir + "/lab_" + r.id + ".lab3";
    if (!fs::exists(vol_path)) throw MissingArtifact("missing volume: " + vol_path);
    if (!fs::exists(lab_path)) throw MissingArtifact("missing labels: " + lab_path);
    s.volume = load_volume(vol_path);
    s.labels = load_labels(lab_path);
    cohort.push_back(std::move(s));
  }
  return cohort;
}

PatchLayout layout_from_config(const PipelineConfig& cfg, std::array<int, 3> input_dims) {
  std::array<int, 3> working = input_dims;
  if (cfg.downscale)
    for (int i = 0; i < 3; ++i) working[i] = (working[i] + 1) / 2;
  return PatchLayout::make(working, cfg.patch_dims, cfg.k);
}

VolumeF subject_age_map(const EnsembleModel& model, const VolumeF& volume,
                        const PipelineConfig& cfg) {
  const VolumeF working = cfg.downscale ? downscale_by2(volume) : volume;
  return predict_age_map(model, working, volume.dims());
}

std::vector<StructureFeatures> build_features(const EnsembleModel& model,
                                              const std::vector<PhantomSubject>& cohort,
                                              const PipelineConfig& cfg,
                                              const CorrectionModel* correction,
                                              std::vector<std::string>* log) {
  if (cohort.empty()) throw std::invalid_argument("build_features: empty cohort");

  std::vector<BsaValues> bsa(cohort.size());
  std::vector<std::string> classes(cohort.size());
  for (size_t i = 0; i < cohort.size(); ++i) {
    const VolumeF map = subject_age_map(model, cohort[i].volume, cfg);
    bsa[i] = compute_bsa(map, cohort[i].labels);
    classes[i] = cohort[i].class_id;
  }
  const auto imputation_log = impute_missing_bsa(bsa, classes, "CN");
  if (log) log->insert(log->end(), imputation_log.begin(), imputation_log.end());

  std::vector<StructureFeatures> rows;
  rows.reserve(cohort.size());
  for (size_t i = 0; i < cohort.size(); ++i) {
    StructureFeatures r;
    r.id = cohort[i].id;
    r.age = cohort[i].age;
    r.class_id = cohort[i].class_id;
    r.bsa = correction ? apply_bias_correction(*correction, bsa[i].mean_age) : bsa[i].mean_age;
    r.bsage = compute_bsage(r.bsa, r.age);
    r.volumes = compute_structure_volumes(cohort[i].labels, cfg.voxel_volume);
    rows.push_back(std::move(r));
  }
  return rows;
}

FeatureSet feature_set_from_name(const std::string& name) {
  if (name == "bsage") return FeatureSet::Bsage;
  if (name == "vol") return FeatureSet::Vol;
  if (name == "bsage+vol") return FeatureSet::BsageVol;
  if (name == "true-age") return FeatureSet::TrueAge;
  if (name == "pred-age") return FeatureSet::PredAge;
  throw ConfigError("unknown feature set: " + name +
                    " (expected bsage|vol|bsage+vol|true-age|pred-age)");
}

const char* feature_set_name(FeatureSet fs) {
  switch (fs) {
    case FeatureSet::Bsage: return "bsage";
    case FeatureSet::Vol: return "vol";
    case FeatureSet::BsageVol: return "bsage+vol";
    case FeatureSet::TrueAge: return "true-age";
    case FeatureSet::PredAge: return "pred-age";
  }
  return "?";
}

Eigen::MatrixXd feature_matrix(const std::vector<StructureFeatures>& rows, FeatureSet fs,
                               const std::vector<double>* predicted_ages) {
  if (rows.empty()) throw std::invalid_argument("feature_matrix: no rows");
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index s = static_cast<Eigen::Index>(rows.front().bsage.size());
  auto fill = [&](Eigen::MatrixXd& m, Eigen::Index col0, auto getter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& v = getter(rows[i]);
      for (Eigen::Index j = 0; j < s; ++j) m(i, col0 + j) = v[j];
    }
  };
  switch (fs) {
    case FeatureSet::Bsage: {
      Eigen::MatrixXd m(n, s);
      fill(m, 0, [](const StructureFeatures& r) -> const std::vector<double>& { return r.bsage; });
      return m;
    }
    case FeatureSet::Vol: {
      Eigen::MatrixXd m(n, s);
      fill(m, 0, [](const StructureFeatures& r) -> const std::vector<double>& { return r.volumes; });
      return m;
    }
    case FeatureSet::BsageVol: {
      Eigen::MatrixXd m(n, 2 * s);
      fill(m, 0, [](const StructureFeatures& r) -> const std::vector<double>& { return r.bsage; });
      fill(m, s, [](const StructureFeatures& r) -> const std::vector<double>& { return r.volumes; });
      return m;
    }
    case FeatureSet::TrueAge: {
      Eigen::MatrixXd m(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) m(i, 0) = rows[i].age;
      return m;
    }
    case FeatureSet::PredAge: {
      if (!predicted_ages || predicted_ages->size() != rows.size())
        throw std::invalid_argument("feature_matrix: pred-age needs one prediction per row");
      Eigen::MatrixXd m(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) m(i, 0) = (*predicted_ages)[i];
      return m;
    }
  }
  throw std::logic_error("feature_matrix: unreachable");
}

const std::vector<std::string>& canonical_classes() {
  static const std::vector<std::string> order{"CN", "A", "B", "C", "D", "E"};
  return order;
}

int class_index(const std::string& cls) {
  const auto& order = canonical_classes();
  for (size_t i = 0; i < order.size(); ++i)
    if (order[i] == cls) return static_cast<int>(i);
  throw std::invalid_argument("unknown class: " + cls);
}

PopulationSummary population_summary(const std::vector<StructureFeatures>& rows) {
  if (rows.empty()) throw std::invalid_argument("population_summary: no rows");
  const size_t s = rows.front().bsage.size();

  PopulationSummary summary;
  for (const auto& cls : canonical_classes()) {
    std::vector<double> brainage;
    Eigen::VectorXd bsage_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s));
    for (const auto& r : rows) {
      if (r.class_id != cls) continue;
      double weighted = 0.0, total = 0.0;
      for (size_t j = 0; j < s; ++j) {
        weighted += r.bsage[j] * r.volumes[j];
        total += r.volumes[j];
        bsage_sum[static_cast<Eigen::Index>(j)] += r.bsage[j];
      }
      if (total <= 0.0) throw std::runtime_error("population_summary: subject with zero volume");
      brainage.push_back(weighted / total);
    }
    if (brainage.empty()) continue;
    std::vector<double> sorted = brainage;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    double mean = 0.0;
    for (double v : brainage) mean += v;
    mean /= static_cast<double>(n);

    summary.classes.push_back(cls);
    summary.counts.push_back(static_cast<int>(n));
    summary.mean_brainage.push_back(mean);
    summary.median_brainage.push_back(median);
    summary.mean_bsage.conservativeResize(static_cast<Eigen::Index>(summary.classes.size()),
                                          static_cast<Eigen::Index>(s));
    summary.mean_bsage.row(static_cast<Eigen::Index>(summary.classes.size()) - 1) =
        bsage_sum.transpose() / static_cast<double>(n);
  }
  return summary;
}

void write_population_summary(const PopulationSummary& summary, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_population_summary: cannot open " + path);
  os.precision(17);
  os << "class,count,mean_brainage,median_brainage";
  for (Eigen::Index j = 0; j < summary.mean_bsage.cols(); ++j) os << ",mean_bsage_" << j + 1;
  os << '\n';
  for (size_t c = 0; c < summary.classes.size(); ++c) {
    os << summary.classes[c] << ',' << summary.counts[c] << ',' << summary.mean_brainage[c] << ','
       << summary.median_brainage[c];
    for (Eigen::Index j = 0; j < summary.mean_bsage.cols(); ++j)
      os << ',' << summary.mean_bsage(static_cast<Eigen::Index>(c), j);
    os << '\n';
  }
}

void write_predictions_csv(const std::string& path, const std::vector<PredictionRow>& rows,
                           const std::vector<std::string>& score_names) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_predictions_csv: cannot open " + path);
  os.precision(17);
  os << "id,age,class,value,predicted_class";
  for (const auto& n : score_names) os << ",score_" << n;
  os << '\n';
  for (const auto& r : rows) {
    os << r.id << ',' << r.age << ',' << r.class_id << ',' << r.value << ',' << r.predicted_class;
    for (double v : r.scores) os << ',' << v;
    os << '\n';
  }
}

std::vector<PredictionRow> read_predictions_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("missing predictions file: " + path);
  std::string line;
  std::getline(is, line);
  std::vector<PredictionRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    PredictionRow r;
    std::string field;
    std::getline(ss, r.id, ',');
    std::getline(ss, field, ',');
    r.age = std::stod(field);
    std::getline(ss, r.class_id, ',');
    std::getline(ss, field, ',');
    r.value = std::stod(field);
    std::getline(ss, r.predicted_class, ',');
    while (std::getline(ss, field, ',')) r.scores.push_back(std::stod(field));
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_cv_report(const std::string& path, const GridSearchResult& grid) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_cv_report: cannot open " + path);
  os.precision(17);
  os << "kernel,C,fold,bacc\n";
  for (const auto& cell : grid.cells)
    for (size_t f = 0; f < cell.fold_bacc.size(); ++f)
      os << kernel_name(cell.kernel) << ',' << cell.C << ',' << f << ',' << cell.fold_bacc[f]
         << '\n';
}

void write_run_manifest(const std::string& dir, const PipelineConfig& cfg,
                        const std::string& command,
                        const std::vector<std::pair<std::string, std::string>>& extras) {
  fs::create_directories(dir);
  std::ofstream os(dir + "/run_manifest.txt");
  if (!os) throw std::runtime_error("write_run_manifest: cannot open " + dir);
  os << "command " << command << '\n';
  os << "config_hash " << config_hash(cfg) << '\n';
  os << "seed " << cfg.seed << '\n';
  for (const auto& [k, v] : extras) os << k << ' ' << v << '\n';
  os << "config_begin\n" << dump_config(cfg) << "config_end\n";
}

}  // namespace bsa::pipeline
