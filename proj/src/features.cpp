#include "bsa/features.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bsa {

BsaValues compute_bsa(const VolumeF& age_map, const LabelVolume& labels) {
  if (age_map.dims() != labels.dims()) throw std::invalid_argument("compute_bsa: dims mismatch");
  const int s = labels.num_structures;
  std::vector<double> sum(s, 0.0);
  std::vector<int64_t> count(s, 0);
  for (size_t i = 0; i < labels.size(); ++i) {
    const uint16_t l = labels.labels[i];
    if (l == 0) continue;
    sum[l - 1] += static_cast<double>(age_map.data[i]);
    ++count[l - 1];
  }
  BsaValues out;
  out.mean_age.assign(s, 0.0);
  out.present.assign(s, 0);
  for (int j = 0; j < s; ++j) {
    if (count[j] > 0) {
      out.mean_age[j] = sum[j] / static_cast<double>(count[j]);
      out.present[j] = 1;
    }
  }
  return out;
}

std::vector<double> compute_structure_volumes(const LabelVolume& labels, double voxel_volume) {
  const auto counts = voxel_counts_per_label(labels);
  std::vector<double> volumes(counts.size());
  for (size_t j = 0; j < counts.size(); ++j) volumes[j] = static_cast<double>(counts[j]) * voxel_volume;
  return volumes;
}

CorrectionModel fit_bias_correction(const Eigen::MatrixXd& bsa_by_subject,
                                    const Eigen::VectorXd& true_ages, bool with_intercept) {
  const Eigen::Index n = bsa_by_subject.rows();
  const Eigen::Index s = bsa_by_subject.cols();
  if (n < 2) throw std::invalid_argument("fit_bias_correction: need at least 2 subjects");
  if (true_ages.size() != n) throw std::invalid_argument("fit_bias_correction: age count mismatch");

  CorrectionModel model;
  model.beta.resize(s);
  model.has_intercept = with_intercept;
  if (with_intercept) model.intercept.resize(s);

  for (Eigen::Index j = 0; j < s; ++j) {
    const auto x = bsa_by_subject.col(j);
    if (!with_intercept) {
      const double denom = x.squaredNorm();
      if (denom <= 0.0) throw std::runtime_error("fit_bias_correction: all-zero structure column");
      model.beta[j] = x.dot(true_ages) / denom;
    } else {
      Eigen::MatrixXd design(n, 2);
      design.col(0) = x;
      design.col(1).setOnes();
      const Eigen::Vector2d coef =
          (design.transpose() * design).ldlt().solve(design.transpose() * true_ages);
      model.beta[j] = coef[0];
      model.intercept[j] = coef[1];
    }
  }
  return model;
}

std::vector<double> apply_bias_correction(const CorrectionModel& model,
                                          const std::vector<double>& bsa) {
  if (bsa.size() != model.beta.size())
    throw std::invalid_argument("apply_bias_correction: length mismatch");
  std::vector<double> out(bsa.size());
  for (size_t j = 0; j < bsa.size(); ++j) {
    out[j] = model.beta[j] * bsa[j];
    if (model.has_intercept) out[j] += model.intercept[j];
  }
  return out;
}

std::vector<double> compute_bsage(const std::vector<double>& corrected_bsa, double age) {
  if (age < 0.0) throw std::invalid_argument("compute_bsage: negative age");
  std::vector<double> out(corrected_bsa.size());
  for (size_t j = 0; j < corrected_bsa.size(); ++j) out[j] = corrected_bsa[j] - age;
  return out;
}

double global_brainage(const VolumeF& age_map, const LabelVolume& labels, double age) {
  if (age_map.dims() != labels.dims()) throw std::invalid_argument("global_brainage: dims mismatch");
  double sum = 0.0;
  int64_t count = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels.labels[i] == 0) continue;
    sum += static_cast<double>(age_map.data[i]);
    ++count;
  }
  if (count == 0) throw std::runtime_error("global_brainage: empty brain mask");
  return sum / static_cast<double>(count) - age;
}

void write_features_csv(const std::string& path, const std::vector<StructureFeatures>& rows) {
  if (rows.empty()) throw std::invalid_argument("write_features_csv: no rows");
  const size_t s = rows.front().bsa.size();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_features_csv: cannot open " + path);
  os.precision(17);
  os << "subject,age,class";
  for (size_t j = 1; j <= s; ++j) os << ",bsa_" << j;
  for (size_t j = 1; j <= s; ++j) os << ",bsage_" << j;
  for (size_t j = 1; j <= s; ++j) os << ",vol_" << j;
  os << '\n';
  for (const auto& r : rows) {
    if (r.bsa.size() != s || r.bsage.size() != s || r.volumes.size() != s)
      throw std::invalid_argument("write_features_csv: ragged rows");
    os << r.id << ',' << r.age << ',' << r.class_id;
    for (double v : r.bsa) os << ',' << v;
    for (double v : r.bsage) os << ',' << v;
    for (double v : r.volumes) os << ',' << v;
    os << '\n';
  }
  if (!os) throw std::runtime_error("write_features_csv: write failed for " + path);
}

std::vector<StructureFeatures> read_features_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_features_csv: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_features_csv: empty file " + path);

  size_t columns = 1;
  for (char c : line) columns += c == ',';
  if (columns < 6 || (columns - 3) % 3 != 0)
    throw std::runtime_error("read_features_csv: unexpected header in " + path);
  const size_t s = (columns - 3) / 3;

  std::vector<StructureFeatures> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    StructureFeatures r;
    std::getline(ss, r.id, ',');
    std::getline(ss, field, ',');
    r.age = std::stod(field);
    std::getline(ss, r.class_id, ',');
    auto read_block = [&](std::vector<double>& dst) {
      dst.resize(s);
      for (size_t j = 0; j < s; ++j) {
        if (!std::getline(ss, field, ','))
          throw std::runtime_error("read_features_csv: short row in " + path);
        dst[j] = std::stod(field);
      }
    };
    read_block(r.bsa);
    read_block(r.bsage);
    read_block(r.volumes);
    rows.push_back(std::move(r));
  }
  return rows;
}

void save_correction(const CorrectionModel& model, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_correction: cannot open " + path);
  os.precision(17);
  os << "CORRECTION1\n";
  os << "structures " << model.beta.size() << '\n';
  os << "intercept " << (model.has_intercept ? 1 : 0) << '\n';
  for (size_t j = 0; j < model.beta.size(); ++j) {
    os << model.beta[j];
    if (model.has_intercept) os << ' ' << model.intercept[j];
    os << '\n';
  }
  if (!os) throw std::runtime_error("save_correction: write failed for " + path);
}

CorrectionModel load_correction(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_correction: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "CORRECTION1")
    throw std::runtime_error("load_correction: bad magic in " + path);
  size_t s = 0;
  int with_intercept = 0;
  is >> line >> s;
  if (line != "structures") throw std::runtime_error("load_correction: bad header");
  is >> line >> with_intercept;
  if (line != "intercept") throw std::runtime_error("load_correction: bad header");
  CorrectionModel model;
  model.has_intercept = with_intercept != 0;
  model.beta.resize(s);
  if (model.has_intercept) model.intercept.resize(s);
  for (size_t j = 0; j < s; ++j) {
    is >> model.beta[j];
    if (model.has_intercept) is >> model.intercept[j];
  }
  if (!is) throw std::runtime_error("load_correction: truncated file " + path);
  return model;
}

std::vector<std::string> impute_missing_bsa(std::vector<BsaValues>& cohort,
                                            const std::vector<std::string>& classes,
                                            const std::string& healthy_class) {
  if (cohort.size() != classes.size())
    throw std::invalid_argument("impute_missing_bsa: class list size mismatch");
  std::vector<std::string> log;
  if (cohort.empty()) return log;
  const size_t s = cohort.front().present.size();

  for (size_t j = 0; j < s; ++j) {
    double healthy_sum = 0.0;
    int64_t healthy_n = 0;
    for (size_t i = 0; i < cohort.size(); ++i)
      if (classes[i] == healthy_class && cohort[i].present[j]) {
        healthy_sum += cohort[i].mean_age[j];
        ++healthy_n;
      }
    for (size_t i = 0; i < cohort.size(); ++i) {
      if (cohort[i].present[j]) continue;
      if (healthy_n == 0)
        throw std::runtime_error("impute_missing_bsa: no healthy value available for structure " +
                                 std::to_string(j + 1));
      cohort[i].mean_age[j] = healthy_sum / static_cast<double>(healthy_n);
      cohort[i].present[j] = 1;
      std::ostringstream msg;
      msg << "imputed structure " << j + 1 << " of subject " << i << " with healthy mean "
          << cohort[i].mean_age[j];
      log.push_back(msg.str());
    }
  }
  return log;
}

}  // namespace bsa
