#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "bsa/volume.hpp"

namespace bsa {

// Per-structure mean of a voxel-wise age map. Structures without any voxel
// are reported missing, never silently zeroed.
struct BsaValues {
  std::vector<double> mean_age;   // [j-1] for structure j; undefined when absent
  std::vector<uint8_t> present;

  bool all_present() const {
    for (uint8_t p : present)
      if (!p) return false;
    return true;
  }
};

BsaValues compute_bsa(const VolumeF& age_map, const LabelVolume& labels);

std::vector<double> compute_structure_volumes(const LabelVolume& labels, double voxel_volume);

// Per-structure least-squares scaling of predicted against true age, fitted
// on healthy training subjects. The plain form has no intercept: beta_j =
// sum(x_j * y) / sum(x_j^2). The intercept variant exists for sensitivity
// checks and is off by default.
struct CorrectionModel {
  std::vector<double> beta;
  std::vector<double> intercept;  // empty unless fitted with intercept
  bool has_intercept = false;

  int num_structures() const { return static_cast<int>(beta.size()); }
};

CorrectionModel fit_bias_correction(const Eigen::MatrixXd& bsa_by_subject,
                                    const Eigen::VectorXd& true_ages, bool with_intercept = false);

std::vector<double> apply_bias_correction(const CorrectionModel& model,
                                          const std::vector<double>& bsa);

std::vector<double> compute_bsage(const std::vector<double>& corrected_bsa, double age);

// Mean of the age map over all non-background voxels, minus chronological age.
double global_brainage(const VolumeF& age_map, const LabelVolume& labels, double age);

struct StructureFeatures {
  std::string id;
  double age = 0.0;
  std::string class_id = "CN";
  std::vector<double> bsa;      // after correction when a model was applied
  std::vector<double> bsage;
  std::vector<double> volumes;
};

// CSV schema: subject,age,class,bsa_1..bsa_s,bsage_1..bsage_s,vol_1..vol_s
void write_features_csv(const std::string& path, const std::vector<StructureFeatures>& rows);
std::vector<StructureFeatures> read_features_csv(const std::string& path);

void save_correction(const CorrectionModel& model, const std::string& path);
CorrectionModel load_correction(const std::string& path);

// Replace missing structures with the mean over healthy subjects where the
// structure is present. Returns one log line per imputation.
std::vector<std::string> impute_missing_bsa(std::vector<BsaValues>& cohort,
                                            const std::vector<std::string>& classes,
                                            const std::string& healthy_class);

}  // namespace bsa
