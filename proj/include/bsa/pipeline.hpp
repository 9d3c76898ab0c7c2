#pragma once

#include <string>
#include <vector>

#include "bsa/config.hpp"
#include "bsa/features.hpp"
#include "bsa/mlp.hpp"
#include "bsa/phantom.hpp"
#include "bsa/svm.hpp"
#include "bsa/voxelage.hpp"

namespace bsa::pipeline {

PhantomSpec spec_from_config(const PipelineConfig& cfg);

// Writes vol_<id>.vol3, lab_<id>.lab3 and manifest.csv (id,age,class,seed).
void write_cohort(const std::vector<PhantomSubject>& cohort, const std::string& dir);

struct ManifestRow {
  std::string id;
  double age;
  std::string class_id;
  uint64_t seed;
};

std::vector<ManifestRow> read_manifest(const std::string& path);
std::vector<PhantomSubject> load_cohort(const std::string& dir);

// Configured layout over the working grid (input dims, halved when the
// downscale stage is on).
PatchLayout layout_from_config(const PipelineConfig& cfg, std::array<int, 3> input_dims);

// Full voxel-age path for one subject: optional downscale, patch ensemble
// prediction, overlap averaging, upsample back to the input grid.
VolumeF subject_age_map(const EnsembleModel& model, const VolumeF& volume,
                        const PipelineConfig& cfg);

// Age maps -> per-structure features for a cohort. Missing structures are
// imputed with the healthy cohort mean (logged). When `correction` is null
// the bsa/bsage columns are uncorrected.
std::vector<StructureFeatures> build_features(const EnsembleModel& model,
                                              const std::vector<PhantomSubject>& cohort,
                                              const PipelineConfig& cfg,
                                              const CorrectionModel* correction,
                                              std::vector<std::string>* log = nullptr);

// Feature-set ablations for classification (rows mirror the feature CSV).
enum class FeatureSet { Bsage, Vol, BsageVol, TrueAge, PredAge };
FeatureSet feature_set_from_name(const std::string& name);
const char* feature_set_name(FeatureSet fs);

// Assemble the design matrix for a feature set. PredAge requires a
// predictions map from subject id to predicted age.
Eigen::MatrixXd feature_matrix(const std::vector<StructureFeatures>& rows, FeatureSet fs,
                               const std::vector<double>* predicted_ages = nullptr);

// Canonical class order for reports.
const std::vector<std::string>& canonical_classes();
int class_index(const std::string& cls);

struct PopulationSummary {
  std::vector<std::string> classes;            // present classes, canonical order
  std::vector<int> counts;
  std::vector<double> mean_brainage, median_brainage;
  Eigen::MatrixXd mean_bsage;                  // class x structure
};

// Global BrainAGE per subject is the volume-weighted mean of the per-structure
// age gaps in the feature table.
PopulationSummary population_summary(const std::vector<StructureFeatures>& rows);
void write_population_summary(const PopulationSummary& summary, const std::string& path);

struct PredictionRow {
  std::string id;
  double age;
  std::string class_id;
  double value;  // predicted age (regression) or class index (classification)
  std::string predicted_class;
  std::vector<double> scores;
};

void write_predictions_csv(const std::string& path, const std::vector<PredictionRow>& rows,
                           const std::vector<std::string>& score_names);
std::vector<PredictionRow> read_predictions_csv(const std::string& path);

void write_cv_report(const std::string& path, const GridSearchResult& grid);

// Run manifest: resolved config, seeds, command line; enough to replay a run.
void write_run_manifest(const std::string& dir, const PipelineConfig& cfg,
                        const std::string& command,
                        const std::vector<std::pair<std::string, std::string>>& extras = {});

struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bsa::pipeline
