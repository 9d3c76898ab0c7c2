#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsa {

// Whole-pipeline configuration. Defaults are the desk-scale profile that runs
// end to end in minutes; configs/paper_scale.ini carries the full-size
// constants (k = 5, 32x48x32 patches on the 91x109x91 working grid, patience
// 20/50).
struct PipelineConfig {
  uint64_t seed = 20240101;

  // phantom cohort
  int phantom_nx = 32, phantom_ny = 48, phantom_nz = 32;
  double noise_sigma = 0.005;
  double voxel_volume = 1.0;
  double size_jitter = 0.05;
  int cohort_n = 120;
  double age_lo = 20.0, age_hi = 90.0;
  std::string class_mix = "CN:1";  // "name:weight,..." or "uniform6"

  // tiling / working grid
  int k = 2;
  std::array<int, 3> patch_dims{16, 28, 16};
  bool downscale = false;  // treat inputs as native and halve before tiling

  // voxel-level units
  std::vector<int> encoder_widths{8, 16};
  int bottleneck = 32;
  int unet_batch = 8;
  int unet_patience = 8;
  double unet_lr = 0.01;
  int unet_max_epochs = 80;
  bool augment_shift = true;
  bool augment_mixup = true;
  double mixup_alpha = 0.2;

  // age regression
  int mlp_folds = 10;
  int mlp_batch = 8;
  int mlp_patience = 50;
  double mlp_lr = 1e-3;
  int mlp_max_epochs = 1500;

  // classification
  std::string svm_kernels = "linear,poly,rbf";
  std::string svm_grid = "reduced";  // "reduced" = 10 C values, "full" = 100
  int svm_folds = 10;
};

PipelineConfig parse_config_text(const std::string& text);
PipelineConfig parse_config_file(const std::string& path);

// Canonical text form; parse(dump(cfg)) == cfg.
std::string dump_config(const PipelineConfig& cfg);

// FNV-1a over the canonical dump; recorded in run manifests.
uint64_t config_hash(const PipelineConfig& cfg);

std::vector<std::pair<std::string, double>> parse_class_mix(const std::string& mix);

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bsa
