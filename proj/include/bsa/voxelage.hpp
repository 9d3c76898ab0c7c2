#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bsa/augment.hpp"
#include "bsa/nnkit.hpp"
#include "bsa/optim.hpp"
#include "bsa/tiler.hpp"
#include "bsa/volume.hpp"

namespace bsa {

struct UNetConfig {
  std::array<int, 3> patch_dims{16, 28, 16};
  std::vector<int> encoder_widths{8, 16};
  int bottleneck = 32;

  int depth() const { return static_cast<int>(encoder_widths.size()); }
};

struct TrainRecipe {
  int batch_size = 8;
  int patience = 8;
  double train_fraction = 0.8;
  OptKind optimizer = OptKind::Sgd;
  double learning_rate = 0.01;
  int max_epochs = 80;
  AugmentConfig augment;
};

struct TrainReport {
  int epochs_run = 0;
  int best_epoch = 0;            // 1-based
  double best_val_loss = 0.0;    // years
  uint64_t seed = 0;
  uint64_t init_param_hash = 0;  // parameters the unit started from
  uint64_t final_param_hash = 0; // parameters it ended with (best epoch)
};

// One training subject: a working-grid volume and its chronological age.
struct TrainSubject {
  VolumeF volume;
  double age = 0.0;
};

// The m = k^3 patch regressors plus everything needed to reproduce and apply
// them. Units are stored in serpentine chain order. Inputs are standardized
// by the training cohort's voxel statistics and units regress the
// standardized age (age - target_mean)/target_sigma; both transforms live in
// the model bundle and predictions come back in years.
struct EnsembleModel {
  PatchLayout layout;
  UNetConfig config;
  double target_mean = 0.0;
  double target_sigma = 1.0;
  double input_mean = 0.0;
  double input_sigma = 1.0;
  uint64_t master_seed = 0;
  std::vector<Network<float>> units;
  std::vector<TrainReport> reports;
};

// Encoder/decoder net per the unit architecture: two conv3-relu blocks per
// level with max-pool between levels, a two-conv bottleneck, nearest-neighbor
// upsampling with skip concatenation on the way up, and a final 1x1x1 conv to
// one channel. He-initialized from rng.
Network<float> build_unet(const UNetConfig& cfg, Rng& rng);

// Serpentine walk over the k^3 grid; consecutive units are grid neighbors.
std::vector<std::array<int, 3>> chain_order(int k);

// Voxel-wise input/target standardization parameters shared by a chain.
struct Standardization {
  double input_mean = 0.0;
  double input_sigma = 1.0;
  double target_mean = 0.0;
  double target_sigma = 1.0;
};

// Train one unit on its patch of every subject; voxel-wise target is the
// subject's standardized age broadcast over the patch. Keeps the best
// validation parameters; stops after `patience` epochs without improvement.
Network<float> train_unit(std::array<int, 3> origin, Network<float> net,
                          const std::vector<const TrainSubject*>& train,
                          const std::vector<const TrainSubject*>& val,
                          const Standardization& norm, const TrainRecipe& recipe, Rng& rng,
                          TrainReport& report);

// Train the whole chain: unit 0 from scratch, unit i initialized from unit
// i-1's final parameters; the 80/20 split is redrawn from master_rng before
// every unit.
EnsembleModel train_chain(const std::vector<TrainSubject>& subjects, const PatchLayout& layout,
                          const UNetConfig& cfg, const TrainRecipe& recipe, Rng& master_rng);

// Per-unit patch prediction, overlap averaging, then trilinear upsampling to
// the native grid. Output is in years.
VolumeF predict_age_map(const EnsembleModel& model, const VolumeF& working_volume,
                        std::array<int, 3> native_dims);

void save_ensemble(const EnsembleModel& model, const std::string& dir);
EnsembleModel load_ensemble(const std::string& dir);

}  // namespace bsa
