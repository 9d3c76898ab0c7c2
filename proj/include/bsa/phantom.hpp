#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bsa/volume.hpp"

namespace bsa {

struct Ellipsoid {
  double cx, cy, cz;
  double rx, ry, rz;
};

struct StructureSpec {
  Ellipsoid shape;
  double base_intensity;
  double aging_slope;  // intensity units per year
};

// Synthetic aging-brain description: disjoint ellipsoidal structures whose
// intensity encodes age linearly, plus Gaussian voxel noise. Background
// stays at zero.
struct PhantomSpec {
  int nx = 32, ny = 48, nz = 32;
  std::vector<StructureSpec> structures;
  double noise_sigma = 0.005;
  double voxel_volume = 1.0;   // mm^3
  double size_jitter = 0.05;   // per-subject radius jitter, class independent

  int num_structures() const { return static_cast<int>(structures.size()); }
  static PhantomSpec desk_default();
  void validate() const;  // rejects overlapping ellipsoids (at maximum jitter)
};

// A disease analog: structures in `aged` appear `delta_years` older than the
// subject; structures in `shrunk` have their radii scaled. CN has no effect.
struct DiseaseEffect {
  std::string class_id;
  std::vector<int> aged;      // 1-based structure indices
  double delta_years = 0.0;
  std::vector<int> shrunk;    // 1-based structure indices
  double radius_scale = 1.0;

  static std::vector<DiseaseEffect> default_table();
};

struct PhantomSubject {
  std::string id;
  double age = 0.0;
  std::string class_id = "CN";
  uint64_t seed = 0;
  VolumeF volume;
  LabelVolume labels;
};

PhantomSubject generate_subject(const PhantomSpec& spec, const DiseaseEffect& effect, double age,
                                uint64_t seed);

// Ages drawn uniformly over [age_lo, age_hi]; classes drawn per mix weights.
std::vector<PhantomSubject> generate_cohort(const PhantomSpec& spec,
                                            const std::vector<std::pair<std::string, double>>& mix,
                                            double age_lo, double age_hi, int n, uint64_t seed,
                                            const std::vector<DiseaseEffect>& table);

const DiseaseEffect& find_effect(const std::vector<DiseaseEffect>& table, const std::string& cls);

}  // namespace bsa
