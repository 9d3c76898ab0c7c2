#include "bsa/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bsa/rng.hpp"

namespace bsa {

PhantomSpec PhantomSpec::desk_default() {
  PhantomSpec spec;
  // 12 ellipsoids on a 2x3x2 grid of 16-voxel cells. All structures brighten
  // with age at slightly different rates around a common base, so age is
  // decodable from intensity everywhere while the per-structure slope spread
  // leaves exactly the kind of multiplicative bias the structure-wise age
  // correction is meant to remove.
  const double centers_x[2] = {8.0, 24.0};
  const double centers_y[3] = {8.0, 24.0, 40.0};
  const double centers_z[2] = {8.0, 24.0};
  const double radii[12][3] = {
      {6.8, 7.2, 6.8}, {6.4, 6.9, 6.4}, {6.9, 6.6, 6.5}, {6.3, 7.2, 6.9},
      {6.8, 7.0, 6.9}, {6.4, 6.6, 6.3}, {6.9, 7.2, 6.4}, {6.3, 7.0, 6.9},
      {6.8, 6.6, 6.8}, {6.4, 7.2, 6.3}, {6.9, 7.0, 6.4}, {6.3, 6.6, 6.9}};
  const double bases[12] = {1.02, 0.97, 1.05, 0.95, 1.00, 1.03,
                            0.96, 1.04, 0.98, 1.01, 0.99, 1.05};
  const double slopes[12] = {0.0200, 0.0215, 0.0185, 0.0210, 0.0195, 0.0220,
                             0.0180, 0.0205, 0.0190, 0.0215, 0.0185, 0.0200};
  int j = 0;
  for (int zi = 0; zi < 2; ++zi)
    for (int yi = 0; yi < 3; ++yi)
      for (int xi = 0; xi < 2; ++xi, ++j) {
        StructureSpec s;
        s.shape = {centers_x[xi], centers_y[yi], centers_z[zi],
                   radii[j][0],   radii[j][1],   radii[j][2]};
        s.base_intensity = bases[j];
        s.aging_slope = slopes[j];
        spec.structures.push_back(s);
      }
  spec.validate();
  return spec;
}

void PhantomSpec::validate() const {
  if (structures.empty()) throw std::invalid_argument("PhantomSpec: no structures");
  if (noise_sigma < 0) throw std::invalid_argument("PhantomSpec: negative noise sigma");
  int with_signal = 0;
  for (const auto& s : structures)
    if (s.aging_slope != 0.0) ++with_signal;
  if (2 * with_signal < num_structures())
    throw std::invalid_argument("PhantomSpec: fewer than half the structures carry an age signal");
  // conservative disjointness: bounding boxes at maximum jitter must separate
  const double m = 1.0 + size_jitter;
  for (size_t a = 0; a < structures.size(); ++a)
    for (size_t b = a + 1; b < structures.size(); ++b) {
      const auto& ea = structures[a].shape;
      const auto& eb = structures[b].shape;
      const bool apart = std::abs(ea.cx - eb.cx) > m * (ea.rx + eb.rx) ||
                         std::abs(ea.cy - eb.cy) > m * (ea.ry + eb.ry) ||
                         std::abs(ea.cz - eb.cz) > m * (ea.rz + eb.rz);
      if (!apart) {
        std::ostringstream msg;
        msg << "PhantomSpec: structures " << a + 1 << " and " << b + 1 << " may overlap";
        throw std::invalid_argument(msg.str());
      }
    }
}

std::vector<DiseaseEffect> DiseaseEffect::default_table() {
  // Age offsets follow the analog table: A and B strong, C strongest and
  // focal, D deliberately weak, E moderate. Volume effects land on different
  // structures than the age offsets so the two signals stay independent:
  // D is nearly silent in age but clearly atrophic, while B and E share the
  // same atrophy signature and are separable only through the age offsets.
  return {
      {"CN", {}, 0.0, {}, 1.0},
      {"A", {1, 2}, 12.0, {10}, 0.85},
      {"B", {3, 4, 5}, 14.0, {11}, 0.90},
      {"C", {6}, 15.0, {12}, 0.90},
      {"D", {7}, 2.0, {10, 12}, 0.85},
      {"E", {3, 8}, 7.0, {11}, 0.90},
  };
}

const DiseaseEffect& find_effect(const std::vector<DiseaseEffect>& table, const std::string& cls) {
  for (const auto& e : table)
    if (e.class_id == cls) return e;
  throw std::invalid_argument("find_effect: unknown class " + cls);
}

PhantomSubject generate_subject(const PhantomSpec& spec, const DiseaseEffect& effect, double age,
                                uint64_t seed) {
  if (age < 0.0 || age > 120.0) throw std::invalid_argument("generate_subject: age out of range");
  spec.validate();

  const int s = spec.num_structures();
  Rng rng(seed);
  std::vector<double> scale(s, 1.0);
  for (int j = 0; j < s; ++j)
    scale[j] = rng.uniform(1.0 - spec.size_jitter, 1.0 + spec.size_jitter);
  for (int idx : effect.shrunk) {
    if (idx < 1 || idx > s) throw std::invalid_argument("generate_subject: shrunk index out of range");
    scale[idx - 1] *= effect.radius_scale;
  }
  std::vector<char> is_aged(s, 0);
  for (int idx : effect.aged) {
    if (idx < 1 || idx > s) throw std::invalid_argument("generate_subject: aged index out of range");
    is_aged[idx - 1] = 1;
  }

  PhantomSubject subject;
  subject.age = age;
  subject.class_id = effect.class_id;
  subject.seed = seed;
  subject.volume = VolumeF(spec.nx, spec.ny, spec.nz, 0.0f);
  subject.labels = LabelVolume(spec.nx, spec.ny, spec.nz, s);

  const uint64_t noise_seed = seed ^ 0xabcdef0123456789ULL;
  for (int z = 0; z < spec.nz; ++z)
    for (int y = 0; y < spec.ny; ++y)
      for (int x = 0; x < spec.nx; ++x) {
        for (int j = 0; j < s; ++j) {
          const auto& e = spec.structures[j].shape;
          const double dx = (x - e.cx) / (e.rx * scale[j]);
          const double dy = (y - e.cy) / (e.ry * scale[j]);
          const double dz = (z - e.cz) / (e.rz * scale[j]);
          if (dx * dx + dy * dy + dz * dz <= 1.0) {
            const double eff_age = age + (is_aged[j] ? effect.delta_years : 0.0);
            double value =
                spec.structures[j].base_intensity + spec.structures[j].aging_slope * eff_age;
            if (spec.noise_sigma > 0.0)
              value += spec.noise_sigma * keyed_normal(noise_seed, subject.volume.index(x, y, z));
            subject.volume.at(x, y, z) = static_cast<float>(value);
            subject.labels.at(x, y, z) = static_cast<uint16_t>(j + 1);
            break;
          }
        }
      }
  return subject;
}

std::vector<PhantomSubject> generate_cohort(const PhantomSpec& spec,
                                            const std::vector<std::pair<std::string, double>>& mix,
                                            double age_lo, double age_hi, int n, uint64_t seed,
                                            const std::vector<DiseaseEffect>& table) {
  if (n < 1) throw std::invalid_argument("generate_cohort: n must be >= 1");
  if (mix.empty()) throw std::invalid_argument("generate_cohort: empty class mix");
  double total = 0.0;
  for (const auto& [cls, w] : mix) {
    if (w < 0.0) throw std::invalid_argument("generate_cohort: negative mix weight");
    find_effect(table, cls);
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("generate_cohort: mix weights sum to zero");

  Rng rng(seed);
  std::vector<PhantomSubject> cohort;
  cohort.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double age = rng.uniform(age_lo, age_hi);
    const double u = rng.uniform() * total;
    double cum = 0.0;
    std::string cls = mix.back().first;
    for (const auto& [c, w] : mix) {
      cum += w;
      if (u < cum) {
        cls = c;
        break;
      }
    }
    const uint64_t subject_seed = rng.next_u64();
    PhantomSubject subject = generate_subject(spec, find_effect(table, cls), age, subject_seed);
    std::ostringstream id;
    id << "s" << i;
    subject.id = id.str();
    cohort.push_back(std::move(subject));
  }
  return cohort;
}

}  // namespace bsa
