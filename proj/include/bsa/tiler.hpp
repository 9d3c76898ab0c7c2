#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bsa/volume.hpp"

namespace bsa {

// Origins of k patches of length d on an axis of length D, evenly spread so
// the first starts at 0 and the last ends at D. Fractional spacing rounds
// half away from zero.
inline std::vector<int> compute_origins(int axis_len, int patch_len, int k) {
  if (patch_len > axis_len) throw std::invalid_argument("compute_origins: patch longer than axis");
  if (k < 1) throw std::invalid_argument("compute_origins: k must be >= 1");
  std::vector<int> origins(k, 0);
  if (k == 1) return origins;
  const int span = axis_len - patch_len;
  for (int i = 0; i < k; ++i)
    origins[i] = static_cast<int>(std::llround(static_cast<double>(i) * span / (k - 1)));
  return origins;
}

// Serpentine walk of the k x k x k grid: x fastest with alternating
// direction, then y alternating, then z. Consecutive positions differ by one
// step in exactly one coordinate, which is what makes transfer between
// adjacent units well defined.
inline std::vector<std::array<int, 3>> serpentine_order(int k) {
  if (k < 1) throw std::invalid_argument("serpentine_order: k must be >= 1");
  std::vector<std::array<int, 3>> order;
  order.reserve(static_cast<size_t>(k) * k * k);
  bool y_fwd = true;
  bool x_fwd = true;
  for (int z = 0; z < k; ++z) {
    for (int yi = 0; yi < k; ++yi) {
      const int y = y_fwd ? yi : k - 1 - yi;
      for (int xi = 0; xi < k; ++xi) {
        const int x = x_fwd ? xi : k - 1 - xi;
        order.push_back({x, y, z});
      }
      x_fwd = !x_fwd;
    }
    y_fwd = !y_fwd;
  }
  return order;
}

// The k x k x k grid of patch origins over a volume.
struct PatchLayout {
  int k = 0;
  std::array<int, 3> patch_dims{};
  std::array<int, 3> volume_dims{};
  std::array<std::vector<int>, 3> origins;

  static PatchLayout make(std::array<int, 3> volume, std::array<int, 3> patch, int k) {
    PatchLayout layout;
    layout.k = k;
    layout.patch_dims = patch;
    layout.volume_dims = volume;
    for (int axis = 0; axis < 3; ++axis)
      layout.origins[axis] = compute_origins(volume[axis], patch[axis], k);
    layout.validate();
    return layout;
  }

  void validate() const {
    if (k < 1) throw std::invalid_argument("PatchLayout: k must be >= 1");
    for (int axis = 0; axis < 3; ++axis) {
      const auto& o = origins[axis];
      if (static_cast<int>(o.size()) != k) throw std::invalid_argument("PatchLayout: origin count != k");
      if (o.front() != 0) throw std::invalid_argument("PatchLayout: first origin must be 0");
      if (o.back() != volume_dims[axis] - patch_dims[axis])
        throw std::invalid_argument("PatchLayout: last origin must be D - d");
      for (int i = 0; i < k; ++i) {
        if (i > 0 && o[i] < o[i - 1]) throw std::invalid_argument("PatchLayout: origins must be non-decreasing");
        if (o[i] < 0 || o[i] + patch_dims[axis] > volume_dims[axis])
          throw std::invalid_argument("PatchLayout: origin out of range");
        // full coverage: consecutive patches must touch or overlap
        if (i > 0 && o[i] > o[i - 1] + patch_dims[axis])
          throw std::invalid_argument("PatchLayout: coverage gap between patches");
      }
    }
  }

  // grid positions in patch enumeration (serpentine) order
  std::vector<std::array<int, 3>> positions() const { return serpentine_order(k); }

  std::array<int, 3> origin_of(std::array<int, 3> pos) const {
    return {origins[0][pos[0]], origins[1][pos[1]], origins[2][pos[2]]};
  }

  int num_patches() const { return k * k * k; }
};

template <typename T>
Volume3D<T> extract_patch(const Volume3D<T>& v, std::array<int, 3> origin, std::array<int, 3> dims) {
  Volume3D<T> patch(dims[0], dims[1], dims[2]);
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y) {
      const T* src = &v.at(origin[0], origin[1] + y, origin[2] + z);
      T* dst = &patch.at(0, y, z);
      std::copy(src, src + dims[0], dst);
    }
  return patch;
}

// All k^3 patches, enumerated in serpentine order.
template <typename T>
std::vector<Volume3D<T>> extract_patches(const Volume3D<T>& v, const PatchLayout& layout) {
  if (v.dims() != layout.volume_dims) throw std::invalid_argument("extract_patches: layout/volume mismatch");
  std::vector<Volume3D<T>> patches;
  patches.reserve(layout.num_patches());
  for (const auto& pos : layout.positions())
    patches.push_back(extract_patch(v, layout.origin_of(pos), layout.patch_dims));
  return patches;
}

// Overlap averaging: per voxel, sums are accumulated in double in patch
// enumeration order and divided once at the end.
template <typename T>
Volume3D<T> reconstruct_average(const std::vector<Volume3D<T>>& patches, const PatchLayout& layout) {
  if (static_cast<int>(patches.size()) != layout.num_patches())
    throw std::invalid_argument("reconstruct_average: patch count mismatch");
  const auto vd = layout.volume_dims;
  std::vector<double> sum(static_cast<size_t>(vd[0]) * vd[1] * vd[2], 0.0);
  std::vector<int32_t> count(sum.size(), 0);

  const auto positions = layout.positions();
  for (size_t p = 0; p < positions.size(); ++p) {
    const auto& patch = patches[p];
    if (patch.dims() != layout.patch_dims)
      throw std::invalid_argument("reconstruct_average: patch dims mismatch");
    const auto origin = layout.origin_of(positions[p]);
    for (int z = 0; z < patch.nz; ++z)
      for (int y = 0; y < patch.ny; ++y) {
        const size_t base = (static_cast<size_t>(origin[2] + z) * vd[1] + (origin[1] + y)) * vd[0] + origin[0];
        const T* src = &patch.at(0, y, z);
        for (int x = 0; x < patch.nx; ++x) {
          sum[base + x] += static_cast<double>(src[x]);
          ++count[base + x];
        }
      }
  }

  Volume3D<T> out(vd[0], vd[1], vd[2]);
  for (size_t i = 0; i < sum.size(); ++i) {
    if (count[i] == 0) throw std::runtime_error("reconstruct_average: uncovered voxel");
    out.data[i] = static_cast<T>(sum[i] / count[i]);
  }
  return out;
}

// Number of patches covering each voxel.
inline VolumeF coverage_map(const PatchLayout& layout) {
  const auto vd = layout.volume_dims;
  VolumeF cover(vd[0], vd[1], vd[2], 0.0f);
  for (const auto& pos : layout.positions()) {
    const auto origin = layout.origin_of(pos);
    for (int z = 0; z < layout.patch_dims[2]; ++z)
      for (int y = 0; y < layout.patch_dims[1]; ++y)
        for (int x = 0; x < layout.patch_dims[0]; ++x)
          cover.at(origin[0] + x, origin[1] + y, origin[2] + z) += 1.0f;
  }
  return cover;
}

}  // namespace bsa
