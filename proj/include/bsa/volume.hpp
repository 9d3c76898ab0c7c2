#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsa {

// Dense 3D scalar field, x-fastest linear order. Carries image intensities
// or predicted ages (years) depending on pipeline stage.
template <typename T>
struct Volume3D {
  int nx = 0, ny = 0, nz = 0;
  std::vector<T> data;

  Volume3D() = default;
  Volume3D(int x, int y, int z, T fill = T{}) : nx(x), ny(y), nz(z) {
    if (x < 1 || y < 1 || z < 1) throw std::invalid_argument("Volume3D: dims must be >= 1");
    data.assign(static_cast<size_t>(x) * y * z, fill);
  }

  size_t size() const { return data.size(); }
  size_t index(int x, int y, int z) const {
    return static_cast<size_t>(z) * ny * nx + static_cast<size_t>(y) * nx + x;
  }
  T& at(int x, int y, int z) { return data[index(x, y, z)]; }
  const T& at(int x, int y, int z) const { return data[index(x, y, z)]; }

  std::array<int, 3> dims() const { return {nx, ny, nz}; }

  auto array() { return Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(data.data(), data.size()); }
  auto array() const {
    return Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(data.data(), data.size());
  }
};

using VolumeF = Volume3D<float>;

// Per-voxel structure labels; 0 is background, valid labels are 1..num_structures.
struct LabelVolume {
  int nx = 0, ny = 0, nz = 0;
  int num_structures = 0;
  std::vector<uint16_t> labels;

  LabelVolume() = default;
  LabelVolume(int x, int y, int z, int s) : nx(x), ny(y), nz(z), num_structures(s) {
    if (x < 1 || y < 1 || z < 1) throw std::invalid_argument("LabelVolume: dims must be >= 1");
    if (s < 1) throw std::invalid_argument("LabelVolume: num_structures must be >= 1");
    labels.assign(static_cast<size_t>(x) * y * z, 0);
  }

  size_t size() const { return labels.size(); }
  size_t index(int x, int y, int z) const {
    return static_cast<size_t>(z) * ny * nx + static_cast<size_t>(y) * nx + x;
  }
  uint16_t& at(int x, int y, int z) { return labels[index(x, y, z)]; }
  uint16_t at(int x, int y, int z) const { return labels[index(x, y, z)]; }
  std::array<int, 3> dims() const { return {nx, ny, nz}; }
};

// Native grid plus its half-resolution working grid.
struct GridSpec {
  std::array<int, 3> native_dims{};
  std::array<int, 3> working_dims{};

  static GridSpec from_native(std::array<int, 3> native) {
    GridSpec g;
    g.native_dims = native;
    for (int i = 0; i < 3; ++i) g.working_dims[i] = (native[i] + 1) / 2;
    return g;
  }
};

template <typename T>
Volume3D<T> create_volume(std::array<int, 3> dims, T fill) {
  return Volume3D<T>(dims[0], dims[1], dims[2], fill);
}

namespace detail {

// 1D binomial [1 2 1]/4 smoothing pass along x applied per axis in turn.
template <typename T>
void smooth_axis(Volume3D<T>& v, int axis) {
  const int n[3] = {v.nx, v.ny, v.nz};
  Volume3D<T> out = v;
  for (int z = 0; z < v.nz; ++z)
    for (int y = 0; y < v.ny; ++y)
      for (int x = 0; x < v.nx; ++x) {
        int c[3] = {x, y, z};
        int lo[3] = {x, y, z}, hi[3] = {x, y, z};
        lo[axis] = std::max(0, c[axis] - 1);
        hi[axis] = std::min(n[axis] - 1, c[axis] + 1);
        const double sum = 2.0 * v.at(x, y, z) + v.at(lo[0], lo[1], lo[2]) + v.at(hi[0], hi[1], hi[2]);
        out.at(x, y, z) = static_cast<T>(sum / 4.0);
      }
  v = std::move(out);
}

}  // namespace detail

// Stride-2 subsampling: out(i,j,k) = in(2i,2j,2k), output dims ceil(in/2).
// Optional binomial pre-smoothing, off by default.
template <typename T>
Volume3D<T> downscale_by2(const Volume3D<T>& v, bool presmooth = false) {
  Volume3D<T> src = v;
  if (presmooth)
    for (int axis = 0; axis < 3; ++axis) detail::smooth_axis(src, axis);
  Volume3D<T> out((v.nx + 1) / 2, (v.ny + 1) / 2, (v.nz + 1) / 2);
  for (int z = 0; z < out.nz; ++z)
    for (int y = 0; y < out.ny; ++y)
      for (int x = 0; x < out.nx; ++x) out.at(x, y, z) = src.at(2 * x, 2 * y, 2 * z);
  return out;
}

// Trilinear upsampling with align-corners mapping: source coordinate of
// output index i is i*(S-1)/(T-1); corner voxels are fixed points.
template <typename T>
Volume3D<T> upsample_trilinear(const Volume3D<T>& v, std::array<int, 3> target) {
  const std::array<int, 3> src = v.dims();
  for (int i = 0; i < 3; ++i)
    if (target[i] < src[i]) throw std::invalid_argument("upsample_trilinear: target smaller than source");

  Volume3D<T> out(target[0], target[1], target[2]);
  auto mapping = [](int out_i, int t, int s) {
    if (t == 1 || s == 1) return 0.0;
    return static_cast<double>(out_i) * (s - 1) / (t - 1);
  };

  for (int z = 0; z < target[2]; ++z) {
    const double fz = mapping(z, target[2], src[2]);
    const int z0 = static_cast<int>(fz), z1 = std::min(z0 + 1, src[2] - 1);
    const double wz = fz - z0;
    for (int y = 0; y < target[1]; ++y) {
      const double fy = mapping(y, target[1], src[1]);
      const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, src[1] - 1);
      const double wy = fy - y0;
      for (int x = 0; x < target[0]; ++x) {
        const double fx = mapping(x, target[0], src[0]);
        const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, src[0] - 1);
        const double wx = fx - x0;

        const double c00 = v.at(x0, y0, z0) * (1 - wx) + v.at(x1, y0, z0) * wx;
        const double c10 = v.at(x0, y1, z0) * (1 - wx) + v.at(x1, y1, z0) * wx;
        const double c01 = v.at(x0, y0, z1) * (1 - wx) + v.at(x1, y0, z1) * wx;
        const double c11 = v.at(x0, y1, z1) * (1 - wx) + v.at(x1, y1, z1) * wx;
        const double c0 = c00 * (1 - wy) + c10 * wy;
        const double c1 = c01 * (1 - wy) + c11 * wy;
        out.at(x, y, z) = static_cast<T>(c0 * (1 - wz) + c1 * wz);
      }
    }
  }
  return out;
}

// count[j-1] = number of voxels labelled j, for j = 1..num_structures
inline std::vector<int64_t> voxel_counts_per_label(const LabelVolume& lv) {
  std::vector<int64_t> counts(lv.num_structures, 0);
  for (uint16_t l : lv.labels) {
    if (l == 0) continue;
    if (l > lv.num_structures) throw std::runtime_error("voxel_counts_per_label: label exceeds num_structures");
    ++counts[l - 1];
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Binary file formats (all little-endian, bit-exact round trip)
//   .vol3: "VOL3" | u32 nx ny nz | float32 payload, x-fastest
//   .lab3: "LAB3" | u32 nx ny nz | u16 num_structures | u16 payload
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("volume file: truncated header");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) throw std::runtime_error("volume file: truncated header");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline std::array<int, 3> checked_dims(uint32_t nx, uint32_t ny, uint32_t nz) {
  constexpr uint64_t kMaxVoxels = uint64_t{1} << 31;
  if (nx == 0 || ny == 0 || nz == 0) throw std::runtime_error("volume file: zero dimension");
  const uint64_t total = uint64_t{nx} * ny * nz;
  if (nx > kMaxVoxels || total > kMaxVoxels) throw std::runtime_error("volume file: dimension overflow");
  return {static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(nz)};
}

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

}  // namespace detail

inline void store_volume(const VolumeF& v, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("store_volume: cannot open " + path);
  os.write("VOL3", 4);
  detail::put_u32(os, static_cast<uint32_t>(v.nx));
  detail::put_u32(os, static_cast<uint32_t>(v.ny));
  detail::put_u32(os, static_cast<uint32_t>(v.nz));
  // little-endian host assumed; asserted at startup in the CLI
  os.write(reinterpret_cast<const char*>(v.data.data()),
           static_cast<std::streamsize>(v.data.size() * sizeof(float)));
  if (!os) throw std::runtime_error("store_volume: write failed for " + path);
}

inline VolumeF load_volume(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_volume: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VOL3", 4) != 0)
    throw std::runtime_error("load_volume: bad magic in " + path);
  const uint32_t nx = detail::get_u32(is);
  const uint32_t ny = detail::get_u32(is);
  const uint32_t nz = detail::get_u32(is);
  const auto dims = detail::checked_dims(nx, ny, nz);
  VolumeF v(dims[0], dims[1], dims[2]);
  is.read(reinterpret_cast<char*>(v.data.data()),
          static_cast<std::streamsize>(v.data.size() * sizeof(float)));
  if (static_cast<size_t>(is.gcount()) != v.data.size() * sizeof(float))
    throw std::runtime_error("load_volume: truncated payload in " + path);
  for (float f : v.data)
    if (!std::isfinite(f)) throw std::runtime_error("load_volume: non-finite voxel in " + path);
  return v;
}

inline void store_labels(const LabelVolume& lv, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("store_labels: cannot open " + path);
  os.write("LAB3", 4);
  detail::put_u32(os, static_cast<uint32_t>(lv.nx));
  detail::put_u32(os, static_cast<uint32_t>(lv.ny));
  detail::put_u32(os, static_cast<uint32_t>(lv.nz));
  detail::put_u16(os, static_cast<uint16_t>(lv.num_structures));
  os.write(reinterpret_cast<const char*>(lv.labels.data()),
           static_cast<std::streamsize>(lv.labels.size() * sizeof(uint16_t)));
  if (!os) throw std::runtime_error("store_labels: write failed for " + path);
}

inline LabelVolume load_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_labels: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "LAB3", 4) != 0)
    throw std::runtime_error("load_labels: bad magic in " + path);
  const uint32_t nx = detail::get_u32(is);
  const uint32_t ny = detail::get_u32(is);
  const uint32_t nz = detail::get_u32(is);
  const auto dims = detail::checked_dims(nx, ny, nz);
  const uint16_t s = detail::get_u16(is);
  if (s == 0) throw std::runtime_error("load_labels: zero structure count in " + path);
  LabelVolume lv(dims[0], dims[1], dims[2], s);
  is.read(reinterpret_cast<char*>(lv.labels.data()),
          static_cast<std::streamsize>(lv.labels.size() * sizeof(uint16_t)));
  if (static_cast<size_t>(is.gcount()) != lv.labels.size() * sizeof(uint16_t))
    throw std::runtime_error("load_labels: truncated payload in " + path);
  for (uint16_t l : lv.labels)
    if (l > s) throw std::runtime_error("load_labels: label exceeds num_structures in " + path);
  return lv;
}

}  // namespace bsa
