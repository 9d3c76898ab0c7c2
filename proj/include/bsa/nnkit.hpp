#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsa/rng.hpp"

namespace bsa {

// Dense row-major tensor. Spatial feature maps use shape {C, Z, Y, X} with x
// fastest, matching Volume3D's linear order.
template <typename S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shp, S fill = S{}) : shape(std::move(shp)) {
    data.assign(numel_of(shape), fill);
  }

  static size_t numel_of(const std::vector<int>& shp) {
    size_t n = 1;
    for (int d : shp) {
      if (d < 1) throw std::invalid_argument("Tensor: dims must be >= 1");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  size_t numel() const { return data.size(); }

  auto array() { return Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(data.data(), data.size()); }
  auto array() const {
    return Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(data.data(), data.size());
  }
};

enum class LayerKind { Conv3d, Relu, MaxPool2, Upsample2, SkipConcat, Dense };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv3d: return "conv3d";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool2: return "maxpool2";
    case LayerKind::Upsample2: return "upsample2";
    case LayerKind::SkipConcat: return "skipconcat";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

template <typename S>
struct Layer {
  LayerKind kind;
  int in_ch = 0, out_ch = 0, ksize = 3;  // conv3d
  int in_features = 0, out_features = 0; // dense
  int skip_from = -1;                    // skipconcat: producer layer index
  Tensor<S> weight, bias;

  bool has_params() const { return kind == LayerKind::Conv3d || kind == LayerKind::Dense; }
};

template <typename S>
struct Network {
  std::vector<int> input_shape;
  std::vector<Layer<S>> layers;

  Layer<S>& add_conv3d(int in_ch, int out_ch, int ksize, Rng& rng) {
    if (ksize != 1 && ksize != 3) throw std::invalid_argument("conv3d: kernel must be 1 or 3");
    Layer<S> l;
    l.kind = LayerKind::Conv3d;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.ksize = ksize;
    l.weight = Tensor<S>({out_ch, in_ch, ksize, ksize, ksize});
    l.bias = Tensor<S>({out_ch});
    const double stddev = std::sqrt(2.0 / (in_ch * ksize * ksize * ksize));
    for (auto& w : l.weight.data) w = static_cast<S>(rng.normal(0.0, stddev));
    layers.push_back(std::move(l));
    return layers.back();
  }

  Layer<S>& add_relu() {
    Layer<S> l;
    l.kind = LayerKind::Relu;
    layers.push_back(std::move(l));
    return layers.back();
  }

  Layer<S>& add_maxpool2() {
    Layer<S> l;
    l.kind = LayerKind::MaxPool2;
    layers.push_back(std::move(l));
    return layers.back();
  }

  Layer<S>& add_upsample2() {
    Layer<S> l;
    l.kind = LayerKind::Upsample2;
    layers.push_back(std::move(l));
    return layers.back();
  }

  Layer<S>& add_skip_concat(int skip_from) {
    if (skip_from < 0 || skip_from >= static_cast<int>(layers.size()))
      throw std::invalid_argument("skip_concat: source layer out of range");
    Layer<S> l;
    l.kind = LayerKind::SkipConcat;
    l.skip_from = skip_from;
    layers.push_back(std::move(l));
    return layers.back();
  }

  Layer<S>& add_dense(int in_features, int out_features, Rng& rng) {
    Layer<S> l;
    l.kind = LayerKind::Dense;
    l.in_features = in_features;
    l.out_features = out_features;
    l.weight = Tensor<S>({out_features, in_features});
    l.bias = Tensor<S>({out_features});
    const double stddev = std::sqrt(2.0 / in_features);
    for (auto& w : l.weight.data) w = static_cast<S>(rng.normal(0.0, stddev));
    layers.push_back(std::move(l));
    return layers.back();
  }

  size_t param_count() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.weight.numel() + l.bias.numel();
    return n;
  }
};

// FNV-1a over the raw parameter bytes; equal hashes across two nets of the
// same architecture mean bit-identical parameters for all practical purposes.
template <typename S>
uint64_t param_hash(const Network<S>& net) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const Tensor<S>& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data.data());
    for (size_t i = 0; i < t.data.size() * sizeof(S); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& l : net.layers) {
    mix(l.weight);
    mix(l.bias);
  }
  return h;
}

// Per-layer outputs of one forward pass, plus max-pool winner indices (needed
// both for backprop and for detecting non-smooth points in gradient tests).
template <typename S>
struct Activations {
  std::vector<Tensor<S>> outputs;
  std::vector<std::vector<int32_t>> pool_argmax;
};

template <typename S>
struct NetGrads {
  std::vector<Tensor<S>> dweight, dbias;

  void init_like(const Network<S>& net) {
    dweight.clear();
    dbias.clear();
    for (const auto& l : net.layers) {
      dweight.emplace_back(l.weight.shape.empty() ? Tensor<S>() : Tensor<S>(l.weight.shape));
      dbias.emplace_back(l.bias.shape.empty() ? Tensor<S>() : Tensor<S>(l.bias.shape));
    }
  }

  void zero() {
    for (auto& t : dweight) t.array().setZero();
    for (auto& t : dbias) t.array().setZero();
  }
};

namespace nndetail {

struct SpatialDims {
  int c, z, y, x;
};

inline SpatialDims spatial(const std::vector<int>& shape) {
  if (shape.size() != 4) throw std::invalid_argument("expected a {C,Z,Y,X} tensor");
  return {shape[0], shape[1], shape[2], shape[3]};
}

// Padded slab geometry for the fused 3x3x3 kernels: halo of one voxel on
// every side, interior run covering [begin, begin+n).
struct Padded {
  int px, py, pz;
  size_t slab;   // voxels per padded channel
  size_t begin;  // first interior element
  size_t n;      // contiguous run covering all interior voxels (plus seams)
};

inline Padded padded_dims(int z, int y, int x) {
  Padded p;
  p.px = x + 2;
  p.py = y + 2;
  p.pz = z + 2;
  p.slab = static_cast<size_t>(p.pz) * p.py * p.px;
  p.begin = (static_cast<size_t>(p.py) + 1) * p.px + 1;
  const size_t end = (static_cast<size_t>(z) * p.py + y) * p.px + x + 1;
  p.n = end - p.begin;
  return p;
}

template <typename S>
void pad_channel(const S* src, S* dst, const Padded& p, int z, int y, int x) {
  std::fill(dst, dst + p.slab, S{});
  for (int zz = 0; zz < z; ++zz)
    for (int yy = 0; yy < y; ++yy) {
      const S* s = src + (static_cast<size_t>(zz) * y + yy) * x;
      S* d = dst + (static_cast<size_t>(zz + 1) * p.py + (yy + 1)) * p.px + 1;
      std::copy(s, s + x, d);
    }
}

template <typename S>
void unpad_channel(const S* src, S* dst, const Padded& p, int z, int y, int x, S bias = S{}) {
  for (int zz = 0; zz < z; ++zz)
    for (int yy = 0; yy < y; ++yy) {
      const S* s = src + (static_cast<size_t>(zz + 1) * p.py + (yy + 1)) * p.px + 1;
      S* d = dst + (static_cast<size_t>(zz) * y + yy) * x;
      for (int xx = 0; xx < x; ++xx) d[xx] = s[xx] + bias;
    }
}

// The two fused kernels below carry nearly all of the training FLOPs. They
// are compiled with reassociation enabled so the compiler can vectorize the
// 9-tap accumulations; results stay deterministic for a fixed build.
#pragma GCC push_options
#pragma GCC optimize("unsafe-math-optimizations", "no-math-errno")

// dst += conv(src, w27) over the interior run; both buffers padded. The run
// crosses row seams, whose results land in halo cells and are never read.
template <typename S>
void fused_conv_accum(S* __restrict dst, const S* src, const S* w27, const Padded& p) {
  for (int kz = -1; kz <= 1; ++kz) {
    const S* wv = w27 + (kz + 1) * 9;
    const S w00 = wv[0], w01 = wv[1], w02 = wv[2];
    const S w10 = wv[3], w11 = wv[4], w12 = wv[5];
    const S w20 = wv[6], w21 = wv[7], w22 = wv[8];
    const S* __restrict s0 = src + p.begin + (static_cast<ptrdiff_t>(kz) * p.py - 1) * p.px;
    const S* __restrict s1 = src + p.begin + static_cast<ptrdiff_t>(kz) * p.py * p.px;
    const S* __restrict s2 = src + p.begin + (static_cast<ptrdiff_t>(kz) * p.py + 1) * p.px;
    S* __restrict d = dst + p.begin;
    const size_t n = p.n;
    for (size_t i = 0; i < n; ++i)
      d[i] += w00 * s0[i - 1] + w01 * s0[i] + w02 * s0[i + 1] + w10 * s1[i - 1] + w11 * s1[i] +
              w12 * s1[i + 1] + w20 * s2[i - 1] + w21 * s2[i] + w22 * s2[i + 1];
  }
}

// w27_grad[tap] += sum_v dout[v] * src[v + off(tap)]; dout halo must be zero.
template <typename S>
void fused_conv_weight_grad(const S* dout, const S* src, S* w27_grad, const Padded& p) {
  for (int kz = -1; kz <= 1; ++kz) {
    const S* __restrict s0 = src + p.begin + (static_cast<ptrdiff_t>(kz) * p.py - 1) * p.px;
    const S* __restrict s1 = src + p.begin + static_cast<ptrdiff_t>(kz) * p.py * p.px;
    const S* __restrict s2 = src + p.begin + (static_cast<ptrdiff_t>(kz) * p.py + 1) * p.px;
    const S* __restrict d = dout + p.begin;
    S a0{}, a1{}, a2{}, a3{}, a4{}, a5{}, a6{}, a7{}, a8{};
    const size_t n = p.n;
    for (size_t i = 0; i < n; ++i) {
      const S g = d[i];
      a0 += g * s0[i - 1];
      a1 += g * s0[i];
      a2 += g * s0[i + 1];
      a3 += g * s1[i - 1];
      a4 += g * s1[i];
      a5 += g * s1[i + 1];
      a6 += g * s2[i - 1];
      a7 += g * s2[i];
      a8 += g * s2[i + 1];
    }
    S* w = w27_grad + (kz + 1) * 9;
    w[0] += a0;
    w[1] += a1;
    w[2] += a2;
    w[3] += a3;
    w[4] += a4;
    w[5] += a5;
    w[6] += a6;
    w[7] += a7;
    w[8] += a8;
  }
}

#pragma GCC pop_options

template <typename S>
std::vector<S>& scratch(int which, size_t n) {
  thread_local std::vector<S> bufs[4];
  auto& b = bufs[which];
  if (b.size() < n) b.resize(n);
  return b;
}

template <typename S>
void conv3d_forward(const Layer<S>& l, const Tensor<S>& in, Tensor<S>& out) {
  const auto d = spatial(in.shape);
  if (d.c != l.in_ch) throw std::invalid_argument("conv3d: channel mismatch");
  out = Tensor<S>({l.out_ch, d.z, d.y, d.x});
  const size_t voxels = static_cast<size_t>(d.z) * d.y * d.x;

  if (l.ksize == 1) {
    for (int oc = 0; oc < l.out_ch; ++oc) {
      S* o = out.data.data() + oc * voxels;
      std::fill(o, o + voxels, l.bias.data[oc]);
      for (int ic = 0; ic < l.in_ch; ++ic) {
        const S w = l.weight.data[oc * l.in_ch + ic];
        const S* s = in.data.data() + ic * voxels;
        for (size_t i = 0; i < voxels; ++i) o[i] += w * s[i];
      }
    }
    return;
  }

  const Padded p = padded_dims(d.z, d.y, d.x);
  auto& pin = scratch<S>(0, p.slab * d.c);
  auto& acc = scratch<S>(1, p.slab);
  for (int ic = 0; ic < d.c; ++ic)
    pad_channel(in.data.data() + ic * voxels, pin.data() + ic * p.slab, p, d.z, d.y, d.x);
  for (int oc = 0; oc < l.out_ch; ++oc) {
    std::fill(acc.begin(), acc.begin() + p.slab, S{});
    for (int ic = 0; ic < l.in_ch; ++ic)
      fused_conv_accum(acc.data(), pin.data() + ic * p.slab,
                       l.weight.data.data() + (oc * l.in_ch + ic) * 27, p);
    unpad_channel(acc.data(), out.data.data() + oc * voxels, p, d.z, d.y, d.x, l.bias.data[oc]);
  }
}

template <typename S>
void conv3d_backward(const Layer<S>& l, const Tensor<S>& in, const Tensor<S>& dout, Tensor<S>& din,
                     Tensor<S>& dweight, Tensor<S>& dbias) {
  const auto d = spatial(in.shape);
  const size_t voxels = static_cast<size_t>(d.z) * d.y * d.x;
  din = Tensor<S>(in.shape);

  for (int oc = 0; oc < l.out_ch; ++oc) {
    const S* g = dout.data.data() + oc * voxels;
    S acc{};
    for (size_t i = 0; i < voxels; ++i) acc += g[i];
    dbias.data[oc] += acc;
  }

  if (l.ksize == 1) {
    for (int oc = 0; oc < l.out_ch; ++oc) {
      const S* g = dout.data.data() + oc * voxels;
      for (int ic = 0; ic < l.in_ch; ++ic) {
        const S* s = in.data.data() + ic * voxels;
        S* di = din.data.data() + ic * voxels;
        const S w = l.weight.data[oc * l.in_ch + ic];
        S wg{};
        for (size_t i = 0; i < voxels; ++i) {
          wg += g[i] * s[i];
          di[i] += w * g[i];
        }
        dweight.data[oc * l.in_ch + ic] += wg;
      }
    }
    return;
  }

  const Padded p = padded_dims(d.z, d.y, d.x);
  auto& pin = scratch<S>(0, p.slab * d.c);
  auto& pdout = scratch<S>(2, p.slab * l.out_ch);
  auto& acc = scratch<S>(1, p.slab);
  for (int ic = 0; ic < d.c; ++ic)
    pad_channel(in.data.data() + ic * voxels, pin.data() + ic * p.slab, p, d.z, d.y, d.x);
  for (int oc = 0; oc < l.out_ch; ++oc)
    pad_channel(dout.data.data() + oc * voxels, pdout.data() + oc * p.slab, p, d.z, d.y, d.x);

  S wflip[27];
  for (int oc = 0; oc < l.out_ch; ++oc)
    for (int ic = 0; ic < l.in_ch; ++ic)
      fused_conv_weight_grad(pdout.data() + oc * p.slab, pin.data() + ic * p.slab,
                             dweight.data.data() + (oc * l.in_ch + ic) * 27, p);

  for (int ic = 0; ic < l.in_ch; ++ic) {
    std::fill(acc.begin(), acc.begin() + p.slab, S{});
    for (int oc = 0; oc < l.out_ch; ++oc) {
      const S* w = l.weight.data.data() + (oc * l.in_ch + ic) * 27;
      for (int t = 0; t < 27; ++t) wflip[t] = w[26 - t];
      fused_conv_accum(acc.data(), pdout.data() + oc * p.slab, wflip, p);
    }
    unpad_channel(acc.data(), din.data.data() + ic * voxels, p, d.z, d.y, d.x);
  }
}

template <typename S>
void maxpool2_forward(const Tensor<S>& in, Tensor<S>& out, std::vector<int32_t>& argmax) {
  const auto d = spatial(in.shape);
  const int oz = (d.z + 1) / 2, oy = (d.y + 1) / 2, ox = (d.x + 1) / 2;
  out = Tensor<S>({d.c, oz, oy, ox});
  argmax.assign(out.numel(), 0);
  const size_t in_slab = static_cast<size_t>(d.z) * d.y * d.x;
  size_t oi = 0;
  for (int c = 0; c < d.c; ++c) {
    const S* s = in.data.data() + c * in_slab;
    for (int z = 0; z < oz; ++z)
      for (int y = 0; y < oy; ++y)
        for (int x = 0; x < ox; ++x, ++oi) {
          S best{};
          int32_t best_idx = -1;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const int zz = 2 * z + dz, yy = 2 * y + dy, xx = 2 * x + dx;
                if (zz >= d.z || yy >= d.y || xx >= d.x) continue;
                const int32_t idx = (zz * d.y + yy) * d.x + xx;
                if (best_idx < 0 || s[idx] > best) {
                  best = s[idx];
                  best_idx = idx;
                }
              }
          out.data[oi] = best;
          argmax[oi] = static_cast<int32_t>(c * in_slab) + best_idx;
        }
  }
}

template <typename S>
void upsample2_forward(const Tensor<S>& in, Tensor<S>& out) {
  const auto d = spatial(in.shape);
  out = Tensor<S>({d.c, 2 * d.z, 2 * d.y, 2 * d.x});
  const size_t in_slab = static_cast<size_t>(d.z) * d.y * d.x;
  const size_t out_slab = 8 * in_slab;
  for (int c = 0; c < d.c; ++c) {
    const S* s = in.data.data() + c * in_slab;
    S* o = out.data.data() + c * out_slab;
    for (int z = 0; z < 2 * d.z; ++z)
      for (int y = 0; y < 2 * d.y; ++y) {
        const S* row = s + ((static_cast<size_t>(z / 2) * d.y) + y / 2) * d.x;
        S* orow = o + (static_cast<size_t>(z) * 2 * d.y + y) * 2 * d.x;
        for (int x = 0; x < 2 * d.x; ++x) orow[x] = row[x / 2];
      }
  }
}

}  // namespace nndetail

template <typename S>
void run_forward(const Network<S>& net, const Tensor<S>& input, Activations<S>& acts) {
  if (input.shape != net.input_shape) throw std::invalid_argument("forward: input shape mismatch");
  acts.outputs.assign(net.layers.size(), Tensor<S>());
  acts.pool_argmax.assign(net.layers.size(), {});

  const Tensor<S>* cur = &input;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    Tensor<S>& out = acts.outputs[i];
    switch (l.kind) {
      case LayerKind::Conv3d:
        nndetail::conv3d_forward(l, *cur, out);
        break;
      case LayerKind::Relu:
        out = *cur;
        for (auto& v : out.data) v = v > S{} ? v : S{};
        break;
      case LayerKind::MaxPool2:
        nndetail::maxpool2_forward(*cur, out, acts.pool_argmax[i]);
        break;
      case LayerKind::Upsample2:
        nndetail::upsample2_forward(*cur, out);
        break;
      case LayerKind::SkipConcat: {
        const Tensor<S>& skip = acts.outputs[l.skip_from];
        const auto a = nndetail::spatial(skip.shape);
        const auto b = nndetail::spatial(cur->shape);
        if (a.z != b.z || a.y != b.y || a.x != b.x)
          throw std::invalid_argument("skip_concat: spatial dims mismatch");
        out = Tensor<S>({a.c + b.c, a.z, a.y, a.x});
        std::copy(skip.data.begin(), skip.data.end(), out.data.begin());
        std::copy(cur->data.begin(), cur->data.end(), out.data.begin() + skip.data.size());
        break;
      }
      case LayerKind::Dense: {
        if (static_cast<int>(cur->numel()) != l.in_features)
          throw std::invalid_argument("dense: input size mismatch");
        out = Tensor<S>({l.out_features});
        using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<const Mat> W(l.weight.data.data(), l.out_features, l.in_features);
        Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> x(cur->data.data(), l.in_features);
        Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> y(out.data.data(), l.out_features);
        Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> b(l.bias.data.data(), l.out_features);
        y.noalias() = W * x + b;
        break;
      }
    }
    cur = &out;
  }
}

template <typename S>
Tensor<S> forward(const Network<S>& net, const Tensor<S>& input) {
  Activations<S> acts;
  run_forward(net, input, acts);
  return acts.outputs.back();
}

// mean |pred - target|, accumulated in double
template <typename S>
double mae_loss(const Tensor<S>& pred, const Tensor<S>& target) {
  if (pred.shape != target.shape) throw std::invalid_argument("mae_loss: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < pred.numel(); ++i)
    acc += std::abs(static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]));
  return acc / static_cast<double>(pred.numel());
}

// Reverse-mode gradients of mae_loss(forward(net, x), target) wrt parameters.
// Gradients are ADDED into `grads` scaled by `scale` (batch averaging hook);
// the subgradient of |r| at r = 0 is taken as 0. Returns the sample loss.
template <typename S>
double backward_mae(const Network<S>& net, const Tensor<S>& input, const Activations<S>& acts,
                    const Tensor<S>& target, NetGrads<S>& grads, double scale = 1.0) {
  const size_t n_layers = net.layers.size();
  const Tensor<S>& pred = acts.outputs.back();
  if (pred.shape != target.shape) throw std::invalid_argument("backward_mae: target shape mismatch");

  std::vector<Tensor<S>> grad_out(n_layers);
  grad_out[n_layers - 1] = Tensor<S>(pred.shape);
  double loss = 0.0;
  const S unit = static_cast<S>(scale / static_cast<double>(pred.numel()));
  for (size_t i = 0; i < pred.numel(); ++i) {
    const double r = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    loss += std::abs(r);
    grad_out[n_layers - 1].data[i] = r > 0 ? unit : (r < 0 ? -unit : S{});
  }
  loss /= static_cast<double>(pred.numel());

  auto input_of = [&](size_t i) -> const Tensor<S>& {
    return i == 0 ? input : acts.outputs[i - 1];
  };
  auto add_into = [](Tensor<S>& dst, const Tensor<S>& src) {
    if (dst.shape.empty())
      dst = src;
    else
      dst.array() += src.array();
  };

  for (size_t ii = n_layers; ii-- > 0;) {
    if (grad_out[ii].shape.empty()) continue;  // no consumer reached this output
    const auto& l = net.layers[ii];
    const Tensor<S>& in = input_of(ii);
    const Tensor<S>& g = grad_out[ii];
    Tensor<S> din;
    switch (l.kind) {
      case LayerKind::Conv3d:
        nndetail::conv3d_backward(l, in, g, din, grads.dweight[ii], grads.dbias[ii]);
        break;
      case LayerKind::Relu: {
        din = Tensor<S>(in.shape);
        for (size_t i = 0; i < in.numel(); ++i) din.data[i] = in.data[i] > S{} ? g.data[i] : S{};
        break;
      }
      case LayerKind::MaxPool2: {
        din = Tensor<S>(in.shape);
        const auto& argmax = acts.pool_argmax[ii];
        for (size_t i = 0; i < g.numel(); ++i) din.data[argmax[i]] += g.data[i];
        break;
      }
      case LayerKind::Upsample2: {
        din = Tensor<S>(in.shape);
        const auto d = nndetail::spatial(in.shape);
        const size_t in_slab = static_cast<size_t>(d.z) * d.y * d.x;
        for (int c = 0; c < d.c; ++c) {
          const S* go = g.data.data() + c * 8 * in_slab;
          S* di = din.data.data() + c * in_slab;
          for (int z = 0; z < 2 * d.z; ++z)
            for (int y = 0; y < 2 * d.y; ++y) {
              const S* grow = go + (static_cast<size_t>(z) * 2 * d.y + y) * 2 * d.x;
              S* drow = di + (static_cast<size_t>(z / 2) * d.y + y / 2) * d.x;
              for (int x = 0; x < 2 * d.x; ++x) drow[x / 2] += grow[x];
            }
        }
        break;
      }
      case LayerKind::SkipConcat: {
        const Tensor<S>& skip = acts.outputs[l.skip_from];
        Tensor<S> gskip(skip.shape);
        std::copy(g.data.begin(), g.data.begin() + skip.numel(), gskip.data.begin());
        add_into(grad_out[l.skip_from], gskip);
        din = Tensor<S>(in.shape);
        std::copy(g.data.begin() + skip.numel(), g.data.end(), din.data.begin());
        break;
      }
      case LayerKind::Dense: {
        din = Tensor<S>(in.shape);
        using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<const Mat> W(l.weight.data.data(), l.out_features, l.in_features);
        Eigen::Map<Mat> dW(grads.dweight[ii].data.data(), l.out_features, l.in_features);
        Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> x(in.data.data(), l.in_features);
        Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> gy(g.data.data(), l.out_features);
        Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> dx(din.data.data(), l.in_features);
        dW.noalias() += gy * x.transpose();
        Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> db(grads.dbias[ii].data.data(), l.out_features);
        db.noalias() += gy;
        dx.noalias() = W.transpose() * gy;
        break;
      }
    }
    if (ii > 0) add_into(grad_out[ii - 1], din);
  }
  return loss;
}

// Mean MAE loss and mean parameter gradients over a batch, accumulated in
// sample order for deterministic results.
template <typename S>
double batch_gradients(const Network<S>& net, const std::vector<Tensor<S>>& inputs,
                       const std::vector<Tensor<S>>& targets, NetGrads<S>& grads) {
  if (inputs.empty() || inputs.size() != targets.size())
    throw std::invalid_argument("batch_gradients: bad batch");
  grads.zero();
  const double scale = 1.0 / static_cast<double>(inputs.size());
  double loss = 0.0;
  Activations<S> acts;
  for (size_t i = 0; i < inputs.size(); ++i) {
    run_forward(net, inputs[i], acts);
    loss += backward_mae(net, inputs[i], acts, targets[i], grads, scale);
  }
  return loss * scale;
}

}  // namespace bsa
