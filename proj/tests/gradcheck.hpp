#pragma once

// Central finite-difference oracle for backprop, shared by the unit tests and
// the acceptance suite. Runs in double. Parameters whose +-h evaluations
// cross a non-smooth point (MAE residual sign change, ReLU activation sign
// change, max-pool winner change) or sit on a |residual| < 1e-6 kink are
// excluded from the comparison.

#include <cmath>
#include <cstdint>
#include <vector>

#include "bsa/nnkit.hpp"
#include "bsa/rng.hpp"

namespace gradcheck {

struct Signature {
  std::vector<int32_t> pool_winners;
  std::vector<uint8_t> relu_signs;
  std::vector<uint8_t> residual_signs;
  double min_abs_residual = 0.0;

  bool same_region(const Signature& other) const {
    return pool_winners == other.pool_winners && relu_signs == other.relu_signs &&
           residual_signs == other.residual_signs;
  }
};

inline Signature capture(const bsa::Network<double>& net, const bsa::Tensor<double>& input,
                         const bsa::Tensor<double>& target, double* loss_out) {
  bsa::Activations<double> acts;
  bsa::run_forward(net, input, acts);
  Signature sig;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].kind == bsa::LayerKind::MaxPool2)
      sig.pool_winners.insert(sig.pool_winners.end(), acts.pool_argmax[i].begin(),
                              acts.pool_argmax[i].end());
    if (net.layers[i].kind == bsa::LayerKind::Relu) {
      const bsa::Tensor<double>& in = i == 0 ? input : acts.outputs[i - 1];
      for (double v : in.data) sig.relu_signs.push_back(v > 0.0);
    }
  }
  const bsa::Tensor<double>& pred = acts.outputs.back();
  double loss = 0.0;
  sig.min_abs_residual = 1e300;
  for (size_t i = 0; i < pred.numel(); ++i) {
    const double r = pred.data[i] - target.data[i];
    loss += std::abs(r);
    sig.residual_signs.push_back(r > 0.0);
    sig.min_abs_residual = std::min(sig.min_abs_residual, std::abs(r));
  }
  if (loss_out) *loss_out = loss / static_cast<double>(pred.numel());
  return sig;
}

struct Stats {
  int checked = 0;
  int skipped = 0;
  int failed = 0;
  double max_rel_err = 0.0;
  std::vector<bsa::LayerKind> checked_kinds;
};

inline Stats check_network(bsa::Network<double>& net, const bsa::Tensor<double>& input,
                           const bsa::Tensor<double>& target, double step = 1e-3,
                           double rel_tol = 1e-2) {
  bsa::NetGrads<double> grads;
  grads.init_like(net);
  grads.zero();
  {
    bsa::Activations<double> acts;
    bsa::run_forward(net, input, acts);
    bsa::backward_mae(net, input, acts, target, grads);
  }

  Stats stats;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    auto check_tensor = [&](bsa::Tensor<double>& params, const bsa::Tensor<double>& analytic) {
      for (size_t j = 0; j < params.numel(); ++j) {
        const double saved = params.data[j];
        double loss_hi, loss_lo;
        params.data[j] = saved + step;
        const Signature sig_hi = capture(net, input, target, &loss_hi);
        params.data[j] = saved - step;
        const Signature sig_lo = capture(net, input, target, &loss_lo);
        params.data[j] = saved;

        if (!sig_hi.same_region(sig_lo) || sig_hi.min_abs_residual < 1e-6 ||
            sig_lo.min_abs_residual < 1e-6) {
          ++stats.skipped;
          continue;
        }
        const double fd = (loss_hi - loss_lo) / (2.0 * step);
        const double bp = analytic.data[j];
        const double scale = std::max({std::abs(fd), std::abs(bp), 1e-8});
        const double rel = std::abs(fd - bp) / scale;
        ++stats.checked;
        stats.max_rel_err = std::max(stats.max_rel_err, rel);
        if (rel > rel_tol) ++stats.failed;
      }
      if (params.numel() > 0) stats.checked_kinds.push_back(net.layers[li].kind);
    };
    if (net.layers[li].has_params()) {
      check_tensor(net.layers[li].weight, grads.dweight[li]);
      check_tensor(net.layers[li].bias, grads.dbias[li]);
    }
  }
  return stats;
}

// Small random net touching every layer kind: conv (k=3 and k=1), relu,
// max-pool, upsample, skip-concat and dense.
inline bsa::Network<double> random_micro_net(bsa::Rng& rng, int* out_features = nullptr) {
  bsa::Network<double> net;
  net.input_shape = {1, 4, 4, 4};
  const int c1 = rng.uniform_int(1, 3);
  const int c2 = rng.uniform_int(1, 3);
  const int out = rng.uniform_int(1, 2);

  net.add_conv3d(1, c1, 3, rng);
  net.add_relu();
  const int skip = static_cast<int>(net.layers.size()) - 1;
  net.add_maxpool2();
  net.add_conv3d(c1, c2, rng.uniform() < 0.5 ? 1 : 3, rng);
  net.add_relu();
  net.add_upsample2();
  net.add_skip_concat(skip);
  net.add_conv3d(c1 + c2, c1, 3, rng);
  net.add_relu();
  const int flat = c1 * 4 * 4 * 4;
  net.add_dense(flat, 4, rng);
  net.add_relu();
  net.add_dense(4, out, rng);
  if (out_features) *out_features = out;
  return net;
}

inline bsa::Tensor<double> random_tensor(const std::vector<int>& shape, bsa::Rng& rng) {
  bsa::Tensor<double> t(shape);
  for (auto& v : t.data) v = rng.normal();
  return t;
}

}  // namespace gradcheck
