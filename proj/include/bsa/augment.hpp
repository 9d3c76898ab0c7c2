#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "bsa/nnkit.hpp"
#include "bsa/rng.hpp"
#include "bsa/tiler.hpp"
#include "bsa/volume.hpp"

namespace bsa {

struct AugmentConfig {
  bool shift = true;         // random +-1 voxel jitter of the patch origin
  bool mixup = true;
  double mixup_alpha = 0.2;  // Beta concentration for mixup weights
};

// Extract the patch at origin + t with t drawn uniformly from {-1,0,1} per
// axis; the shifted origin is clamped to the valid range.
template <typename T>
Volume3D<T> random_shift_patch(const Volume3D<T>& vol, std::array<int, 3> origin,
                               std::array<int, 3> patch_dims, Rng& rng) {
  std::array<int, 3> shifted = origin;
  for (int axis = 0; axis < 3; ++axis) {
    const int t = rng.uniform_int(-1, 1);
    const int hi = vol.dims()[axis] - patch_dims[axis];
    shifted[axis] = std::clamp(origin[axis] + t, 0, hi);
  }
  return extract_patch(vol, shifted, patch_dims);
}

// Classic mixup over a batch: each sample i is replaced by the convex
// combination with its partner under a random permutation, lambda ~
// Beta(alpha, alpha). Partners are read from a snapshot of the unmixed batch
// so every output is an exact two-sample combination. Batches of one pass
// through unchanged. Drawn lambdas can be tapped for testing.
template <typename S>
void mixup_batch(std::vector<Tensor<S>>& inputs, std::vector<Tensor<S>>& targets, Rng& rng,
                 double alpha, std::vector<double>* lambda_tap = nullptr) {
  const size_t n = inputs.size();
  if (n != targets.size()) throw std::invalid_argument("mixup_batch: size mismatch");
  if (n < 2) return;
  if (alpha <= 0.0) throw std::invalid_argument("mixup_batch: alpha must be > 0");

  std::vector<size_t> partner(n);
  for (size_t i = 0; i < n; ++i) partner[i] = i;
  for (size_t i = n - 1; i > 0; --i)
    std::swap(partner[i], partner[rng.uniform_int(0, static_cast<int>(i))]);

  const std::vector<Tensor<S>> x_orig = inputs;
  const std::vector<Tensor<S>> y_orig = targets;
  for (size_t i = 0; i < n; ++i) {
    const size_t j = partner[i];
    if (j == i) {
      if (lambda_tap) lambda_tap->push_back(1.0);
      continue;
    }
    const double lambda = rng.beta(alpha, alpha);
    if (lambda_tap) lambda_tap->push_back(lambda);
    const S lam = static_cast<S>(lambda);
    const S rem = static_cast<S>(1.0 - lambda);
    inputs[i].array() = lam * x_orig[i].array() + rem * x_orig[j].array();
    targets[i].array() = lam * y_orig[i].array() + rem * y_orig[j].array();
  }
}

}  // namespace bsa
