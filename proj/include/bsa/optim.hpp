#pragma once

#include <cmath>
#include <stdexcept>

#include "bsa/nnkit.hpp"

namespace bsa {

enum class OptKind { Sgd, Adam };

template <typename S>
struct OptimizerState {
  OptKind kind = OptKind::Sgd;
  double lr = 0.01;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step_count = 0;
  std::vector<Tensor<S>> m_w, v_w, m_b, v_b;

  static OptimizerState sgd(double lr) {
    OptimizerState s;
    s.kind = OptKind::Sgd;
    s.lr = lr;
    return s;
  }

  static OptimizerState adam(double lr) {
    OptimizerState s;
    s.kind = OptKind::Adam;
    s.lr = lr;
    return s;
  }

  void init_like(const Network<S>& net) {
    m_w.clear();
    v_w.clear();
    m_b.clear();
    v_b.clear();
    if (kind != OptKind::Adam) return;
    for (const auto& l : net.layers) {
      m_w.emplace_back(l.weight.shape.empty() ? Tensor<S>() : Tensor<S>(l.weight.shape));
      v_w.emplace_back(l.weight.shape.empty() ? Tensor<S>() : Tensor<S>(l.weight.shape));
      m_b.emplace_back(l.bias.shape.empty() ? Tensor<S>() : Tensor<S>(l.bias.shape));
      v_b.emplace_back(l.bias.shape.empty() ? Tensor<S>() : Tensor<S>(l.bias.shape));
    }
  }

  void step(Network<S>& net, const NetGrads<S>& grads) {
    if (kind == OptKind::Sgd) {
      for (size_t i = 0; i < net.layers.size(); ++i) {
        auto& l = net.layers[i];
        if (!l.has_params()) continue;
        l.weight.array() -= static_cast<S>(lr) * grads.dweight[i].array();
        l.bias.array() -= static_cast<S>(lr) * grads.dbias[i].array();
      }
      return;
    }
    if (m_w.empty()) init_like(net);
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    auto update = [&](Tensor<S>& p, const Tensor<S>& g, Tensor<S>& m, Tensor<S>& v) {
      for (size_t j = 0; j < p.numel(); ++j) {
        const double gj = static_cast<double>(g.data[j]);
        const double mj = beta1 * static_cast<double>(m.data[j]) + (1.0 - beta1) * gj;
        const double vj = beta2 * static_cast<double>(v.data[j]) + (1.0 - beta2) * gj * gj;
        m.data[j] = static_cast<S>(mj);
        v.data[j] = static_cast<S>(vj);
        p.data[j] = static_cast<S>(static_cast<double>(p.data[j]) -
                                   lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
      }
    };
    for (size_t i = 0; i < net.layers.size(); ++i) {
      auto& l = net.layers[i];
      if (!l.has_params()) continue;
      update(l.weight, grads.dweight[i], m_w[i], v_w[i]);
      update(l.bias, grads.dbias[i], m_b[i], v_b[i]);
    }
  }
};

}  // namespace bsa
