// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for oracle-style checks. Everything here is deliberately
// naive and independent of the library's computation paths.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dfseg/tensor.hpp"

namespace dfseg::testutil {

/// Naive per-pixel channel softmax (exp / sum), independent of the nn layer.
inline Tensor softmax_from_logits(const Tensor& logits) {
  const int n = logits.dim(0), k = logits.dim(1), h = logits.dim(2),
            w = logits.dim(3);
  Tensor out(logits.shape());
  for (int in = 0; in < n; ++in) {
    for (int ih = 0; ih < h; ++ih) {
      for (int iw = 0; iw < w; ++iw) {
        double m = logits.at(in, 0, ih, iw);
        for (int ik = 1; ik < k; ++ik) {
          m = std::max(m, logits.at(in, ik, ih, iw));
        }
        double denom = 0.0;
        for (int ik = 0; ik < k; ++ik) {
          denom += std::exp(logits.at(in, ik, ih, iw) - m);
        }
        for (int ik = 0; ik < k; ++ik) {
          out.at(in, ik, ih, iw) =
              std::exp(logits.at(in, ik, ih, iw) - m) / denom;
        }
      }
    }
  }
  return out;
}

/// Central finite differences of a scalar function w.r.t. every entry of x.
inline Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                                     const Tensor& x, double h) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

struct GradCheckResult {
  double worst_rel = 0.0;
  int64_t worst_index = -1;
  int64_t checked = 0;
};

/// Elementwise relative error between analytic and numeric gradients,
/// restricted to entries with |numeric| above the guard threshold.
inline GradCheckResult compare_grads(const Tensor& analytic,
                                     const Tensor& numeric,
                                     double guard = 1e-6) {
  GradCheckResult r;
  for (int64_t i = 0; i < analytic.numel(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    if (std::abs(n) <= guard && std::abs(a) <= guard) continue;
    const double rel = std::abs(a - n) / std::max(std::abs(a), std::abs(n));
    ++r.checked;
    if (rel > r.worst_rel) {
      r.worst_rel = rel;
      r.worst_index = i;
    }
  }
  return r;
}

/// Random point on the K-simplex: normalized exponential draws (Dirichlet
/// with unit concentration).
inline Tensor random_simplex(int k, std::function<double()> uniform01) {
  Tensor w({k});
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    const double u = std::max(uniform01(), 1e-300);
    w.at(i) = -std::log(u);
    sum += w.at(i);
  }
  for (int i = 0; i < k; ++i) w.at(i) /= sum;
  return w;
}

}  // namespace dfseg::testutil
