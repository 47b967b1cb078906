// SPDX-License-Identifier: Apache-2.0
#include "dfseg/losses.hpp"

#include <cmath>
#include <string>

#include "dfseg/common.hpp"

namespace dfseg {

namespace detail {

double stable_softplus(double x) {
  // softplus(x) = max(x, 0) + log1p(exp(-|x|))
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

namespace {

// Gradient of x log x needs a floor on the log; softmax outputs never reach
// it, hand-built one-hot inputs do.
constexpr double kLogFloor = 1e-12;

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidInputError(message);
}

}  // namespace

void validate_softmax_map(const Tensor& s) {
  require(s.ndim() == 4, "softmax map must be N x K x H x W");
  const int n = s.dim(0), k = s.dim(1), h = s.dim(2), w = s.dim(3);
  require(n >= 1 && k >= 2 && h >= 1 && w >= 1,
          "softmax map needs N >= 1, K >= 2");
  const double* p = s.data();
  for (int64_t i = 0; i < s.numel(); ++i) {
    const double v = p[i];
    require(std::isfinite(v), "softmax map contains NaN/Inf");
    require(v >= -1e-9 && v <= 1.0 + 1e-9, "softmax map entry outside [0, 1]");
  }
  for (int in = 0; in < n; ++in) {
    for (int ih = 0; ih < h; ++ih) {
      for (int iw = 0; iw < w; ++iw) {
        double sum = 0.0;
        for (int ik = 0; ik < k; ++ik) sum += s.at(in, ik, ih, iw);
        require(std::abs(sum - 1.0) <= kSoftmaxSumTol,
                "softmax map pixel does not sum to 1");
      }
    }
  }
}

void validate_class_distribution(const Tensor& w) {
  require(w.ndim() == 1 && w.dim(0) >= 2,
          "class distribution must be a length-K vector, K >= 2");
  double sum = 0.0;
  for (int i = 0; i < w.dim(0); ++i) {
    const double v = w.at(i);
    require(std::isfinite(v), "class distribution contains NaN/Inf");
    require(v >= -1e-9 && v <= 1.0 + 1e-9,
            "class distribution entry outside [0, 1]");
    sum += v;
  }
  require(std::abs(sum - 1.0) <= kDistributionSumTol,
          "class distribution does not sum to 1");
}

double entropy_loss(const Tensor& s, Tensor* grad) {
  validate_softmax_map(s);
  const double m = static_cast<double>(s.numel() / s.dim(1));  // N*H*W pixels
  double total = 0.0;
  const double* p = s.data();
  for (int64_t i = 0; i < s.numel(); ++i) total -= xlogx(p[i]);
  if (grad != nullptr) {
    *grad = Tensor(s.shape());
    double* g = grad->data();
    for (int64_t i = 0; i < s.numel(); ++i) {
      g[i] = -(std::log(std::max(p[i], kLogFloor)) + 1.0) / m;
    }
  }
  return total / m;
}

Tensor batch_class_distribution(const Tensor& s) {
  validate_softmax_map(s);
  const int n = s.dim(0), k = s.dim(1), h = s.dim(2), w = s.dim(3);
  const double m = static_cast<double>(n) * h * w;
  Tensor dist({k});
  for (int in = 0; in < n; ++in) {
    for (int ik = 0; ik < k; ++ik) {
      const double* plane = s.data() + (static_cast<int64_t>(in) * k + ik) * h * w;
      double acc = 0.0;
      for (int i = 0; i < h * w; ++i) acc += plane[i];
      dist.at(ik) += acc;
    }
  }
  dist.scale(1.0 / m);
  return dist;
}

Tensor batch_class_distribution_backward(const std::vector<int>& s_shape,
                                         const Tensor& dw) {
  if (s_shape.size() != 4) {
    throw InvalidInputError("softmax map shape must be N x K x H x W");
  }
  const int n = s_shape[0], k = s_shape[1], h = s_shape[2], w = s_shape[3];
  if (dw.ndim() != 1 || dw.dim(0) != k) {
    throw InvalidInputError("dL/dw length must match K");
  }
  const double inv_m = 1.0 / (static_cast<double>(n) * h * w);
  Tensor ds(s_shape);
  for (int in = 0; in < n; ++in) {
    for (int ik = 0; ik < k; ++ik) {
      const double g = dw.at(ik) * inv_m;
      double* plane = ds.data() + (static_cast<int64_t>(in) * k + ik) * h * w;
      for (int i = 0; i < h * w; ++i) plane[i] = g;
    }
  }
  return ds;
}

double diversity_loss(const Tensor& w, Tensor* grad) {
  validate_class_distribution(w);
  const int k = w.dim(0);
  double loss = 0.0;
  for (int i = 0; i < k; ++i) loss += xlogx(w.at(i));
  if (grad != nullptr) {
    *grad = Tensor({k});
    for (int i = 0; i < k; ++i) {
      grad->at(i) = std::log(std::max(w.at(i), kLogFloor)) + 1.0;
    }
  }
  return loss;
}

double weighted_diversity_loss(const Tensor& w, Tensor* grad) {
  validate_class_distribution(w);
  const int k = w.dim(0);
  const double target = 1.0 / static_cast<double>(k);
  double loss = 0.0;
  if (grad != nullptr) *grad = Tensor({k});
  for (int i = 0; i < k; ++i) {
    const double wi = w.at(i);
    const double dev = target - wi;
    const double denom = std::max(wi, kWeightedDiversityEps);
    loss += dev * dev / denom;
    if (grad != nullptr) {
      double g = -2.0 * dev / denom;
      if (wi > kWeightedDiversityEps) g -= dev * dev / (denom * denom);
      grad->at(i) = g;
    }
  }
  return loss;
}

double adversarial_discriminator_loss(const DiscriminatorLogits& logits,
                                      Tensor* grad_real, Tensor* grad_fake) {
  const Tensor& r = logits.real;
  const Tensor& f = logits.fake;
  if (r.ndim() != 1 || f.ndim() != 1 || r.dim(0) == 0 || f.dim(0) == 0) {
    throw InvalidInputError("discriminator loss needs nonempty logit vectors");
  }
  if (!r.all_finite() || !f.all_finite()) {
    throw InvalidInputError("discriminator logits contain NaN/Inf");
  }
  const int nr = r.dim(0), nf = f.dim(0);
  // -log sigmoid(x) = softplus(-x); -log(1 - sigmoid(x)) = softplus(x)
  double loss = 0.0;
  for (int i = 0; i < nr; ++i) loss += detail::stable_softplus(-r.at(i)) / nr;
  for (int i = 0; i < nf; ++i) loss += detail::stable_softplus(f.at(i)) / nf;
  if (grad_real != nullptr) {
    *grad_real = Tensor({nr});
    for (int i = 0; i < nr; ++i) {
      grad_real->at(i) = (detail::sigmoid(r.at(i)) - 1.0) / nr;
    }
  }
  if (grad_fake != nullptr) {
    *grad_fake = Tensor({nf});
    for (int i = 0; i < nf; ++i) {
      grad_fake->at(i) = detail::sigmoid(f.at(i)) / nf;
    }
  }
  return loss;
}

double adversarial_generator_loss(const Tensor& fake_logits, Tensor* grad) {
  if (fake_logits.ndim() != 1 || fake_logits.dim(0) == 0) {
    throw InvalidInputError("generator loss needs a nonempty logit vector");
  }
  if (!fake_logits.all_finite()) {
    throw InvalidInputError("generator logits contain NaN/Inf");
  }
  const int n = fake_logits.dim(0);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    loss += detail::stable_softplus(-fake_logits.at(i)) / n;
  }
  if (grad != nullptr) {
    *grad = Tensor({n});
    for (int i = 0; i < n; ++i) {
      grad->at(i) = (detail::sigmoid(fake_logits.at(i)) - 1.0) / n;
    }
  }
  return loss;
}

double generator_total_loss(double l_gan, double l_div, double l_ent,
                            const LossWeights& weights) {
  if (!std::isfinite(l_gan) || !std::isfinite(l_div) || !std::isfinite(l_ent)) {
    throw InvalidInputError("generator total loss: non-finite term");
  }
  if (!(weights.lambda_d >= 0.0) || !(weights.lambda_e >= 0.0) ||
      !std::isfinite(weights.lambda_d) || !std::isfinite(weights.lambda_e)) {
    throw InvalidInputError("loss weights must be finite and >= 0");
  }
  return l_gan + weights.lambda_d * l_div + weights.lambda_e * l_ent;
}

double kd_kl_loss(const Tensor& t, const Tensor& s, Tensor* grad_s) {
  if (!t.same_shape(s)) {
    throw InvalidInputError("teacher/student softmax maps differ in shape");
  }
  validate_softmax_map(t);
  validate_softmax_map(s);
  const double m = static_cast<double>(t.numel() / t.dim(1));
  const double* tp = t.data();
  const double* sp = s.data();
  double total = 0.0;
  // Symmetric clamp keeps kd(t, t) identically zero even when a teacher
  // probability underflows the epsilon.
  for (int64_t i = 0; i < t.numel(); ++i) {
    if (tp[i] > 0.0) {
      total += tp[i] * (std::log(std::max(tp[i], kKlLogEps)) -
                        std::log(std::max(sp[i], kKlLogEps)));
    }
  }
  if (grad_s != nullptr) {
    *grad_s = Tensor(s.shape());
    double* g = grad_s->data();
    for (int64_t i = 0; i < s.numel(); ++i) {
      // d/ds of -t log max(s, eps); gated to zero inside the clamp
      g[i] = (tp[i] > 0.0 && sp[i] > kKlLogEps) ? -tp[i] / (sp[i] * m) : 0.0;
    }
  }
  return total / m;
}

double cross_entropy_loss(const Tensor& s, const std::vector<int>& labels,
                          Tensor* grad) {
  validate_softmax_map(s);
  const int n = s.dim(0), k = s.dim(1), h = s.dim(2), w = s.dim(3);
  const int64_t pixels = static_cast<int64_t>(n) * h * w;
  if (static_cast<int64_t>(labels.size()) != pixels) {
    throw InvalidInputError("label count does not match softmax map pixels");
  }
  if (grad != nullptr) *grad = Tensor(s.shape());
  double total = 0.0;
  int64_t pix = 0;
  for (int in = 0; in < n; ++in) {
    for (int ih = 0; ih < h; ++ih) {
      for (int iw = 0; iw < w; ++iw, ++pix) {
        const int label = labels[static_cast<std::size_t>(pix)];
        if (label < 0 || label >= k) {
          throw InvalidInputError("cross entropy label out of range");
        }
        const double p = std::max(s.at(in, label, ih, iw), kKlLogEps);
        total -= std::log(p);
        if (grad != nullptr) {
          grad->at(in, label, ih, iw) =
              -1.0 / (p * static_cast<double>(pixels));
        }
      }
    }
  }
  return total / static_cast<double>(pixels);
}

}  // namespace dfseg
