// SPDX-License-Identifier: Apache-2.0
//
// Loss functions for the three-player generator/discriminator/segmenter
// game and for teacher-student distillation. All functions are pure: they
// read their inputs, optionally write an analytic gradient, and share no
// state, so concurrent calls are safe.
//
// Conventions:
//  - natural logarithms everywhere; entropy-style values are in nats
//  - 0 * log 0 := 0
//  - log-of-sigmoid goes through softplus identities, never exp-then-log
#pragma once

#include "dfseg/tensor.hpp"

namespace dfseg {

/// Per-pixel softmax maps are accepted when every pixel's class vector sums
/// to one within this tolerance.
inline constexpr double kSoftmaxSumTol = 1e-5;
/// Batch class distributions are accepted within this tighter tolerance.
inline constexpr double kDistributionSumTol = 1e-6;
/// Stabilizer for the inverse-frequency weight in weighted_diversity_loss.
inline constexpr double kWeightedDiversityEps = 1e-6;
/// Clamp applied to student probabilities inside the KL log.
inline constexpr double kKlLogEps = 1e-8;

struct LossWeights {
  double lambda_d = 0.0;  ///< diversity weight
  double lambda_e = 0.0;  ///< entropy weight
};

struct DiscriminatorLogits {
  Tensor real;  ///< length-N pre-sigmoid logits for proxy images
  Tensor fake;  ///< length-N pre-sigmoid logits for generated images
};

/// Throws InvalidInputError unless s is a finite N x K x H x W tensor whose
/// per-pixel class vectors lie on the probability simplex.
void validate_softmax_map(const Tensor& s);

/// Throws InvalidInputError unless w is a finite length-K simplex vector.
void validate_class_distribution(const Tensor& w);

/// Mean per-pixel Shannon entropy of a softmax map, in [0, log K].
/// Optional grad receives dL/ds (same shape as s).
double entropy_loss(const Tensor& s, Tensor* grad = nullptr);

/// Batch class distribution w_k: softmax output averaged over batch and
/// pixels. Returns a length-K simplex vector.
Tensor batch_class_distribution(const Tensor& s);

/// Chain rule through batch_class_distribution: given dL/dw, returns dL/ds.
Tensor batch_class_distribution_backward(const std::vector<int>& s_shape,
                                         const Tensor& dw);

/// Negative entropy of the batch class distribution, sum_k w_k log w_k,
/// in [-log K, 0]; minimized exactly at the uniform distribution.
double diversity_loss(const Tensor& w, Tensor* grad = nullptr);

/// Inverse-frequency weighted squared distance from the uniform
/// distribution: sum_k (1/K - w_k)^2 / max(w_k, eps). Nonnegative; zero iff
/// w is uniform.
double weighted_diversity_loss(const Tensor& w, Tensor* grad = nullptr);

/// Standard GAN discriminator loss
///   -mean log sigmoid(real) - mean log(1 - sigmoid(fake)),
/// computed in softplus form. Optional gradients w.r.t. both logit vectors.
double adversarial_discriminator_loss(const DiscriminatorLogits& logits,
                                      Tensor* grad_real = nullptr,
                                      Tensor* grad_fake = nullptr);

/// Non-saturating generator loss -mean log sigmoid(fake).
double adversarial_generator_loss(const Tensor& fake_logits,
                                  Tensor* grad = nullptr);

/// Total generator objective: l_gan + lambda_d * l_div + lambda_e * l_ent.
double generator_total_loss(double l_gan, double l_div, double l_ent,
                            const LossWeights& weights);

/// KL divergence D(t || s) averaged over batch and pixels. Gradients flow
/// into the student map s only; the teacher map t is a constant.
double kd_kl_loss(const Tensor& t, const Tensor& s, Tensor* grad_s = nullptr);

/// Per-pixel cross entropy -mean log s[label]; the supervised teacher
/// objective. Labels are flat class indices of length N*H*W matching s.
/// Optional grad receives dL/ds.
double cross_entropy_loss(const Tensor& s, const std::vector<int>& labels,
                          Tensor* grad = nullptr);

namespace detail {
double stable_softplus(double x);  ///< log(1 + exp(x)) without overflow
double sigmoid(double x);
}  // namespace detail

}  // namespace dfseg
