// SPDX-License-Identifier: Apache-2.0
//
// Minimal layer library with explicit forward/backward passes. Layers are
// value types; forward caches whatever backward needs, so one instance
// serves one thread at a time. Parameters are exposed through ParamRef for
// optimizers and checkpointing.
#pragma once

#include <string>
#include <vector>

#include "dfseg/common.hpp"
#include "dfseg/tensor.hpp"

namespace dfseg::nn {

struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
  bool trainable;  ///< false for batch-norm running statistics
};

int64_t parameter_count(const std::vector<ParamRef>& params,
                        bool trainable_only = true);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad);

  void init(Rng& rng, double stddev = 0.02);
  Tensor forward(const Tensor& x);
  /// Returns dL/dx; accumulates weight/bias grads unless param_grads=false.
  Tensor backward(const Tensor& dy, bool param_grads = true);
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);

  int in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;
  Tensor weight;  // (out_ch, in_ch * k * k)
  Tensor bias;    // (out_ch)
  Tensor weight_grad, bias_grad;

 private:
  Tensor cols_;  // im2col of the last input
  std::vector<int> x_shape_;
};

/// Transposed convolution; the exact adjoint of Conv2d with the same
/// (kernel, stride, pad). Weight layout (in_ch, out_ch * k * k).
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad);

  void init(Rng& rng, double stddev = 0.02);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy, bool param_grads = true);
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);

  int in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;
  Tensor weight;  // (in_ch, out_ch * k * k)
  Tensor bias;    // (out_ch)
  Tensor weight_grad, bias_grad;

 private:
  Tensor x_mat_;  // (N*H*W, in_ch) channels-last view of the last input
  std::vector<int> x_shape_;
};

class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features);

  void init(Rng& rng, double stddev = 0.02);
  Tensor forward(const Tensor& x);  // x: (N, in) -> (N, out)
  Tensor backward(const Tensor& dy, bool param_grads = true);
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);

  int in_features = 0, out_features = 0;
  Tensor weight;  // (out, in)
  Tensor bias;    // (out)
  Tensor weight_grad, bias_grad;

 private:
  Tensor x_;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1);

  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy, bool param_grads = true);
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);

  int channels = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  Tensor gamma, beta;
  Tensor gamma_grad, beta_grad;
  Tensor running_mean, running_var;

 private:
  Tensor xhat_;
  std::vector<double> inv_std_;
  bool train_mode_ = false;
};

class LeakyReLU {
 public:
  explicit LeakyReLU(double negative_slope = 0.0) : slope(negative_slope) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;
  double slope = 0.0;

 private:
  Tensor x_;
};

class Tanh {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor y_;
};

class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double p) : p(p) {}
  /// Train mode draws a fresh mask from rng; eval mode is the identity.
  Tensor forward(const Tensor& x, bool train, Rng* rng);
  Tensor backward(const Tensor& dy) const;
  double p = 0.5;

 private:
  Tensor mask_;
  bool identity_ = true;
};

/// Factor-2 bilinear upsampling (half-pixel centers, clamped borders).
class BilinearUpsample2x {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  std::vector<int> x_shape_;
};

/// Per-pixel softmax over the channel dimension, computed via the
/// max-subtracted log-sum-exp identity.
class SoftmaxChannel {
 public:
  Tensor forward(const Tensor& logits);
  /// Chain rule from dL/dprobs to dL/dlogits using the cached probs.
  Tensor backward(const Tensor& dprobs) const;
  const Tensor& probs() const { return probs_; }

 private:
  Tensor probs_;
};

}  // namespace dfseg::nn
