// SPDX-License-Identifier: Apache-2.0
#include "dfseg/nn.hpp"

#include <cmath>

#include <Eigen/Core>

namespace dfseg::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

int conv_out_dim(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// x: (N, C, H, W) -> cols: (N*Ho*Wo, C*k*k); out-of-bounds taps read 0.
Tensor im2col(const Tensor& x, int kernel, int stride, int pad, int ho, int wo) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ckk = c * kernel * kernel;
  Tensor cols({n * ho * wo, ckk});
  double* out = cols.data();
  for (int in = 0; in < n; ++in) {
    const double* img = x.data() + static_cast<int64_t>(in) * c * h * w;
    for (int oh = 0; oh < ho; ++oh) {
      for (int ow = 0; ow < wo; ++ow) {
        double* row = out + (static_cast<int64_t>(in) * ho * wo + oh * wo + ow) * ckk;
        for (int ic = 0; ic < c; ++ic) {
          const double* plane = img + static_cast<int64_t>(ic) * h * w;
          for (int kh = 0; kh < kernel; ++kh) {
            const int ih = oh * stride - pad + kh;
            for (int kw = 0; kw < kernel; ++kw) {
              const int iw = ow * stride - pad + kw;
              *row++ = (ih >= 0 && ih < h && iw >= 0 && iw < w)
                           ? plane[ih * w + iw]
                           : 0.0;
            }
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-add cols back into an (N, C, H, W) image.
Tensor col2im(const Tensor& cols, const std::vector<int>& x_shape, int kernel,
              int stride, int pad, int ho, int wo) {
  const int n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3];
  const int ckk = c * kernel * kernel;
  Tensor x(x_shape);
  const double* in = cols.data();
  for (int ib = 0; ib < n; ++ib) {
    double* img = x.data() + static_cast<int64_t>(ib) * c * h * w;
    for (int oh = 0; oh < ho; ++oh) {
      for (int ow = 0; ow < wo; ++ow) {
        const double* row =
            in + (static_cast<int64_t>(ib) * ho * wo + oh * wo + ow) * ckk;
        for (int ic = 0; ic < c; ++ic) {
          double* plane = img + static_cast<int64_t>(ic) * h * w;
          for (int kh = 0; kh < kernel; ++kh) {
            const int ih = oh * stride - pad + kh;
            for (int kw = 0; kw < kernel; ++kw) {
              const int iw = ow * stride - pad + kw;
              if (ih >= 0 && ih < h && iw >= 0 && iw < w) {
                plane[ih * w + iw] += row[(ic * kernel + kh) * kernel + kw];
              }
            }
          }
        }
      }
    }
  }
  return x;
}

// (N, C, H, W) -> (N*H*W, C) channels-last matrix.
Tensor to_channels_last(const Tensor& x) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor m({n * h * w, c});
  for (int in = 0; in < n; ++in) {
    for (int ic = 0; ic < c; ++ic) {
      const double* plane =
          x.data() + (static_cast<int64_t>(in) * c + ic) * h * w;
      double* out = m.data() + static_cast<int64_t>(in) * h * w * c + ic;
      for (int i = 0; i < h * w; ++i) out[static_cast<int64_t>(i) * c] = plane[i];
    }
  }
  return m;
}

// (N*H*W, C) channels-last matrix -> (N, C, H, W).
Tensor from_channels_last(const Tensor& m, int n, int c, int h, int w) {
  Tensor x({n, c, h, w});
  for (int in = 0; in < n; ++in) {
    for (int ic = 0; ic < c; ++ic) {
      double* plane = x.data() + (static_cast<int64_t>(in) * c + ic) * h * w;
      const double* src = m.data() + static_cast<int64_t>(in) * h * w * c + ic;
      for (int i = 0; i < h * w; ++i) plane[i] = src[static_cast<int64_t>(i) * c];
    }
  }
  return x;
}

void fill_normal(Tensor& t, Rng& rng, double stddev) {
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
}

struct UpsampleTap {
  int lo, hi;
  double w_lo, w_hi;
};

// Half-pixel-center source coordinates for factor-2 upsampling.
std::vector<UpsampleTap> upsample_taps(int in_dim) {
  std::vector<UpsampleTap> taps(static_cast<std::size_t>(in_dim) * 2);
  for (int i = 0; i < in_dim * 2; ++i) {
    const double src = (i + 0.5) / 2.0 - 0.5;
    int lo = static_cast<int>(std::floor(src));
    const double t = src - lo;
    int hi = lo + 1;
    lo = std::max(0, std::min(lo, in_dim - 1));
    hi = std::max(0, std::min(hi, in_dim - 1));
    taps[static_cast<std::size_t>(i)] = {lo, hi, 1.0 - t, t};
  }
  return taps;
}

}  // namespace

int64_t parameter_count(const std::vector<ParamRef>& params, bool trainable_only) {
  int64_t n = 0;
  for (const ParamRef& p : params) {
    if (!trainable_only || p.trainable) n += p.value->numel();
  }
  return n;
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad)
    : in_ch(in_ch), out_ch(out_ch), kernel(kernel), stride(stride), pad(pad),
      weight({out_ch, in_ch * kernel * kernel}),
      bias({out_ch}),
      weight_grad({out_ch, in_ch * kernel * kernel}),
      bias_grad({out_ch}) {}

void Conv2d::init(Rng& rng, double stddev) {
  fill_normal(weight, rng, stddev);
  bias.fill(0.0);
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.ndim() != 4 || x.dim(1) != in_ch) {
    throw InvalidInputError("Conv2d: input shape mismatch");
  }
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int ho = conv_out_dim(h, kernel, stride, pad);
  const int wo = conv_out_dim(w, kernel, stride, pad);
  x_shape_ = x.shape();
  cols_ = im2col(x, kernel, stride, pad, ho, wo);

  const int rows = n * ho * wo;
  const int ckk = in_ch * kernel * kernel;
  Tensor y_mat({rows, out_ch});
  {
    ConstMapMat cols(cols_.data(), rows, ckk);
    ConstMapMat wmat(weight.data(), out_ch, ckk);
    MapMat out(y_mat.data(), rows, out_ch);
    out.noalias() = cols * wmat.transpose();
  }
  Tensor y({n, out_ch, ho, wo});
  for (int in = 0; in < n; ++in) {
    for (int oc = 0; oc < out_ch; ++oc) {
      const double b = bias.at(oc);
      double* plane = y.data() + (static_cast<int64_t>(in) * out_ch + oc) * ho * wo;
      const double* src = y_mat.data() + static_cast<int64_t>(in) * ho * wo * out_ch + oc;
      for (int i = 0; i < ho * wo; ++i) {
        plane[i] = src[static_cast<int64_t>(i) * out_ch] + b;
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy, bool param_grads) {
  const int n = x_shape_[0], h = x_shape_[2], w = x_shape_[3];
  const int ho = dy.dim(2), wo = dy.dim(3);
  const int rows = n * ho * wo;
  const int ckk = in_ch * kernel * kernel;

  Tensor dy_mat = to_channels_last(dy);  // (rows, out_ch)
  if (param_grads) {
    ConstMapMat dym(dy_mat.data(), rows, out_ch);
    ConstMapMat cols(cols_.data(), rows, ckk);
    MapMat dw(weight_grad.data(), out_ch, ckk);
    dw.noalias() += dym.transpose() * cols;
    for (int oc = 0; oc < out_ch; ++oc) {
      double acc = 0.0;
      const double* src = dy_mat.data() + oc;
      for (int r = 0; r < rows; ++r) acc += src[static_cast<int64_t>(r) * out_ch];
      bias_grad.at(oc) += acc;
    }
  }

  Tensor dcols({rows, ckk});
  {
    ConstMapMat dym(dy_mat.data(), rows, out_ch);
    ConstMapMat wmat(weight.data(), out_ch, ckk);
    MapMat dc(dcols.data(), rows, ckk);
    dc.noalias() = dym * wmat;
  }
  return col2im(dcols, x_shape_, kernel, stride, pad, ho, wo);
}

void Conv2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &weight_grad, true});
  out.push_back({prefix + ".bias", &bias, &bias_grad, true});
}

// ---------------------------------------------------------------------------
// ConvTranspose2d
// ---------------------------------------------------------------------------

ConvTranspose2d::ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride,
                                 int pad)
    : in_ch(in_ch), out_ch(out_ch), kernel(kernel), stride(stride), pad(pad),
      weight({in_ch, out_ch * kernel * kernel}),
      bias({out_ch}),
      weight_grad({in_ch, out_ch * kernel * kernel}),
      bias_grad({out_ch}) {}

void ConvTranspose2d::init(Rng& rng, double stddev) {
  fill_normal(weight, rng, stddev);
  bias.fill(0.0);
}

Tensor ConvTranspose2d::forward(const Tensor& x) {
  if (x.ndim() != 4 || x.dim(1) != in_ch) {
    throw InvalidInputError("ConvTranspose2d: input shape mismatch");
  }
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int ho = (h - 1) * stride - 2 * pad + kernel;
  const int wo = (w - 1) * stride - 2 * pad + kernel;
  x_shape_ = x.shape();
  x_mat_ = to_channels_last(x);  // (N*H*W, in_ch)

  const int rows = n * h * w;
  const int okk = out_ch * kernel * kernel;
  Tensor prod({rows, okk});
  {
    ConstMapMat xm(x_mat_.data(), rows, in_ch);
    ConstMapMat wm(weight.data(), in_ch, okk);
    MapMat pm(prod.data(), rows, okk);
    pm.noalias() = xm * wm;
  }
  // The product rows are "columns" of the adjoint conv whose input is the
  // tconv output; scatter them with col2im over the output image.
  Tensor y = col2im(prod, {n, out_ch, ho, wo}, kernel, stride, pad, h, w);
  for (int in = 0; in < n; ++in) {
    for (int oc = 0; oc < out_ch; ++oc) {
      double* plane = y.data() + (static_cast<int64_t>(in) * out_ch + oc) * ho * wo;
      const double b = bias.at(oc);
      for (int i = 0; i < ho * wo; ++i) plane[i] += b;
    }
  }
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& dy, bool param_grads) {
  const int n = x_shape_[0], h = x_shape_[2], w = x_shape_[3];
  const int rows = n * h * w;
  const int okk = out_ch * kernel * kernel;

  Tensor dy_cols = im2col(dy, kernel, stride, pad, h, w);  // (rows, okk)
  if (param_grads) {
    ConstMapMat xm(x_mat_.data(), rows, in_ch);
    ConstMapMat dyc(dy_cols.data(), rows, okk);
    MapMat dw(weight_grad.data(), in_ch, okk);
    dw.noalias() += xm.transpose() * dyc;
    for (int oc = 0; oc < out_ch; ++oc) {
      double acc = 0.0;
      const double* plane = dy.data();
      const int hw = dy.dim(2) * dy.dim(3);
      for (int in = 0; in < n; ++in) {
        const double* p = plane + (static_cast<int64_t>(in) * out_ch + oc) * hw;
        for (int i = 0; i < hw; ++i) acc += p[i];
      }
      bias_grad.at(oc) += acc;
    }
  }

  Tensor dx_mat({rows, in_ch});
  {
    ConstMapMat dyc(dy_cols.data(), rows, okk);
    ConstMapMat wm(weight.data(), in_ch, okk);
    MapMat dxm(dx_mat.data(), rows, in_ch);
    dxm.noalias() = dyc * wm.transpose();
  }
  return from_channels_last(dx_mat, n, in_ch, h, w);
}

void ConvTranspose2d::collect_params(const std::string& prefix,
                                     std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &weight_grad, true});
  out.push_back({prefix + ".bias", &bias, &bias_grad, true});
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear::Linear(int in_features, int out_features)
    : in_features(in_features), out_features(out_features),
      weight({out_features, in_features}),
      bias({out_features}),
      weight_grad({out_features, in_features}),
      bias_grad({out_features}) {}

void Linear::init(Rng& rng, double stddev) {
  fill_normal(weight, rng, stddev);
  bias.fill(0.0);
}

Tensor Linear::forward(const Tensor& x) {
  if (x.ndim() != 2 || x.dim(1) != in_features) {
    throw InvalidInputError("Linear: input shape mismatch");
  }
  x_ = x;
  const int n = x.dim(0);
  Tensor y({n, out_features});
  ConstMapMat xm(x.data(), n, in_features);
  ConstMapMat wm(weight.data(), out_features, in_features);
  MapMat ym(y.data(), n, out_features);
  ym.noalias() = xm * wm.transpose();
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < out_features; ++o) y.at(i, o) += bias.at(o);
  }
  return y;
}

Tensor Linear::backward(const Tensor& dy, bool param_grads) {
  const int n = x_.dim(0);
  if (param_grads) {
    ConstMapMat dym(dy.data(), n, out_features);
    ConstMapMat xm(x_.data(), n, in_features);
    MapMat dwm(weight_grad.data(), out_features, in_features);
    dwm.noalias() += dym.transpose() * xm;
    for (int o = 0; o < out_features; ++o) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += dy.at(i, o);
      bias_grad.at(o) += acc;
    }
  }
  Tensor dx({n, in_features});
  ConstMapMat dym(dy.data(), n, out_features);
  ConstMapMat wm(weight.data(), out_features, in_features);
  MapMat dxm(dx.data(), n, in_features);
  dxm.noalias() = dym * wm;
  return dx;
}

void Linear::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &weight_grad, true});
  out.push_back({prefix + ".bias", &bias, &bias_grad, true});
}

// ---------------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------------

BatchNorm2d::BatchNorm2d(int channels, double eps, double momentum)
    : channels(channels), eps(eps), momentum(momentum),
      gamma(Tensor::filled({channels}, 1.0)),
      beta({channels}),
      gamma_grad({channels}),
      beta_grad({channels}),
      running_mean({channels}),
      running_var(Tensor::filled({channels}, 1.0)) {}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  if (x.ndim() != 4 || x.dim(1) != channels) {
    throw InvalidInputError("BatchNorm2d: input shape mismatch");
  }
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int64_t m = static_cast<int64_t>(n) * h * w;
  train_mode_ = train;
  xhat_ = Tensor(x.shape());
  inv_std_.assign(static_cast<std::size_t>(channels), 0.0);
  Tensor y(x.shape());

  for (int c = 0; c < channels; ++c) {
    double mean, var;
    if (train) {
      double sum = 0.0, sq = 0.0;
      for (int in = 0; in < n; ++in) {
        const double* plane = x.data() + (static_cast<int64_t>(in) * channels + c) * h * w;
        for (int i = 0; i < h * w; ++i) {
          sum += plane[i];
          sq += plane[i] * plane[i];
        }
      }
      mean = sum / static_cast<double>(m);
      var = sq / static_cast<double>(m) - mean * mean;
      var = std::max(var, 0.0);
      running_mean.at(c) = (1.0 - momentum) * running_mean.at(c) + momentum * mean;
      running_var.at(c) = (1.0 - momentum) * running_var.at(c) + momentum * var;
    } else {
      mean = running_mean.at(c);
      var = running_var.at(c);
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std_[static_cast<std::size_t>(c)] = inv;
    const double g = gamma.at(c), b = beta.at(c);
    for (int in = 0; in < n; ++in) {
      const int64_t off = (static_cast<int64_t>(in) * channels + c) * h * w;
      const double* xp = x.data() + off;
      double* hp = xhat_.data() + off;
      double* yp = y.data() + off;
      for (int i = 0; i < h * w; ++i) {
        hp[i] = (xp[i] - mean) * inv;
        yp[i] = g * hp[i] + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy, bool param_grads) {
  const int n = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
  const int64_t m = static_cast<int64_t>(n) * h * w;
  Tensor dx(dy.shape());

  for (int c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int in = 0; in < n; ++in) {
      const int64_t off = (static_cast<int64_t>(in) * channels + c) * h * w;
      const double* dp = dy.data() + off;
      const double* hp = xhat_.data() + off;
      for (int i = 0; i < h * w; ++i) {
        sum_dy += dp[i];
        sum_dy_xhat += dp[i] * hp[i];
      }
    }
    if (param_grads) {
      gamma_grad.at(c) += sum_dy_xhat;
      beta_grad.at(c) += sum_dy;
    }
    const double g = gamma.at(c);
    const double inv = inv_std_[static_cast<std::size_t>(c)];
    if (train_mode_) {
      const double mean_dy = sum_dy / static_cast<double>(m);
      const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(m);
      for (int in = 0; in < n; ++in) {
        const int64_t off = (static_cast<int64_t>(in) * channels + c) * h * w;
        const double* dp = dy.data() + off;
        const double* hp = xhat_.data() + off;
        double* xp = dx.data() + off;
        for (int i = 0; i < h * w; ++i) {
          xp[i] = g * inv * (dp[i] - mean_dy - hp[i] * mean_dy_xhat);
        }
      }
    } else {
      for (int in = 0; in < n; ++in) {
        const int64_t off = (static_cast<int64_t>(in) * channels + c) * h * w;
        const double* dp = dy.data() + off;
        double* xp = dx.data() + off;
        for (int i = 0; i < h * w; ++i) xp[i] = g * inv * dp[i];
      }
    }
  }
  return dx;
}

void BatchNorm2d::collect_params(const std::string& prefix,
                                 std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &gamma, &gamma_grad, true});
  out.push_back({prefix + ".beta", &beta, &beta_grad, true});
  out.push_back({prefix + ".running_mean", &running_mean, nullptr, false});
  out.push_back({prefix + ".running_var", &running_var, nullptr, false});
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor LeakyReLU::forward(const Tensor& x) {
  x_ = x;
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  }
  return y;
}

Tensor LeakyReLU::backward(const Tensor& dy) const {
  Tensor dx(dy.shape());
  for (int64_t i = 0; i < dy.numel(); ++i) {
    dx[i] = x_[i] > 0.0 ? dy[i] : slope * dy[i];
  }
  return dx;
}

Tensor Tanh::forward(const Tensor& x) {
  y_ = Tensor(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y_[i] = std::tanh(x[i]);
  return y_;
}

Tensor Tanh::backward(const Tensor& dy) const {
  Tensor dx(dy.shape());
  for (int64_t i = 0; i < dy.numel(); ++i) {
    dx[i] = dy[i] * (1.0 - y_[i] * y_[i]);
  }
  return dx;
}

Tensor Dropout::forward(const Tensor& x, bool train, Rng* rng) {
  if (!train || p <= 0.0) {
    identity_ = true;
    return x;
  }
  if (rng == nullptr) {
    throw InvalidInputError("Dropout in train mode requires an RNG");
  }
  identity_ = false;
  mask_ = Tensor(x.shape());
  const double keep = 1.0 - p;
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double m = rng->uniform() < keep ? 1.0 / keep : 0.0;
    mask_[i] = m;
    y[i] = x[i] * m;
  }
  return y;
}

Tensor Dropout::backward(const Tensor& dy) const {
  if (identity_) return dy;
  Tensor dx(dy.shape());
  for (int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * mask_[i];
  return dx;
}

// ---------------------------------------------------------------------------
// BilinearUpsample2x
// ---------------------------------------------------------------------------

Tensor BilinearUpsample2x::forward(const Tensor& x) {
  x_shape_ = x.shape();
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto hts = upsample_taps(h);
  const auto wts = upsample_taps(w);
  Tensor y({n, c, 2 * h, 2 * w});
  for (int in = 0; in < n; ++in) {
    for (int ic = 0; ic < c; ++ic) {
      const double* src = x.data() + (static_cast<int64_t>(in) * c + ic) * h * w;
      double* dst = y.data() + (static_cast<int64_t>(in) * c + ic) * 4 * h * w;
      for (int oh = 0; oh < 2 * h; ++oh) {
        const auto& th = hts[static_cast<std::size_t>(oh)];
        for (int ow = 0; ow < 2 * w; ++ow) {
          const auto& tw = wts[static_cast<std::size_t>(ow)];
          dst[oh * 2 * w + ow] =
              th.w_lo * (tw.w_lo * src[th.lo * w + tw.lo] +
                         tw.w_hi * src[th.lo * w + tw.hi]) +
              th.w_hi * (tw.w_lo * src[th.hi * w + tw.lo] +
                         tw.w_hi * src[th.hi * w + tw.hi]);
        }
      }
    }
  }
  return y;
}

Tensor BilinearUpsample2x::backward(const Tensor& dy) const {
  const int n = x_shape_[0], c = x_shape_[1], h = x_shape_[2], w = x_shape_[3];
  const auto hts = upsample_taps(h);
  const auto wts = upsample_taps(w);
  Tensor dx(x_shape_);
  for (int in = 0; in < n; ++in) {
    for (int ic = 0; ic < c; ++ic) {
      double* dst = dx.data() + (static_cast<int64_t>(in) * c + ic) * h * w;
      const double* src = dy.data() + (static_cast<int64_t>(in) * c + ic) * 4 * h * w;
      for (int oh = 0; oh < 2 * h; ++oh) {
        const auto& th = hts[static_cast<std::size_t>(oh)];
        for (int ow = 0; ow < 2 * w; ++ow) {
          const auto& tw = wts[static_cast<std::size_t>(ow)];
          const double g = src[oh * 2 * w + ow];
          dst[th.lo * w + tw.lo] += th.w_lo * tw.w_lo * g;
          dst[th.lo * w + tw.hi] += th.w_lo * tw.w_hi * g;
          dst[th.hi * w + tw.lo] += th.w_hi * tw.w_lo * g;
          dst[th.hi * w + tw.hi] += th.w_hi * tw.w_hi * g;
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// SoftmaxChannel
// ---------------------------------------------------------------------------

Tensor SoftmaxChannel::forward(const Tensor& logits) {
  const int n = logits.dim(0), k = logits.dim(1), h = logits.dim(2),
            w = logits.dim(3);
  probs_ = Tensor(logits.shape());
  for (int in = 0; in < n; ++in) {
    for (int ih = 0; ih < h; ++ih) {
      for (int iw = 0; iw < w; ++iw) {
        double mx = logits.at(in, 0, ih, iw);
        for (int ik = 1; ik < k; ++ik) {
          mx = std::max(mx, logits.at(in, ik, ih, iw));
        }
        double denom = 0.0;
        for (int ik = 0; ik < k; ++ik) {
          denom += std::exp(logits.at(in, ik, ih, iw) - mx);
        }
        const double log_denom = std::log(denom);
        for (int ik = 0; ik < k; ++ik) {
          probs_.at(in, ik, ih, iw) =
              std::exp(logits.at(in, ik, ih, iw) - mx - log_denom);
        }
      }
    }
  }
  return probs_;
}

Tensor SoftmaxChannel::backward(const Tensor& dprobs) const {
  const int n = probs_.dim(0), k = probs_.dim(1), h = probs_.dim(2),
            w = probs_.dim(3);
  Tensor dz(probs_.shape());
  for (int in = 0; in < n; ++in) {
    for (int ih = 0; ih < h; ++ih) {
      for (int iw = 0; iw < w; ++iw) {
        double dot = 0.0;
        for (int ik = 0; ik < k; ++ik) {
          dot += dprobs.at(in, ik, ih, iw) * probs_.at(in, ik, ih, iw);
        }
        for (int ik = 0; ik < k; ++ik) {
          dz.at(in, ik, ih, iw) =
              probs_.at(in, ik, ih, iw) * (dprobs.at(in, ik, ih, iw) - dot);
        }
      }
    }
  }
  return dz;
}

}  // namespace dfseg::nn
