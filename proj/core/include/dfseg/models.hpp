// SPDX-License-Identifier: Apache-2.0
//
// Compact fully-convolutional models: a DCGAN-style generator and
// discriminator, and an encoder-decoder segmentation network used for both
// the teacher and the (narrower) student. Parameters are plain tensors;
// forward passes cache activations for the matching backward pass, so a
// model instance must not be shared across threads (copy it instead —
// copies are cheap and independent).
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfseg/nn.hpp"
#include "dfseg/tensor.hpp"

namespace dfseg {

enum class ModelKind { generator, discriminator, teacher_seg, student_seg };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct ModelConfig {
  ModelKind kind = ModelKind::teacher_seg;
  int num_classes = 6;   // segmenters only
  int width = 32;        // base channel count; teacher 32, student 8
  int image_h = 32, image_w = 32;
  int latent_dim = 64;   // generator only
  uint64_t seed = 0;

  /// Throws InvalidConfigError (image size must be divisible by 8, etc).
  void validate() const;
};

ModelConfig default_model_config(ModelKind kind);

/// DCGAN-style generator: seeded linear projection to (8*width) x H/8 x W/8,
/// then three stride-2 transposed-conv stages ending in tanh, so outputs
/// always lie in [-1, 1].
class Generator {
 public:
  explicit Generator(const ModelConfig& config);

  /// z: (N, latent_dim) -> images (N, 3, H, W). Train mode uses batch-norm
  /// batch statistics; eval mode is deterministic given (params, z).
  Tensor forward(const Tensor& z, bool train = false);
  Tensor backward(const Tensor& dy, bool param_grads = true);

  std::vector<nn::ParamRef> parameters();
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  nn::Linear proj_;
  nn::BatchNorm2d bn0_, bn1_, bn2_;
  nn::LeakyReLU relu0_{0.0}, relu1_{0.0}, relu2_{0.0};
  nn::ConvTranspose2d up1_, up2_, up3_;
  nn::Tanh tanh_;
  int base_h_ = 4, base_w_ = 4;
};

/// DCGAN-style discriminator: three stride-2 conv blocks with leaky-ReLU 0.2
/// and a linear head producing one pre-sigmoid logit per image.
class Discriminator {
 public:
  explicit Discriminator(const ModelConfig& config);

  /// x: (N, 3, H, W) -> logits (N).
  Tensor forward(const Tensor& x);
  /// dlogits: (N) -> dL/dx.
  Tensor backward(const Tensor& dlogits, bool param_grads = true);

  std::vector<nn::ParamRef> parameters();
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  nn::Conv2d c1_, c2_, c3_;
  nn::LeakyReLU a1_{0.2}, a2_{0.2}, a3_{0.2};
  nn::Linear head_;
  std::vector<int> feat_shape_;
};

/// Encoder-decoder segmenter: three strided-conv encoder stages, three
/// bilinear-upsample/conv decoder stages with one skip connection, dropout
/// p=0.5 before the 1x1 classifier head, and a channel softmax output.
class SegNet {
 public:
  explicit SegNet(const ModelConfig& config);

  /// x: (N, 3, H, W) -> per-pixel softmax map (N, K, H, W).
  Tensor forward(const Tensor& x, bool train = false);
  /// Chain from dL/dprobs back to dL/dx.
  Tensor backward(const Tensor& dprobs, bool param_grads = true);

  std::vector<nn::ParamRef> parameters();
  const ModelConfig& config() const { return config_; }

  /// Reseeds the dropout mask stream (training runs do this for
  /// reproducibility; eval mode never consumes randomness).
  void reseed_dropout(uint64_t seed);

 private:
  struct ConvBlock {
    nn::Conv2d conv;
    nn::BatchNorm2d bn;
    nn::LeakyReLU act{0.0};
    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& dy, bool param_grads);
    void collect(const std::string& prefix, std::vector<nn::ParamRef>& out);
  };

  ModelConfig config_;
  ConvBlock enc1_, enc2_, enc3_;
  nn::BilinearUpsample2x u1_, u2_, u3_;
  ConvBlock dec1_, dec2_, dec3_;
  nn::Dropout dropout_{0.5};
  nn::Conv2d head_;
  nn::SoftmaxChannel softmax_;
  Rng dropout_rng_{0};
};

/// Trainable-parameter count (segments the teacher/student capacity gap).
int64_t trainable_parameter_count(std::vector<nn::ParamRef> params);

void zero_grads(std::vector<nn::ParamRef> params);

/// Hash of the float32 serialization of all parameters, in registry order.
/// Equals fnv1a64 of the checkpoint's params.bin.
uint64_t parameters_hash(std::vector<nn::ParamRef> params);

/// Checkpoint directory format: manifest.json (format version, model config
/// echo, ordered tensor table) + params.bin (raw little-endian float32 in
/// manifest order). Loading then saving reproduces both files byte-exactly.
void save_checkpoint(const std::filesystem::path& dir, const ModelConfig& config,
                     std::vector<nn::ParamRef> params);
ModelConfig load_checkpoint_config(const std::filesystem::path& dir);
void load_checkpoint_params(const std::filesystem::path& dir,
                            std::vector<nn::ParamRef> params);

Generator load_generator(const std::filesystem::path& dir);
Discriminator load_discriminator(const std::filesystem::path& dir);
SegNet load_segnet(const std::filesystem::path& dir);

}  // namespace dfseg
