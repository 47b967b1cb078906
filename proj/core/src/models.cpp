// SPDX-License-Identifier: Apache-2.0
#include "dfseg/models.hpp"

#include <cstring>
#include <nlohmann/json.hpp>

#include "dfseg/common.hpp"

namespace dfseg {

namespace {

using nlohmann::json;

constexpr int kCheckpointFormatVersion = 1;

Tensor reshape(const Tensor& t, std::vector<int> shape) {
  Tensor out(std::move(shape));
  if (out.numel() != t.numel()) {
    throw InvalidInputError("reshape: element count mismatch");
  }
  std::memcpy(out.data(), t.data(), sizeof(double) * static_cast<std::size_t>(t.numel()));
  return out;
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::generator: return "generator";
    case ModelKind::discriminator: return "discriminator";
    case ModelKind::teacher_seg: return "teacher_seg";
    case ModelKind::student_seg: return "student_seg";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "generator") return ModelKind::generator;
  if (s == "discriminator") return ModelKind::discriminator;
  if (s == "teacher_seg") return ModelKind::teacher_seg;
  if (s == "student_seg") return ModelKind::student_seg;
  throw InvalidConfigError("unknown model kind: " + s);
}

void ModelConfig::validate() const {
  if (image_h < 8 || image_w < 8 || image_h % 8 != 0 || image_w % 8 != 0) {
    throw InvalidConfigError("image size must be divisible by 8");
  }
  if (width < 1) throw InvalidConfigError("model width must be >= 1");
  if (kind == ModelKind::teacher_seg || kind == ModelKind::student_seg) {
    if (num_classes < 2) throw InvalidConfigError("segmenter needs K >= 2");
  }
  if (kind == ModelKind::generator && latent_dim < 1) {
    throw InvalidConfigError("generator needs latent_dim >= 1");
  }
}

ModelConfig default_model_config(ModelKind kind) {
  ModelConfig cfg;
  cfg.kind = kind;
  switch (kind) {
    case ModelKind::teacher_seg: cfg.width = 32; break;
    case ModelKind::student_seg: cfg.width = 8; break;
    case ModelKind::generator:
    case ModelKind::discriminator: cfg.width = 16; break;
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

Generator::Generator(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int w = config_.width;
  base_h_ = config_.image_h / 8;
  base_w_ = config_.image_w / 8;
  proj_ = nn::Linear(config_.latent_dim, 8 * w * base_h_ * base_w_);
  bn0_ = nn::BatchNorm2d(8 * w);
  up1_ = nn::ConvTranspose2d(8 * w, 4 * w, 4, 2, 1);
  bn1_ = nn::BatchNorm2d(4 * w);
  up2_ = nn::ConvTranspose2d(4 * w, 2 * w, 4, 2, 1);
  bn2_ = nn::BatchNorm2d(2 * w);
  up3_ = nn::ConvTranspose2d(2 * w, 3, 4, 2, 1);

  Rng rng(derive_seed(config_.seed, "generator.init"));
  proj_.init(rng);
  up1_.init(rng);
  up2_.init(rng);
  up3_.init(rng);
}

Tensor Generator::forward(const Tensor& z, bool train) {
  if (z.ndim() != 2 || z.dim(1) != config_.latent_dim) {
    throw InvalidInputError("generator: latent dimension mismatch");
  }
  const int n = z.dim(0);
  Tensor h = proj_.forward(z);
  h = reshape(h, {n, 8 * config_.width, base_h_, base_w_});
  h = relu0_.forward(bn0_.forward(h, train));
  h = relu1_.forward(bn1_.forward(up1_.forward(h), train));
  h = relu2_.forward(bn2_.forward(up2_.forward(h), train));
  return tanh_.forward(up3_.forward(h));
}

Tensor Generator::backward(const Tensor& dy, bool param_grads) {
  Tensor g = up3_.backward(tanh_.backward(dy), param_grads);
  g = up2_.backward(bn2_.backward(relu2_.backward(g), param_grads), param_grads);
  g = up1_.backward(bn1_.backward(relu1_.backward(g), param_grads), param_grads);
  g = bn0_.backward(relu0_.backward(g), param_grads);
  g = reshape(g, {g.dim(0), 8 * config_.width * base_h_ * base_w_});
  return proj_.backward(g, param_grads);
}

std::vector<nn::ParamRef> Generator::parameters() {
  std::vector<nn::ParamRef> out;
  proj_.collect_params("proj", out);
  bn0_.collect_params("bn0", out);
  up1_.collect_params("up1", out);
  bn1_.collect_params("bn1", out);
  up2_.collect_params("up2", out);
  bn2_.collect_params("bn2", out);
  up3_.collect_params("up3", out);
  return out;
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

Discriminator::Discriminator(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int w = config_.width;
  c1_ = nn::Conv2d(3, w, 4, 2, 1);
  c2_ = nn::Conv2d(w, 2 * w, 4, 2, 1);
  c3_ = nn::Conv2d(2 * w, 4 * w, 4, 2, 1);
  head_ = nn::Linear(4 * w * (config_.image_h / 8) * (config_.image_w / 8), 1);

  Rng rng(derive_seed(config_.seed, "discriminator.init"));
  c1_.init(rng);
  c2_.init(rng);
  c3_.init(rng);
  head_.init(rng);
}

Tensor Discriminator::forward(const Tensor& x) {
  if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) != config_.image_h ||
      x.dim(3) != config_.image_w) {
    throw InvalidInputError("discriminator: input shape mismatch");
  }
  Tensor h = a1_.forward(c1_.forward(x));
  h = a2_.forward(c2_.forward(h));
  h = a3_.forward(c3_.forward(h));
  feat_shape_ = h.shape();
  const int n = h.dim(0);
  Tensor flat = reshape(h, {n, static_cast<int>(h.numel() / n)});
  Tensor logits = head_.forward(flat);
  return reshape(logits, {n});
}

Tensor Discriminator::backward(const Tensor& dlogits, bool param_grads) {
  const int n = dlogits.dim(0);
  Tensor d = head_.backward(reshape(dlogits, {n, 1}), param_grads);
  d = reshape(d, feat_shape_);
  d = c3_.backward(a3_.backward(d), param_grads);
  d = c2_.backward(a2_.backward(d), param_grads);
  return c1_.backward(a1_.backward(d), param_grads);
}

std::vector<nn::ParamRef> Discriminator::parameters() {
  std::vector<nn::ParamRef> out;
  c1_.collect_params("c1", out);
  c2_.collect_params("c2", out);
  c3_.collect_params("c3", out);
  head_.collect_params("head", out);
  return out;
}

// ---------------------------------------------------------------------------
// SegNet
// ---------------------------------------------------------------------------

Tensor SegNet::ConvBlock::forward(const Tensor& x, bool train) {
  return act.forward(bn.forward(conv.forward(x), train));
}

Tensor SegNet::ConvBlock::backward(const Tensor& dy, bool param_grads) {
  return conv.backward(bn.backward(act.backward(dy), param_grads), param_grads);
}

void SegNet::ConvBlock::collect(const std::string& prefix,
                                std::vector<nn::ParamRef>& out) {
  conv.collect_params(prefix + ".conv", out);
  bn.collect_params(prefix + ".bn", out);
}

SegNet::SegNet(const ModelConfig& config)
    : config_(config), dropout_rng_(derive_seed(config.seed, "segnet.dropout")) {
  config_.validate();
  const int w = config_.width;
  enc1_.conv = nn::Conv2d(3, w, 3, 2, 1);
  enc1_.bn = nn::BatchNorm2d(w);
  enc2_.conv = nn::Conv2d(w, 2 * w, 3, 2, 1);
  enc2_.bn = nn::BatchNorm2d(2 * w);
  enc3_.conv = nn::Conv2d(2 * w, 4 * w, 3, 2, 1);
  enc3_.bn = nn::BatchNorm2d(4 * w);
  dec1_.conv = nn::Conv2d(4 * w, 2 * w, 3, 1, 1);
  dec1_.bn = nn::BatchNorm2d(2 * w);
  dec2_.conv = nn::Conv2d(2 * w, w, 3, 1, 1);
  dec2_.bn = nn::BatchNorm2d(w);
  dec3_.conv = nn::Conv2d(w, w, 3, 1, 1);
  dec3_.bn = nn::BatchNorm2d(w);
  head_ = nn::Conv2d(w, config_.num_classes, 1, 1, 0);

  Rng rng(derive_seed(config_.seed, "segnet.init"));
  enc1_.conv.init(rng);
  enc2_.conv.init(rng);
  enc3_.conv.init(rng);
  dec1_.conv.init(rng);
  dec2_.conv.init(rng);
  dec3_.conv.init(rng);
  head_.init(rng);
}

void SegNet::reseed_dropout(uint64_t seed) { dropout_rng_ = Rng(seed); }

Tensor SegNet::forward(const Tensor& x, bool train) {
  if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) != config_.image_h ||
      x.dim(3) != config_.image_w) {
    throw InvalidInputError("segnet: input shape mismatch");
  }
  Tensor a1 = enc1_.forward(x, train);       // H/2
  Tensor a2 = enc2_.forward(a1, train);      // H/4
  Tensor a3 = enc3_.forward(a2, train);      // H/8
  Tensor d1 = dec1_.forward(u1_.forward(a3), train);  // H/4
  Tensor d2 = dec2_.forward(u2_.forward(d1), train);  // H/2
  d2.add_scaled(a1);  // skip connection
  Tensor d3 = dec3_.forward(u3_.forward(d2), train);  // H
  Tensor dd = dropout_.forward(d3, train, &dropout_rng_);
  Tensor logits = head_.forward(dd);
  return softmax_.forward(logits);
}

Tensor SegNet::backward(const Tensor& dprobs, bool param_grads) {
  Tensor dlogits = softmax_.backward(dprobs);
  Tensor g = dropout_.backward(head_.backward(dlogits, param_grads));
  g = u3_.backward(dec3_.backward(g, param_grads));
  // The skip add sends the same upstream gradient to both dec2 and enc1.
  Tensor skip_grad = g;
  g = u2_.backward(dec2_.backward(g, param_grads));
  g = u1_.backward(dec1_.backward(g, param_grads));
  g = enc3_.backward(g, param_grads);
  g = enc2_.backward(g, param_grads);
  g.add_scaled(skip_grad);
  return enc1_.backward(g, param_grads);
}

std::vector<nn::ParamRef> SegNet::parameters() {
  std::vector<nn::ParamRef> out;
  enc1_.collect("enc1", out);
  enc2_.collect("enc2", out);
  enc3_.collect("enc3", out);
  dec1_.collect("dec1", out);
  dec2_.collect("dec2", out);
  dec3_.collect("dec3", out);
  head_.collect_params("head", out);
  return out;
}

// ---------------------------------------------------------------------------
// Parameter utilities and checkpoints
// ---------------------------------------------------------------------------

int64_t trainable_parameter_count(std::vector<nn::ParamRef> params) {
  return nn::parameter_count(params, /*trainable_only=*/true);
}

void zero_grads(std::vector<nn::ParamRef> params) {
  for (auto& p : params) {
    if (p.grad != nullptr) p.grad->fill(0.0);
  }
}

namespace {

std::vector<unsigned char> serialize_f32(const std::vector<nn::ParamRef>& params) {
  std::size_t total = 0;
  for (const auto& p : params) total += static_cast<std::size_t>(p.value->numel());
  std::vector<unsigned char> bytes;
  bytes.reserve(total * 4);
  for (const auto& p : params) {
    for (int64_t i = 0; i < p.value->numel(); ++i) {
      const float f = static_cast<float>((*p.value)[i]);
      unsigned char buf[4];
      std::memcpy(buf, &f, 4);  // little-endian on all supported targets
      bytes.insert(bytes.end(), buf, buf + 4);
    }
  }
  return bytes;
}

json config_to_json(const ModelConfig& cfg) {
  return json{{"kind", to_string(cfg.kind)},
              {"num_classes", cfg.num_classes},
              {"width", cfg.width},
              {"image_size", {cfg.image_h, cfg.image_w}},
              {"latent_dim", cfg.latent_dim},
              {"seed", cfg.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.kind = model_kind_from_string(j.at("kind").get<std::string>());
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.width = j.at("width").get<int>();
  cfg.image_h = j.at("image_size").at(0).get<int>();
  cfg.image_w = j.at("image_size").at(1).get<int>();
  cfg.latent_dim = j.at("latent_dim").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

}  // namespace

uint64_t parameters_hash(std::vector<nn::ParamRef> params) {
  const auto bytes = serialize_f32(params);
  return fnv1a64(bytes.data(), bytes.size());
}

void save_checkpoint(const std::filesystem::path& dir, const ModelConfig& config,
                     std::vector<nn::ParamRef> params) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["model"] = config_to_json(config);
  json tensors = json::array();
  for (const auto& p : params) {
    tensors.push_back(json{{"name", p.name}, {"shape", p.value->shape()},
                           {"dtype", "f32"}});
  }
  manifest["tensors"] = tensors;
  atomic_write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  const auto bytes = serialize_f32(params);
  atomic_write_file(dir / "params.bin", bytes.data(), bytes.size());
}

ModelConfig load_checkpoint_config(const std::filesystem::path& dir) {
  const std::string text = read_file(dir / "manifest.json");
  json manifest = json::parse(text);
  if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw InvalidConfigError("unsupported checkpoint format version");
  }
  return config_from_json(manifest.at("model"));
}

void load_checkpoint_params(const std::filesystem::path& dir,
                            std::vector<nn::ParamRef> params) {
  const std::string text = read_file(dir / "manifest.json");
  json manifest = json::parse(text);
  const json& tensors = manifest.at("tensors");
  if (tensors.size() != params.size()) {
    throw InvalidConfigError("checkpoint tensor count mismatch");
  }
  const std::string bin = read_file(dir / "params.bin");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& entry = tensors.at(i);
    if (entry.at("name").get<std::string>() != params[i].name) {
      throw InvalidConfigError("checkpoint tensor name mismatch: expected " +
                               params[i].name);
    }
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape != params[i].value->shape()) {
      throw InvalidConfigError("checkpoint tensor shape mismatch: " +
                               params[i].name);
    }
    const std::size_t count = static_cast<std::size_t>(params[i].value->numel());
    if (offset + count * 4 > bin.size()) {
      throw InvalidConfigError("checkpoint params.bin truncated");
    }
    for (std::size_t j = 0; j < count; ++j) {
      float f;
      std::memcpy(&f, bin.data() + offset + j * 4, 4);
      (*params[i].value)[static_cast<int64_t>(j)] = static_cast<double>(f);
    }
    offset += count * 4;
  }
  if (offset != bin.size()) {
    throw InvalidConfigError("checkpoint params.bin has trailing bytes");
  }
}

Generator load_generator(const std::filesystem::path& dir) {
  ModelConfig cfg = load_checkpoint_config(dir);
  if (cfg.kind != ModelKind::generator) {
    throw InvalidConfigError("checkpoint is not a generator: " + dir.string());
  }
  Generator g(cfg);
  load_checkpoint_params(dir, g.parameters());
  return g;
}

Discriminator load_discriminator(const std::filesystem::path& dir) {
  ModelConfig cfg = load_checkpoint_config(dir);
  if (cfg.kind != ModelKind::discriminator) {
    throw InvalidConfigError("checkpoint is not a discriminator: " + dir.string());
  }
  Discriminator d(cfg);
  load_checkpoint_params(dir, d.parameters());
  return d;
}

SegNet load_segnet(const std::filesystem::path& dir) {
  ModelConfig cfg = load_checkpoint_config(dir);
  if (cfg.kind != ModelKind::teacher_seg && cfg.kind != ModelKind::student_seg) {
    throw InvalidConfigError("checkpoint is not a segmenter: " + dir.string());
  }
  SegNet net(cfg);
  load_checkpoint_params(dir, net.parameters());
  return net;
}

}  // namespace dfseg
