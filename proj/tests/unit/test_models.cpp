// SPDX-License-Identifier: Apache-2.0
#include "dfseg/models.hpp"

#include <filesystem>

#include <unistd.h>

#include <doctest.h>

#include "dfseg/common.hpp"
#include "dfseg/losses.hpp"
#include "dfseg/shapesdata.hpp"
#include "dfseg/training.hpp"
#include "test_util.hpp"

using namespace dfseg;
using dfseg::testutil::compare_grads;
using dfseg::testutil::finite_difference_grad;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

ModelConfig tiny_config(ModelKind kind) {
  ModelConfig cfg = default_model_config(kind);
  cfg.width = 4;
  cfg.image_h = cfg.image_w = 8;
  cfg.num_classes = 4;
  cfg.latent_dim = 8;
  cfg.seed = 99;
  return cfg;
}

std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("dfseg_models_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("generator output contract: shape, range, determinism, variety") {
  ModelConfig cfg = default_model_config(ModelKind::generator);
  cfg.width = 8;
  cfg.seed = 7;
  Generator gen(cfg);
  Tensor z = random_tensor({4, 64}, 1);
  Tensor images = gen.forward(z);
  CHECK(images.shape() == std::vector<int>{4, 3, 32, 32});
  CHECK(images.max_value() <= 1.0);
  CHECK(images.min_value() >= -1.0);

  Tensor again = gen.forward(z);
  CHECK(images.max_abs_diff(again) == 0.0);

  // Fresh i.i.d. latent batches should essentially never collide.
  ModelConfig small = tiny_config(ModelKind::generator);
  Generator tiny(small);
  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor z1({2, small.latent_dim}), z2({2, small.latent_dim});
    for (int64_t i = 0; i < z1.numel(); ++i) z1[i] = rng.normal();
    for (int64_t i = 0; i < z2.numel(); ++i) z2[i] = rng.normal();
    CHECK(tiny.forward(z1).max_abs_diff(tiny.forward(z2)) > 1e-6);
  }

  Tensor bad({2, 17});
  CHECK_THROWS_AS(gen.forward(bad), InvalidInputError);
}

TEST_CASE("discriminator logits: shape, per-sample independence, input gradient") {
  ModelConfig cfg = default_model_config(ModelKind::discriminator);
  cfg.width = 4;
  cfg.seed = 21;
  Discriminator disc(cfg);
  Tensor x = random_tensor({4, 3, 32, 32}, 3, 0.5);
  Tensor logits = disc.forward(x);
  CHECK(logits.shape() == std::vector<int>{4});
  CHECK(logits.all_finite());

  // Duplicate image in the batch -> identical logits.
  Tensor dup = x;
  const int64_t per = 3 * 32 * 32;
  std::copy(x.data(), x.data() + per, dup.data() + 3 * per);
  Tensor dup_logits = disc.forward(dup);
  CHECK(dup_logits.at(0) == doctest::Approx(dup_logits.at(3)).epsilon(1e-12));

  // Mean-logit input gradient vs central differences on a 1-image batch.
  Tensor x1 = random_tensor({1, 3, 32, 32}, 5, 0.5);
  auto mean_logit = [&disc](const Tensor& probe) {
    Tensor l = disc.forward(probe);
    return l.at(0);
  };
  Tensor numeric = finite_difference_grad(mean_logit, x1, 1e-5);
  disc.forward(x1);
  Tensor analytic = disc.backward(Tensor::filled({1}, 1.0), /*param_grads=*/false);
  auto result = compare_grads(analytic, numeric);
  CHECK(result.checked > 0);
  CHECK(result.worst_rel < 1e-3);

  Tensor bad = random_tensor({1, 3, 16, 16}, 5);
  CHECK_THROWS_AS(disc.forward(bad), InvalidInputError);
}

TEST_CASE("segnet softmax map contract and symmetry at initialization") {
  ModelConfig cfg = default_model_config(ModelKind::teacher_seg);
  cfg.width = 8;
  cfg.num_classes = 6;
  cfg.seed = 31;
  SegNet net(cfg);
  Tensor x = random_tensor({2, 3, 32, 32}, 9, 0.5);
  Tensor probs = net.forward(x);
  CHECK(probs.shape() == std::vector<int>{2, 6, 32, 32});
  validate_softmax_map(probs);  // throws on violation

  // Constant-zero input at freshly initialized parameters (zero biases,
  // eval-mode batch norm) gives a spatially constant softmax map.
  Tensor zeros({1, 3, 32, 32});
  Tensor zmap = net.forward(zeros, /*train=*/false);
  for (int k = 0; k < 6; ++k) {
    const double ref = zmap.at(0, k, 0, 0);
    for (int h = 0; h < 32; ++h) {
      for (int w = 0; w < 32; ++w) {
        CHECK(zmap.at(0, k, h, w) == doctest::Approx(ref).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("segnet weight gradient matches finite differences") {
  ModelConfig cfg = tiny_config(ModelKind::teacher_seg);
  SegNet net(cfg);
  Tensor x = random_tensor({1, 3, 8, 8}, 77, 0.5);

  // Calibrate batch-norm running statistics so eval-mode activations are
  // well scaled (fresh running stats assume unit variance).
  for (int i = 0; i < 5; ++i) net.forward(x, /*train=*/true);

  // KL toward a fixed random target map; unlike entropy at the uniform
  // point, this objective has a healthy gradient at initialization.
  Tensor target_logits = random_tensor({1, 4, 8, 8}, 4242);
  Tensor target_map = testutil::softmax_from_logits(target_logits);

  auto params = net.parameters();
  // Pick the dec3 conv weight tensor.
  nn::ParamRef* target = nullptr;
  for (auto& p : params) {
    if (p.name == "dec3.conv.weight") target = &p;
  }
  REQUIRE(target != nullptr);

  auto loss_fn = [&](const Tensor& probe) {
    SegNet copy = net;
    auto copy_params = copy.parameters();
    for (auto& p : copy_params) {
      if (p.name == "dec3.conv.weight") *p.value = probe;
    }
    return kd_kl_loss(target_map, copy.forward(x, /*train=*/false));
  };
  Tensor numeric = finite_difference_grad(loss_fn, *target->value, 1e-5);

  Tensor ds;
  kd_kl_loss(target_map, net.forward(x, /*train=*/false), &ds);
  zero_grads(net.parameters());
  net.backward(ds);
  auto result = compare_grads(*target->grad, numeric);
  CHECK(result.checked > 0);
  CHECK(result.worst_rel < 1e-3);
}

TEST_CASE("end-to-end differentiability through generator and segmenter") {
  // gradient of entropy_loss(segnet(generator(z))) w.r.t. generator params
  ModelConfig gcfg = tiny_config(ModelKind::generator);
  ModelConfig scfg = tiny_config(ModelKind::teacher_seg);
  Generator gen(gcfg);
  SegNet seg(scfg);
  Tensor z = random_tensor({2, gcfg.latent_dim}, 55);

  // Entropy is flat at the uniform softmax a fresh segmenter emits, so give
  // the segmenter a short supervised pretraining first; the entropy path is
  // only exercised against trained, confident teachers.
  {
    DatasetConfig dcfg;
    dcfg.n_images = 16;
    dcfg.image_h = dcfg.image_w = 8;
    dcfg.num_classes = 4;
    dcfg.class_frequency = {0.8, 0.6, 0.4};
    dcfg.seed = 31;
    const Dataset tiny_set = generate_dataset(dcfg);
    TrainPolicy policy;
    policy.epochs = 20;
    policy.batch_size = 8;
    policy.learning_rate = 0.05;
    policy.lr_decay_factor = 1.0;
    policy.weight_decay = 0.0;
    policy.seed = 8;
    Optimizer opt(policy, seg.parameters());
    BatchStream stream(tiny_set, policy.batch_size, 3, true);
    for (int epoch = 0; epoch < policy.epochs; ++epoch) {
      stream.start_epoch(epoch);
      Batch batch;
      while (stream.next(batch)) {
        std::vector<int> labels;
        for (const LabelMap& m : batch.labels) {
          labels.insert(labels.end(), m.v.begin(), m.v.end());
        }
        Tensor dprobs;
        cross_entropy_loss(seg.forward(batch.images, true), labels, &dprobs);
        zero_grads(seg.parameters());
        seg.backward(dprobs);
        opt.step(policy.learning_rate);
      }
    }
  }
  // Warm the generator's running statistics as well.
  for (int i = 0; i < 5; ++i) gen.forward(z, /*train=*/true);

  auto gen_params = gen.parameters();
  nn::ParamRef* target = nullptr;
  for (auto& p : gen_params) {
    if (p.name == "up3.weight") target = &p;
  }
  REQUIRE(target != nullptr);

  auto loss_fn = [&](const Tensor& probe) {
    Generator gcopy = gen;
    auto gp = gcopy.parameters();
    for (auto& p : gp) {
      if (p.name == "up3.weight") *p.value = probe;
    }
    SegNet scopy = seg;
    return entropy_loss(scopy.forward(gcopy.forward(z), /*train=*/false));
  };
  Tensor numeric = finite_difference_grad(loss_fn, *target->value, 1e-5);

  Tensor images = gen.forward(z);
  Tensor ds;
  entropy_loss(seg.forward(images, /*train=*/false), &ds);
  Tensor dimages = seg.backward(ds, /*param_grads=*/false);
  zero_grads(gen.parameters());
  gen.backward(dimages);
  auto result = compare_grads(*target->grad, numeric);
  CHECK(result.checked > 0);
  CHECK(result.worst_rel < 1e-3);
}

TEST_CASE("init_model determinism and capacity gap") {
  ModelConfig teacher_cfg = default_model_config(ModelKind::teacher_seg);
  teacher_cfg.seed = 1234;
  SegNet t1(teacher_cfg);
  SegNet t2(teacher_cfg);
  CHECK(parameters_hash(t1.parameters()) == parameters_hash(t2.parameters()));

  ModelConfig student_cfg = default_model_config(ModelKind::student_seg);
  SegNet student(student_cfg);
  const int64_t teacher_n = trainable_parameter_count(t1.parameters());
  const int64_t student_n = trainable_parameter_count(student.parameters());
  CHECK(student_n * 4 < teacher_n);

  ModelConfig bad = teacher_cfg;
  bad.image_h = bad.image_w = 30;
  CHECK_THROWS_AS(SegNet{bad}, InvalidConfigError);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  ModelConfig cfg = tiny_config(ModelKind::generator);
  Generator gen(cfg);
  const auto dir = temp_dir("ckpt");
  save_checkpoint(dir / "a", cfg, gen.parameters());

  Generator loaded = load_generator(dir / "a");
  CHECK(parameters_hash(loaded.parameters()) == parameters_hash(gen.parameters()));
  save_checkpoint(dir / "b", loaded.config(), loaded.parameters());

  CHECK(read_file(dir / "a" / "params.bin") == read_file(dir / "b" / "params.bin"));
  CHECK(read_file(dir / "a" / "manifest.json") ==
        read_file(dir / "b" / "manifest.json"));

  // Loading as the wrong kind is rejected.
  CHECK_THROWS_AS(load_segnet(dir / "a"), InvalidConfigError);
  CHECK_THROWS_AS(load_generator(dir / "missing"), MissingDependencyError);

  std::filesystem::remove_all(dir);
}

TEST_CASE("forward passes are deterministic in eval mode") {
  ModelConfig cfg = tiny_config(ModelKind::teacher_seg);
  SegNet net(cfg);
  Tensor x = random_tensor({2, 3, 8, 8}, 3);
  Tensor p1 = net.forward(x, /*train=*/false);
  Tensor p2 = net.forward(x, /*train=*/false);
  CHECK(p1.max_abs_diff(p2) == 0.0);
}
