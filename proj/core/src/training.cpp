// SPDX-License-Identifier: Apache-2.0
#include "dfseg/training.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "dfseg/common.hpp"
#include "dfseg/evaluation.hpp"

namespace dfseg {

using nlohmann::json;

namespace {

constexpr double kAdamEps = 1e-8;

double elapsed_s(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

void check_finite_loss(double loss, const char* name, int epoch, int step) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite " << name << " at epoch " << (epoch + 1) << " step "
        << step;
    throw NumericalError(msg.str());
  }
}

Tensor sample_latents(Rng& rng, int n, int latent_dim) {
  Tensor z({n, latent_dim});
  for (int64_t i = 0; i < z.numel(); ++i) z[i] = rng.normal();
  return z;
}

Tensor concat_batches(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2), a.dim(3)});
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

}  // namespace

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd_momentum";
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd_momentum") return OptimizerKind::sgd_momentum;
  throw InvalidConfigError("unknown optimizer: " + s);
}

std::string to_string(DiversityVariant variant) {
  return variant == DiversityVariant::weighted ? "weighted" : "plain";
}

DiversityVariant diversity_variant_from_string(const std::string& s) {
  if (s == "plain") return DiversityVariant::plain;
  if (s == "weighted") return DiversityVariant::weighted;
  throw InvalidConfigError("unknown diversity variant: " + s);
}

std::string to_string(DistillSourceKind kind) {
  switch (kind) {
    case DistillSourceKind::proxy: return "proxy";
    case DistillSourceKind::generator: return "generator";
    case DistillSourceKind::mixed: return "mixed";
  }
  return "unknown";
}

DistillSourceKind distill_source_from_string(const std::string& s) {
  if (s == "proxy") return DistillSourceKind::proxy;
  if (s == "generator") return DistillSourceKind::generator;
  if (s == "mixed") return DistillSourceKind::mixed;
  throw InvalidConfigError("unknown distill source: " + s);
}

void TrainPolicy::validate() const {
  if (epochs < 1) throw InvalidConfigError("epochs must be >= 1");
  if (batch_size < 1) throw InvalidConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidConfigError("learning_rate must be > 0");
  if (!(lr_decay_factor > 0.0) || lr_decay_factor > 1.0) {
    throw InvalidConfigError("lr_decay_factor must lie in (0, 1]");
  }
  if (lr_decay_every_n_epochs < 1) {
    throw InvalidConfigError("lr_decay_every_n_epochs must be >= 1");
  }
  if (weight_decay < 0.0) throw InvalidConfigError("weight_decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw InvalidConfigError("momentum must lie in [0, 1)");
  }
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
      adam_beta2 >= 1.0) {
    throw InvalidConfigError("adam betas must lie in [0, 1)");
  }
}

double lr_at_epoch(const TrainPolicy& policy, int epoch) {
  const int drops = epoch / policy.lr_decay_every_n_epochs;
  return policy.learning_rate * std::pow(policy.lr_decay_factor, drops);
}

Optimizer::Optimizer(const TrainPolicy& policy, std::vector<nn::ParamRef> params)
    : policy_(policy), params_(std::move(params)) {
  slot1_.reserve(params_.size());
  slot2_.reserve(params_.size());
  for (const auto& p : params_) {
    slot1_.emplace_back(p.value->shape());
    slot2_.emplace_back(p.value->shape());
  }
}

void Optimizer::step(double lr) {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.trainable || p.grad == nullptr) continue;
    Tensor& w = *p.value;
    const Tensor& g = *p.grad;
    if (policy_.optimizer == OptimizerKind::adam) {
      Tensor& m = slot1_[i];
      Tensor& v = slot2_[i];
      const double b1 = policy_.adam_beta1, b2 = policy_.adam_beta2;
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
      for (int64_t j = 0; j < w.numel(); ++j) {
        const double grad = g[j] + policy_.weight_decay * w[j];
        m[j] = b1 * m[j] + (1.0 - b1) * grad;
        v[j] = b2 * v[j] + (1.0 - b2) * grad * grad;
        w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + kAdamEps);
      }
    } else {
      Tensor& buf = slot1_[i];
      for (int64_t j = 0; j < w.numel(); ++j) {
        const double grad = g[j] + policy_.weight_decay * w[j];
        buf[j] = policy_.momentum * buf[j] + grad;
        w[j] -= lr * buf[j];
      }
    }
  }
}

void MixedBatchSpec::validate() const {
  if (alpha < 0 || beta < 0) {
    throw InvalidConfigError("mixed batch counts must be >= 0");
  }
  if (alpha + beta != n_batch) {
    throw InvalidConfigError("mixed batch spec violates alpha + beta == n_batch");
  }
  if (n_batch < 1) throw InvalidConfigError("mixed batch needs n_batch >= 1");
}

void RunRecord::write_jsonl(const std::filesystem::path& path) const {
  std::ostringstream out;
  for (const EpochStats& e : epochs) {
    json j;
    j["epoch"] = e.epoch;
    j["losses"] = e.losses;
    j["lr"] = e.lr;
    j["wall_time_s"] = e.wall_time_s;
    out << j.dump() << "\n";
  }
  atomic_write_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Teacher training
// ---------------------------------------------------------------------------

TeacherTrainResult train_teacher(const Dataset& dataset, const TrainPolicy& policy,
                                 const ModelConfig& teacher_config,
                                 const std::filesystem::path& artifacts_dir) {
  policy.validate();
  if (dataset.size() == 0) throw InvalidInputError("teacher dataset is empty");

  SegNet teacher(teacher_config);
  teacher.reseed_dropout(derive_seed(policy.seed, "teacher.dropout"));
  Optimizer opt(policy, teacher.parameters());
  BatchStream stream(dataset, policy.batch_size,
                     derive_seed(policy.seed, "teacher.shuffle"),
                     /*with_labels=*/true);

  RunRecord record;
  record.seed = policy.seed;
  for (int epoch = 0; epoch < policy.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(policy, epoch);
    stream.start_epoch(epoch);
    Batch batch;
    double loss_sum = 0.0;
    int steps = 0;
    while (stream.next(batch)) {
      const int n = batch.images.dim(0);
      const int h = batch.images.dim(2), w = batch.images.dim(3);
      std::vector<int> labels;
      labels.reserve(static_cast<std::size_t>(n) * h * w);
      for (const LabelMap& map : batch.labels) {
        for (uint8_t v : map.v) labels.push_back(v);
      }
      const Tensor probs = teacher.forward(batch.images, /*train=*/true);
      Tensor dprobs;
      const double loss = cross_entropy_loss(probs, labels, &dprobs);
      check_finite_loss(loss, "cross-entropy loss", epoch, steps);
      zero_grads(teacher.parameters());
      teacher.backward(dprobs);
      opt.step(lr);
      loss_sum += loss;
      ++steps;
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.losses["cross_entropy"] = loss_sum / steps;
    stats.lr = lr;
    stats.wall_time_s = elapsed_s(start);
    record.epochs.push_back(stats);
  }

  if (!artifacts_dir.empty()) {
    const auto ckpt = artifacts_dir / "checkpoint";
    save_checkpoint(ckpt, teacher.config(), teacher.parameters());
    record.final_checkpoint = ckpt.string();
    record.write_jsonl(artifacts_dir / "runlog.jsonl");
  }
  return TeacherTrainResult{std::move(teacher), std::move(record)};
}

// ---------------------------------------------------------------------------
// GAN / DeGAN training
// ---------------------------------------------------------------------------

GanTrainResult train_gan(const UnlabeledDataset& proxy,
                         const ModelConfig& generator_config,
                         const ModelConfig& discriminator_config,
                         const TrainPolicy& policy,
                         const std::optional<DeGANConfig>& degan,
                         SegNet* teacher, const GanOptions& options,
                         const std::filesystem::path& artifacts_dir) {
  policy.validate();
  if (proxy.images.empty()) throw InvalidInputError("proxy dataset is empty");
  const bool shaped = degan.has_value() && (degan->weights.lambda_d > 0.0 ||
                                            degan->weights.lambda_e > 0.0);
  if (shaped && teacher == nullptr) {
    throw InvalidConfigError(
        "entropy/diversity losses need a teacher (lambda_e or lambda_d > 0)");
  }

  Generator generator(generator_config);
  Discriminator discriminator(discriminator_config);
  Optimizer opt_g(policy, generator.parameters());
  Optimizer opt_d(policy, discriminator.parameters());
  UnlabeledBatchStream stream(proxy, policy.batch_size,
                              derive_seed(policy.seed, "gan.shuffle"));
  Rng latent_rng(derive_seed(policy.seed, "gan.latents"));
  const LossWeights weights =
      degan.has_value() ? degan->weights : LossWeights{0.0, 0.0};

  RunRecord record;
  record.seed = policy.seed;
  for (int epoch = 0; epoch < policy.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(policy, epoch);
    stream.start_epoch(epoch);
    Tensor real;
    double sum_d = 0.0, sum_gan = 0.0, sum_ent = 0.0, sum_div = 0.0,
           sum_total = 0.0;
    int steps = 0;
    while (stream.next(real)) {
      const int n = real.dim(0);

      // Discriminator step on real + detached fakes.
      Tensor z_d = sample_latents(latent_rng, n, generator_config.latent_dim);
      const Tensor fake_d = generator.forward(z_d, /*train=*/true);
      const Tensor logits = discriminator.forward(concat_batches(real, fake_d));
      DiscriminatorLogits split;
      split.real = Tensor({n});
      split.fake = Tensor({n});
      for (int i = 0; i < n; ++i) {
        split.real.at(i) = logits.at(i);
        split.fake.at(i) = logits.at(n + i);
      }
      Tensor d_real, d_fake;
      const double loss_d =
          adversarial_discriminator_loss(split, &d_real, &d_fake);
      check_finite_loss(loss_d, "discriminator loss", epoch, steps);
      Tensor dlogits({2 * n});
      for (int i = 0; i < n; ++i) {
        dlogits.at(i) = d_real.at(i);
        dlogits.at(n + i) = d_fake.at(i);
      }
      zero_grads(discriminator.parameters());
      discriminator.backward(dlogits);
      opt_d.step(lr);
      if (options.on_step) options.on_step({'D', epoch, steps});

      // Generator step on a fresh latent batch.
      Tensor z_g = sample_latents(latent_rng, n, generator_config.latent_dim);
      const Tensor fake = generator.forward(z_g, /*train=*/true);
      const Tensor fake_logits = discriminator.forward(fake);
      Tensor dfake_logits;
      const double loss_gan =
          adversarial_generator_loss(fake_logits, &dfake_logits);
      check_finite_loss(loss_gan, "generator adversarial loss", epoch, steps);
      Tensor dimage =
          discriminator.backward(dfake_logits, /*param_grads=*/false);

      double loss_ent = 0.0, loss_div = 0.0;
      if (shaped) {
        const Tensor s = teacher->forward(fake, /*train=*/false);
        Tensor ds_total(s.shape());
        if (weights.lambda_e > 0.0) {
          Tensor ds_ent;
          loss_ent = entropy_loss(s, &ds_ent);
          ds_total.add_scaled(ds_ent, weights.lambda_e);
        } else {
          loss_ent = entropy_loss(s);
        }
        const Tensor w = batch_class_distribution(s);
        Tensor dw;
        loss_div = degan->variant == DiversityVariant::weighted
                       ? weighted_diversity_loss(w, &dw)
                       : diversity_loss(w, &dw);
        if (weights.lambda_d > 0.0) {
          const Tensor ds_div = batch_class_distribution_backward(s.shape(), dw);
          ds_total.add_scaled(ds_div, weights.lambda_d);
        }
        check_finite_loss(loss_ent, "entropy loss", epoch, steps);
        check_finite_loss(loss_div, "diversity loss", epoch, steps);
        const Tensor dimage_teacher =
            teacher->backward(ds_total, /*param_grads=*/false);
        dimage.add_scaled(dimage_teacher);
      }
      const double loss_total =
          generator_total_loss(loss_gan, loss_div, loss_ent, weights);
      zero_grads(generator.parameters());
      generator.backward(dimage);
      opt_g.step(lr);
      if (options.on_step) options.on_step({'G', epoch, steps});

      sum_d += loss_d;
      sum_gan += loss_gan;
      sum_ent += shaped ? loss_ent : 0.0;
      sum_div += shaped ? loss_div : 0.0;
      sum_total += loss_total;
      ++steps;
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.losses["d_adversarial"] = sum_d / steps;
    stats.losses["g_adversarial"] = sum_gan / steps;
    stats.losses["g_entropy"] = sum_ent / steps;
    stats.losses["g_diversity"] = sum_div / steps;
    stats.losses["g_total"] = sum_total / steps;
    stats.lr = lr;
    stats.wall_time_s = elapsed_s(start);
    record.epochs.push_back(stats);
  }

  if (!artifacts_dir.empty()) {
    const auto gen_ckpt = artifacts_dir / "generator";
    save_checkpoint(gen_ckpt, generator.config(), generator.parameters());
    save_checkpoint(artifacts_dir / "discriminator", discriminator.config(),
                    discriminator.parameters());
    record.final_checkpoint = gen_ckpt.string();
    record.write_jsonl(artifacts_dir / "runlog.jsonl");
  }
  return GanTrainResult{std::move(generator), std::move(discriminator),
                        std::move(record)};
}

// ---------------------------------------------------------------------------
// Mixed batches and distillation
// ---------------------------------------------------------------------------

Tensor make_mixed_batch(const Tensor& proxy_images, Generator& generator,
                        const MixedBatchSpec& spec, uint64_t z_seed) {
  spec.validate();
  if (proxy_images.ndim() != 4 || proxy_images.dim(0) < spec.alpha) {
    throw InvalidInputError("mixed batch needs at least alpha proxy images");
  }
  const int c = spec.alpha > 0 ? proxy_images.dim(1) : 3;
  const int h = spec.alpha > 0 ? proxy_images.dim(2) : generator.config().image_h;
  const int w = spec.alpha > 0 ? proxy_images.dim(3) : generator.config().image_w;
  if (spec.alpha > 0 && spec.beta > 0 &&
      (generator.config().image_h != h || generator.config().image_w != w)) {
    throw InvalidInputError("generator/proxy image sizes differ in mixed batch");
  }
  Tensor out({spec.n_batch, c, h, w});
  const int64_t per = static_cast<int64_t>(c) * h * w;
  for (int i = 0; i < spec.alpha; ++i) {
    std::copy(proxy_images.data() + i * per, proxy_images.data() + (i + 1) * per,
              out.data() + i * per);
  }
  if (spec.beta > 0) {
    Rng rng(derive_seed(z_seed, "mixed.latents"));
    const Tensor z = sample_latents(rng, spec.beta, generator.config().latent_dim);
    const Tensor generated = generator.forward(z, /*train=*/false);
    std::copy(generated.data(), generated.data() + generated.numel(),
              out.data() + static_cast<int64_t>(spec.alpha) * per);
  }
  // Deterministic shuffle of the combined batch.
  Rng shuffle_rng(derive_seed(z_seed, "mixed.shuffle"));
  const std::vector<int> perm = shuffle_rng.permutation(spec.n_batch);
  Tensor shuffled(out.shape());
  for (int i = 0; i < spec.n_batch; ++i) {
    std::copy(out.data() + perm[static_cast<std::size_t>(i)] * per,
              out.data() + (perm[static_cast<std::size_t>(i)] + 1) * per,
              shuffled.data() + i * per);
  }
  return shuffled;
}

DistillResult distill(SegNet& teacher, const ModelConfig& student_config,
                      const DistillSource& source, const TrainPolicy& policy,
                      const std::filesystem::path& artifacts_dir) {
  policy.validate();
  if (source.proxy == nullptr || source.proxy->images.empty()) {
    throw InvalidConfigError("distillation needs a nonempty proxy dataset");
  }
  if (source.kind != DistillSourceKind::proxy && source.generator == nullptr) {
    throw InvalidConfigError("distillation source needs trained generator params");
  }

  MixedBatchSpec mix;
  switch (source.kind) {
    case DistillSourceKind::proxy:
      mix = MixedBatchSpec{policy.batch_size, 0, policy.batch_size};
      break;
    case DistillSourceKind::generator:
      mix = MixedBatchSpec{0, policy.batch_size, policy.batch_size};
      break;
    case DistillSourceKind::mixed:
      mix = source.mix;
      break;
  }
  mix.validate();
  if (mix.n_batch != policy.batch_size) {
    throw InvalidConfigError("mixed batch n_batch must equal policy batch_size");
  }

  SegNet student(student_config);
  student.reseed_dropout(derive_seed(policy.seed, "distill.dropout"));
  Optimizer opt(policy, student.parameters());
  UnlabeledBatchStream stream(*source.proxy, std::max(mix.alpha, 1),
                              derive_seed(policy.seed, "distill.shuffle"));
  const int steps_per_epoch =
      (source.proxy->size() + policy.batch_size - 1) / policy.batch_size;

  RunRecord record;
  record.seed = policy.seed;
  for (int epoch = 0; epoch < policy.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(policy, epoch);
    double loss_sum = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const uint64_t step_seed = derive_seed(
          policy.seed, static_cast<uint64_t>(epoch) * 1000003ULL +
                           static_cast<uint64_t>(step) + 0xd157111ULL);
      Tensor images;
      if (mix.alpha > 0) {
        const Tensor proxy_part = stream.take(mix.alpha);
        images = (mix.beta > 0)
                     ? make_mixed_batch(proxy_part, *source.generator, mix,
                                        step_seed)
                     : proxy_part;
      } else {
        images =
            make_mixed_batch(Tensor({0, 3, student_config.image_h,
                                     student_config.image_w}),
                             *source.generator, mix, step_seed);
      }
      const Tensor t = teacher.forward(images, /*train=*/false);
      const Tensor s = student.forward(images, /*train=*/true);
      Tensor ds;
      const double loss = kd_kl_loss(t, s, &ds);
      check_finite_loss(loss, "KD KL loss", epoch, step);
      zero_grads(student.parameters());
      student.backward(ds);
      opt.step(lr);
      loss_sum += loss;
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.losses["kd_kl"] = loss_sum / steps_per_epoch;
    stats.lr = lr;
    stats.wall_time_s = elapsed_s(start);
    record.epochs.push_back(stats);
  }

  if (!artifacts_dir.empty()) {
    const auto ckpt = artifacts_dir / "checkpoint";
    save_checkpoint(ckpt, student.config(), student.parameters());
    record.final_checkpoint = ckpt.string();
    record.write_jsonl(artifacts_dir / "runlog.jsonl");
  }
  return DistillResult{std::move(student), std::move(record)};
}

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

namespace {

std::string format_lambda(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

void run_jobs(int jobs, std::vector<std::function<void()>>& tasks) {
  if (jobs <= 1) {
    for (auto& task : tasks) task();
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&tasks, &next] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      tasks[i]();
    }
  };
  const int n_threads = std::min<int>(jobs, static_cast<int>(tasks.size()));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

json row_to_json(const AblationRow& row) {
  return json{{"cell_id", row.cell_id},   {"lambda_e", row.lambda_e},
              {"lambda_d", row.lambda_d}, {"variant", row.variant},
              {"alpha", row.alpha},       {"beta", row.beta},
              {"seed", row.seed},         {"mean_iou", row.mean_iou},
              {"pixel_acc", row.pixel_acc}, {"failed", row.failed},
              {"error", row.error}};
}

}  // namespace

std::vector<AblationRow> run_ablation(const SegNet& teacher,
                                      const UnlabeledDataset& proxy,
                                      const Dataset& eval_set,
                                      const AblationConfig& config,
                                      const std::filesystem::path& artifacts_dir) {
  struct Cell {
    AblationRow row;
    std::optional<DeGANConfig> degan;  // nullopt for the plain-GAN cell
    bool is_mix = false;
    MixedBatchSpec mix;
    int gan_slot = -1;  // index into the trained-generator table
  };

  // Unique GAN trainings: one per (lambda cell, seed) plus one shared
  // DeGAN generator per seed for the mix cells.
  struct GanJob {
    std::optional<DeGANConfig> degan;
    int seed_index = 0;
    std::string tag;
  };

  std::vector<Cell> cells;
  std::vector<GanJob> gan_jobs;

  // Generator trainings are keyed by what actually changes the training:
  // the loss weights, and the variant only when the diversity term is live.
  // Cells with identical keys share one generator per seed.
  auto gan_tag = [](const std::optional<DeGANConfig>& degan) {
    if (!degan.has_value()) return std::string("plain_gan");
    std::string tag = "e" + format_lambda(degan->weights.lambda_e) + "_d" +
                      format_lambda(degan->weights.lambda_d);
    if (degan->weights.lambda_d > 0.0) tag += "_" + to_string(degan->variant);
    return tag;
  };
  auto gan_key_slot = [&gan_jobs, &gan_tag](const std::optional<DeGANConfig>& degan,
                                            int seed_index) {
    const std::string tag = gan_tag(degan);
    for (std::size_t i = 0; i < gan_jobs.size(); ++i) {
      if (gan_jobs[i].seed_index == seed_index && gan_jobs[i].tag == tag) {
        return static_cast<int>(i);
      }
    }
    gan_jobs.push_back(GanJob{degan, seed_index, tag});
    return static_cast<int>(gan_jobs.size() - 1);
  };

  for (const LambdaCell& lam : config.lambda_grid) {
    for (int s = 0; s < config.seeds; ++s) {
      Cell cell;
      cell.row.cell_id = "lam_e" + format_lambda(lam.lambda_e) + "_d" +
                         format_lambda(lam.lambda_d) + "_" +
                         to_string(lam.variant);
      cell.row.lambda_e = lam.lambda_e;
      cell.row.lambda_d = lam.lambda_d;
      cell.row.variant = to_string(lam.variant);
      cell.row.alpha = 0;
      cell.row.beta = config.distill_policy.batch_size;
      cell.row.seed = s;
      const bool plain_gan = lam.lambda_d == 0.0 && lam.lambda_e == 0.0;
      // lambda (0, 0) is exactly the plain GAN
      if (plain_gan) {
        cell.degan = std::nullopt;
      } else {
        cell.degan = DeGANConfig{{lam.lambda_d, lam.lambda_e}, lam.variant};
      }
      cell.gan_slot = gan_key_slot(cell.degan, s);
      cells.push_back(cell);
    }
  }
  for (const MixedBatchSpec& mix : config.mix_grid) {
    for (int s = 0; s < config.seeds; ++s) {
      Cell cell;
      cell.row.cell_id =
          "mix_a" + std::to_string(mix.alpha) + "_b" + std::to_string(mix.beta);
      cell.row.lambda_e = config.mix_degan.weights.lambda_e;
      cell.row.lambda_d = config.mix_degan.weights.lambda_d;
      cell.row.variant = to_string(config.mix_degan.variant);
      cell.row.alpha = mix.alpha;
      cell.row.beta = mix.beta;
      cell.row.seed = s;
      cell.is_mix = true;
      cell.mix = mix;
      cell.degan = config.mix_degan;
      cell.gan_slot = gan_key_slot(cell.degan, s);
      cells.push_back(cell);
    }
  }

  // Phase A: train every unique generator.
  std::vector<std::optional<Generator>> generators(gan_jobs.size());
  std::vector<std::string> gan_errors(gan_jobs.size());
  std::vector<std::function<void()>> phase_a;
  for (std::size_t i = 0; i < gan_jobs.size(); ++i) {
    phase_a.emplace_back([&, i] {
      const GanJob& job = gan_jobs[i];
      try {
        SegNet frozen_teacher = teacher;  // worker-local copy
        TrainPolicy policy = config.gan_policy;
        policy.seed = derive_seed(config.base_seed,
                                  "ablation.gan." + job.tag + "." +
                                      std::to_string(job.seed_index));
        ModelConfig gen_cfg = config.generator_config;
        gen_cfg.seed = derive_seed(policy.seed, "gen.init");
        ModelConfig disc_cfg = config.discriminator_config;
        disc_cfg.seed = derive_seed(policy.seed, "disc.init");
        GanTrainResult result =
            train_gan(proxy, gen_cfg, disc_cfg, policy, job.degan,
                      job.degan.has_value() ? &frozen_teacher : nullptr);
        generators[i] = std::move(result.generator);
      } catch (const std::exception& e) {
        gan_errors[i] = e.what();
      }
    });
  }
  run_jobs(config.jobs, phase_a);

  // Phase B: distill and evaluate every cell.
  std::vector<std::function<void()>> phase_b;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    phase_b.emplace_back([&, i] {
      Cell& cell = cells[i];
      try {
        if (!generators[static_cast<std::size_t>(cell.gan_slot)].has_value()) {
          throw NumericalError(
              "generator training failed: " +
              gan_errors[static_cast<std::size_t>(cell.gan_slot)]);
        }
        Generator generator =
            *generators[static_cast<std::size_t>(cell.gan_slot)];
        SegNet frozen_teacher = teacher;
        TrainPolicy policy = config.distill_policy;
        policy.seed = derive_seed(config.base_seed,
                                  "ablation.distill." + cell.row.cell_id + "." +
                                      std::to_string(cell.row.seed));
        ModelConfig student_cfg = config.student_config;
        student_cfg.seed = derive_seed(policy.seed, "student.init");
        DistillSource source;
        source.proxy = &proxy;
        source.generator = &generator;
        if (cell.is_mix) {
          source.kind = cell.mix.alpha == 0 ? DistillSourceKind::generator
                        : cell.mix.beta == 0 ? DistillSourceKind::proxy
                                             : DistillSourceKind::mixed;
          source.mix = cell.mix;
        } else {
          source.kind = DistillSourceKind::generator;
        }
        DistillResult distilled = distill(frozen_teacher, student_cfg, source,
                                          policy);
        const EvalReport report = evaluate_model(distilled.student, eval_set);
        cell.row.mean_iou = report.mean_iou;
        cell.row.pixel_acc = report.pixel_accuracy;
      } catch (const std::exception& e) {
        cell.row.failed = true;
        cell.row.error = e.what();
        cell.row.mean_iou = std::nan("");
        cell.row.pixel_acc = std::nan("");
      }
      if (!artifacts_dir.empty()) {
        const auto cell_path =
            artifacts_dir / "cells" /
            (cell.row.cell_id + "_s" + std::to_string(cell.row.seed) + ".json");
        atomic_write_file(cell_path, row_to_json(cell.row).dump(2) + "\n");
      }
    });
  }
  run_jobs(config.jobs, phase_b);

  std::vector<AblationRow> rows;
  rows.reserve(cells.size());
  for (const Cell& cell : cells) rows.push_back(cell.row);
  if (!artifacts_dir.empty()) {
    write_ablation_csv(artifacts_dir / "results.csv", rows);
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "cell_id,lambda_e,lambda_d,variant,alpha,beta,seed,mean_iou,pixel_acc\n";
  for (const AblationRow& row : rows) {
    out << row.cell_id << "," << row.lambda_e << "," << row.lambda_d << ","
        << row.variant << "," << row.alpha << "," << row.beta << "," << row.seed
        << ",";
    if (row.failed) {
      out << "nan,nan";
    } else {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f", row.mean_iou, row.pixel_acc);
      out << buf;
    }
    out << "\n";
  }
  atomic_write_file(path, out.str());
}

}  // namespace dfseg
