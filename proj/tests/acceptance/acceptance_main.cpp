// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Runs every gate end to end and prints one pass/fail
// line per criterion:
//
//   1  loss-value suite (closed-form and hand-derived examples, 1e-6 abs)
//   2  gradient suite (analytic vs central differences through the nets)
//   3  minima properties of the diversity losses on random simplex points
//   4  teacher competence on the default synthetic task
//   5  generated-class-distribution entropy: shaped GAN > plain GAN
//   6  mixing sweep: best mixed ratio >= max(pure proxy, pure generated) - 0.01
//   7  ablation grid structure and weighted >= plain at (lambda_e 0, lambda_d 10)
//   8  data-free audit: no label reads, frozen teacher bit-identical
//   9  end-to-end determinism and bit-exact checkpoint round-trips
//
// Heavy criteria share artifacts: criterion 4 trains the teacher reused by
// 5-7, and 6-7 run as one ablation grid. Independent trainings run on a
// small worker pool; every training itself is single-threaded and seeded.
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dfseg/common.hpp"
#include "dfseg/evaluation.hpp"
#include "dfseg/losses.hpp"
#include "dfseg/models.hpp"
#include "dfseg/runconfig.hpp"
#include "dfseg/shapesdata.hpp"
#include "dfseg/training.hpp"

namespace fs = std::filesystem;
using namespace dfseg;

namespace {

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

int g_failures = 0;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

void report(int criterion, const char* name, bool pass, const std::string& detail,
            double secs) {
  std::printf("[%s] criterion %d: %s — %s (%.1f s)\n", pass ? "PASS" : "FAIL",
              criterion, name, detail.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

void run_pool(int workers, std::vector<std::function<void()>>& jobs) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      jobs[i]();
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(workers, static_cast<int>(jobs.size()));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

Tensor random_tensor(std::vector<int> shape, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

Tensor finite_difference(const std::function<double(const Tensor&)>& f,
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

struct GradCheck {
  double worst_rel = 0.0;
  int64_t checked = 0;
};

GradCheck compare_grads(const Tensor& analytic, const Tensor& numeric,
                        double guard = 1e-6) {
  GradCheck r;
  for (int64_t i = 0; i < analytic.numel(); ++i) {
    const double a = analytic[i], n = numeric[i];
    if (std::abs(a) <= guard && std::abs(n) <= guard) continue;
    ++r.checked;
    r.worst_rel = std::max(
        r.worst_rel, std::abs(a - n) / std::max(std::abs(a), std::abs(n)));
  }
  return r;
}

// Short supervised pretraining for the tiny segmenter used by the gradient
// suite; a fresh segmenter sits at the uniform-softmax point where the
// entropy objective is flat.
SegNet pretrained_tiny_segnet() {
  ModelConfig cfg = default_model_config(ModelKind::teacher_seg);
  cfg.width = 4;
  cfg.image_h = cfg.image_w = 8;
  cfg.num_classes = 4;
  cfg.seed = 99;
  SegNet net(cfg);

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
  Optimizer opt(policy, net.parameters());
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
      cross_entropy_loss(net.forward(batch.images, true), labels, &dprobs);
      zero_grads(net.parameters());
      net.backward(dprobs);
      opt.step(policy.learning_rate);
    }
  }
  return net;
}

// ---------------------------------------------------------------------------
// Criterion 1: loss values
// ---------------------------------------------------------------------------

void criterion_1() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  auto check = [&worst](double actual, double expected) {
    worst = std::max(worst, std::abs(actual - expected));
  };

  // Entropy loss.
  check(entropy_loss(Tensor::filled({2, 4, 3, 3}, 0.25)), std::log(4.0));
  {
    Tensor onehot({2, 4, 3, 3});
    for (int n = 0; n < 2; ++n) {
      for (int h = 0; h < 3; ++h) {
        for (int w = 0; w < 3; ++w) onehot.at(n, 1, h, w) = 1.0;
      }
    }
    check(entropy_loss(onehot), 0.0);
  }
  {
    Tensor s({1, 4, 1, 2});
    s.at(0, 0, 0, 0) = 1.0;
    s.at(0, 0, 0, 1) = 0.5;
    s.at(0, 1, 0, 1) = 0.5;
    check(entropy_loss(s), 0.346574);
  }

  // Batch class distribution.
  {
    Tensor hot({1, 5, 2, 2});
    for (int h = 0; h < 2; ++h) {
      for (int w = 0; w < 2; ++w) hot.at(0, 0, h, w) = 1.0;
    }
    const Tensor w0 = batch_class_distribution(hot);
    check(w0.at(0), 1.0);
    check(w0.at(4), 0.0);
    const Tensor wu = batch_class_distribution(Tensor::filled({3, 5, 2, 2}, 0.2));
    check(wu.at(2), 0.2);
    Tensor two({1, 2, 1, 2});
    two.at(0, 0, 0, 0) = 1.0;
    two.at(0, 1, 0, 1) = 1.0;
    const Tensor w2 = batch_class_distribution(two);
    check(w2.at(0), 0.5);
    check(w2.at(1), 0.5);
  }

  // Diversity losses.
  check(diversity_loss(Tensor::filled({4}, 0.25)), -1.386294);
  {
    Tensor onehot({4});
    onehot.at(2) = 1.0;
    check(diversity_loss(onehot), 0.0);
  }
  check(diversity_loss(Tensor::vector({0.5, 0.5, 0.0, 0.0})), -0.693147);
  check(weighted_diversity_loss(Tensor::filled({4}, 0.25)), 0.0);
  check(weighted_diversity_loss(Tensor::filled({6}, 1.0 / 6)), 0.0);
  check(weighted_diversity_loss(Tensor::vector({0.25, 0.75})), 0.333333);
  check(weighted_diversity_loss(Tensor::vector({0.7, 0.1, 0.1, 0.1})), 0.964286);

  // Adversarial losses.
  check(adversarial_discriminator_loss({Tensor::zeros({4}), Tensor::zeros({4})}),
        1.386294);
  check(adversarial_discriminator_loss(
            {Tensor::filled({2}, 40.0), Tensor::filled({2}, -40.0)}),
        0.0);
  check(adversarial_discriminator_loss(
            {Tensor::vector({0.0}), Tensor::vector({2.0})}),
        2.820075);
  check(adversarial_generator_loss(Tensor::zeros({3})), 0.693147);
  check(adversarial_generator_loss(Tensor::filled({3}, 40.0)), 0.0);
  check(adversarial_generator_loss(Tensor::vector({-2.0})), 2.126928);

  // Total generator objective.
  check(generator_total_loss(0.5, -1.0, 2.0, {10.0, 10.0}), 10.5);
  check(generator_total_loss(0.7, -1.0, 2.0, {0.0, 0.0}), 0.7);
  check(generator_total_loss(
            1.0, weighted_diversity_loss(Tensor::vector({0.25, 0.75})),
            1.386294, {10.0, 0.0}),
        4.333333);

  // KD KL divergence.
  {
    const Tensor t = Tensor::filled({2, 3, 2, 2}, 1.0 / 3);
    check(kd_kl_loss(t, t), 0.0);
    Tensor t1({1, 2, 1, 1});
    t1.at(0, 0, 0, 0) = 1.0;
    check(kd_kl_loss(t1, Tensor::filled({1, 2, 1, 1}, 0.5)), 0.693147);
    Tensor t2 = Tensor::filled({1, 2, 1, 1}, 0.5);
    Tensor s2({1, 2, 1, 1});
    s2.at(0, 0, 0, 0) = 0.25;
    s2.at(0, 1, 0, 0) = 0.75;
    check(kd_kl_loss(t2, s2), 0.143841);
  }

  const double secs = seconds_since(start);
  report(1, "loss-value suite", worst < 1e-6 && secs < 1.0,
         fmt("max abs err %.2e, runtime %.3f s", worst, secs), secs);
}

// ---------------------------------------------------------------------------
// Criterion 2: gradients
// ---------------------------------------------------------------------------

void criterion_2() {
  const auto start = std::chrono::steady_clock::now();
  SegNet segnet = pretrained_tiny_segnet();
  const Tensor x = random_tensor({2, 3, 8, 8}, 20240817, 0.5);
  double worst = 0.0;
  int64_t total_checked = 0;
  const double h_net = 1e-5;  // through networks
  const double h_raw = 1e-3;  // raw logit vectors

  auto run_net_check =
      [&](const std::function<double(SegNet&, const Tensor&)>& loss_of,
          const std::function<Tensor(SegNet&, const Tensor&)>& grad_of) {
        Tensor numeric = finite_difference(
            [&](const Tensor& probe) {
              SegNet copy = segnet;
              return loss_of(copy, probe);
            },
            x, h_net);
        Tensor analytic = grad_of(segnet, x);
        const GradCheck r = compare_grads(analytic, numeric);
        worst = std::max(worst, r.worst_rel);
        total_checked += r.checked;
      };

  // Entropy through the segmenter.
  run_net_check(
      [](SegNet& net, const Tensor& probe) {
        return entropy_loss(net.forward(probe, false));
      },
      [](SegNet& net, const Tensor& probe) {
        Tensor ds;
        entropy_loss(net.forward(probe, false), &ds);
        return net.backward(ds, false);
      });

  // Plain and weighted diversity through the segmenter.
  for (const bool weighted : {false, true}) {
    run_net_check(
        [weighted](SegNet& net, const Tensor& probe) {
          const Tensor w = batch_class_distribution(net.forward(probe, false));
          return weighted ? weighted_diversity_loss(w) : diversity_loss(w);
        },
        [weighted](SegNet& net, const Tensor& probe) {
          const Tensor s = net.forward(probe, false);
          const Tensor w = batch_class_distribution(s);
          Tensor dw;
          if (weighted) {
            weighted_diversity_loss(w, &dw);
          } else {
            diversity_loss(w, &dw);
          }
          return net.backward(batch_class_distribution_backward(s.shape(), dw),
                              false);
        });
  }

  // KD KL toward a fixed random teacher map, through the segmenter.
  {
    Tensor target_logits = random_tensor({2, 4, 8, 8}, 4242);
    nn::SoftmaxChannel sm;
    const Tensor target = sm.forward(target_logits);
    run_net_check(
        [&target](SegNet& net, const Tensor& probe) {
          return kd_kl_loss(target, net.forward(probe, false));
        },
        [&target](SegNet& net, const Tensor& probe) {
          Tensor ds;
          kd_kl_loss(target, net.forward(probe, false), &ds);
          return net.backward(ds, false);
        });
  }

  // Adversarial losses on raw logit vectors.
  {
    const Tensor real = random_tensor({6}, 7);
    const Tensor fake = random_tensor({6}, 8);
    Tensor dr, df;
    adversarial_discriminator_loss({real, fake}, &dr, &df);
    GradCheck r1 = compare_grads(
        dr, finite_difference(
                [&fake](const Tensor& probe) {
                  return adversarial_discriminator_loss({probe, fake});
                },
                real, h_raw));
    GradCheck r2 = compare_grads(
        df, finite_difference(
                [&real](const Tensor& probe) {
                  return adversarial_discriminator_loss({real, probe});
                },
                fake, h_raw));
    Tensor dg;
    adversarial_generator_loss(fake, &dg);
    GradCheck r3 = compare_grads(
        dg, finite_difference(
                [](const Tensor& probe) {
                  return adversarial_generator_loss(probe);
                },
                fake, h_raw));
    worst = std::max({worst, r1.worst_rel, r2.worst_rel, r3.worst_rel});
    total_checked += r1.checked + r2.checked + r3.checked;
  }

  // Generator objective through a tiny discriminator, w.r.t. the images.
  {
    ModelConfig dcfg = default_model_config(ModelKind::discriminator);
    dcfg.width = 4;
    dcfg.image_h = dcfg.image_w = 8;
    dcfg.seed = 17;
    Discriminator disc(dcfg);
    const Tensor images = random_tensor({2, 3, 8, 8}, 23, 0.5);
    Tensor numeric = finite_difference(
        [&disc](const Tensor& probe) {
          Discriminator copy = disc;
          return adversarial_generator_loss(copy.forward(probe));
        },
        images, h_net);
    Tensor dlogits;
    adversarial_generator_loss(disc.forward(images), &dlogits);
    Tensor analytic = disc.backward(dlogits, false);
    const GradCheck r = compare_grads(analytic, numeric);
    worst = std::max(worst, r.worst_rel);
    total_checked += r.checked;
  }

  const double secs = seconds_since(start);
  report(2, "gradient suite",
         worst < 1e-3 && total_checked > 0 && secs < 60.0,
         fmt("worst rel err %.2e over %lld entries, runtime %.1f s", worst,
             static_cast<long long>(total_checked), secs),
         secs);
}

// ---------------------------------------------------------------------------
// Criterion 3: minima properties
// ---------------------------------------------------------------------------

void criterion_3() {
  const auto start = std::chrono::steady_clock::now();
  const int k = 6;
  const double floor = -std::log(static_cast<double>(k));
  Rng rng(31337);
  bool ok = true;
  std::string why = "all properties hold over 1000 seeded samples";

  std::vector<Tensor> samples;
  for (int i = 0; i < 1000; ++i) {
    Tensor w({k});
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      w.at(j) = -std::log(std::max(rng.uniform(), 1e-300));
      sum += w.at(j);
    }
    w.scale(1.0 / sum);
    samples.push_back(std::move(w));
  }
  // The uniform point and a near-uniform point exercise the equality side.
  samples.push_back(Tensor::filled({k}, 1.0 / k));
  {
    Tensor near = Tensor::filled({k}, 1.0 / k);
    near.at(0) += 5e-7;
    near.at(1) -= 5e-7;
    samples.push_back(near);
  }

  for (const Tensor& w : samples) {
    double dev = 0.0;
    for (int j = 0; j < k; ++j) dev = std::max(dev, std::abs(w.at(j) - 1.0 / k));

    const double div = diversity_loss(w);
    if (div < floor - 1e-12) {
      ok = false;
      why = fmt("diversity %.12f below floor %.12f", div, floor);
      break;
    }
    if (div <= floor + 1e-9 && dev > 1e-4) {
      ok = false;
      why = "diversity at its floor away from uniform";
      break;
    }

    const double wdiv = weighted_diversity_loss(w);
    if (wdiv < -1e-12) {
      ok = false;
      why = "weighted diversity negative";
      break;
    }
    const bool small_value = wdiv < 1e-10;
    const bool near_uniform = dev < 1e-6;
    if (small_value != near_uniform) {
      ok = false;
      why = fmt("weighted-diversity iff violated (value %.3e, dev %.3e)", wdiv,
                dev);
      break;
    }
  }

  report(3, "minima properties", ok, why, seconds_since(start));
}

// ---------------------------------------------------------------------------
// Criteria 4-7 share the trained teacher and the proxy/val sets.
// ---------------------------------------------------------------------------

struct SharedContext {
  std::optional<SegNet> teacher;
  Dataset val_set;
  UnlabeledDataset proxy;
  RunConfig cfg;
  fs::path workdir;
};

void criterion_4(SharedContext& ctx) {
  const auto start = std::chrono::steady_clock::now();
  ctx.cfg = RunConfig::make_default();

  const Dataset train_set = generate_dataset(ctx.cfg.train_dataset_config());
  ctx.val_set = generate_dataset(ctx.cfg.val_dataset_config());
  {
    DatasetConfig proxy_cfg = ctx.cfg.proxy_dataset_config();
    proxy_cfg.n_images = 256;  // generator-training set for criteria 5-7
    ctx.proxy = drop_labels(generate_dataset(proxy_cfg));
  }

  TrainPolicy policy = ctx.cfg.teacher.policy;
  policy.seed = derive_seed(ctx.cfg.global_seed, "train.teacher");
  TeacherTrainResult result = train_teacher(
      train_set, policy, ctx.cfg.teacher_model_config(), ctx.workdir / "teacher");
  ctx.teacher = std::move(result.teacher);

  const EvalReport eval = evaluate_model(*ctx.teacher, ctx.val_set);
  const double secs = seconds_since(start);
  const bool pass =
      eval.pixel_accuracy >= 0.85 && eval.mean_iou >= 0.60 && secs < 900.0;
  report(4, "teacher competence", pass,
         fmt("pixel acc %.4f (>= 0.85), mean IoU %.4f (>= 0.60), %d epochs on "
             "1000 train / 200 val, %.0f s (target < 900)",
             eval.pixel_accuracy, eval.mean_iou, policy.epochs, secs),
         secs);
}

void criterion_5(SharedContext& ctx) {
  const auto start = std::chrono::steady_clock::now();
  const int n_seeds = 3;
  std::vector<double> entropy_plain(n_seeds), entropy_shaped(n_seeds);

  std::vector<std::function<void()>> jobs;
  for (int s = 0; s < n_seeds; ++s) {
    for (const bool shaped : {false, true}) {
      jobs.emplace_back([&ctx, &entropy_plain, &entropy_shaped, s, shaped] {
        // Matched seeds: the plain and shaped runs of a pair share the
        // policy seed and model init seeds; only the objective differs.
        TrainPolicy policy = ctx.cfg.gan.policy;
        policy.seed =
            derive_seed(ctx.cfg.global_seed, "acc5.seed" + std::to_string(s));
        ModelConfig gen_cfg = ctx.cfg.generator_model_config();
        gen_cfg.seed = derive_seed(policy.seed, "gen.init");
        ModelConfig disc_cfg = ctx.cfg.discriminator_model_config();
        disc_cfg.seed = derive_seed(policy.seed, "disc.init");

        SegNet teacher_copy = *ctx.teacher;
        std::optional<DeGANConfig> degan;
        if (shaped) degan = DeGANConfig{{10.0, 0.0}, DiversityVariant::weighted};
        GanTrainResult result =
            train_gan(ctx.proxy, gen_cfg, disc_cfg, policy, degan,
                      shaped ? &teacher_copy : nullptr);
        const Tensor dist = generated_distribution_report(
            result.generator, teacher_copy, 256,
            derive_seed(policy.seed, "acc5.report"));
        (shaped ? entropy_shaped : entropy_plain)[static_cast<std::size_t>(s)] =
            distribution_entropy(dist);
      });
    }
  }
  run_pool(2, jobs);

  int wins = 0;
  std::string detail;
  for (int s = 0; s < n_seeds; ++s) {
    const double ep = entropy_plain[static_cast<std::size_t>(s)];
    const double es = entropy_shaped[static_cast<std::size_t>(s)];
    if (es > ep) ++wins;
    detail += fmt("%sseed %d: %.3f vs %.3f nats", s ? "; " : "", s, es, ep);
  }
  report(5, "distribution-entropy gain of the shaped generator", wins >= 2,
         fmt("%d/%d matched seeds favor it (%s)", wins, n_seeds, detail.c_str()),
         seconds_since(start));
}

void criteria_6_and_7(SharedContext& ctx) {
  const auto start = std::chrono::steady_clock::now();

  AblationConfig ab;
  ab.lambda_grid = ctx.cfg.ablation.lambda_grid;  // 5 pairs x 2 variants
  ab.mix_grid = ctx.cfg.ablation.mix_grid;        // 5 ratios at n_batch 16
  ab.mix_degan = DeGANConfig{{10.0, 0.0}, DiversityVariant::weighted};
  ab.seeds = 3;
  ab.jobs = 2;
  ab.gan_policy = ctx.cfg.gan.policy;
  ab.gan_policy.epochs = 12;
  ab.distill_policy = ctx.cfg.distill.policy;
  ab.distill_policy.epochs = 10;
  ab.generator_config = ctx.cfg.generator_model_config();
  ab.discriminator_config = ctx.cfg.discriminator_model_config();
  ab.student_config = ctx.cfg.student_model_config();
  ab.base_seed = ctx.cfg.global_seed;

  const auto rows = run_ablation(*ctx.teacher, ctx.proxy, ctx.val_set, ab,
                                 ctx.workdir / "ablation");

  auto seed_mean = [&rows](const std::string& cell_id) {
    double sum = 0.0;
    int n = 0;
    for (const AblationRow& row : rows) {
      if (row.cell_id == cell_id && !row.failed) {
        sum += row.mean_iou;
        ++n;
      }
    }
    return n > 0 ? sum / n : std::nan("");
  };

  // Criterion 7: grid structure plus the weighted >= plain ordering.
  {
    const std::vector<std::string> expected_cells = {
        "lam_e0_d0_plain",     "lam_e0_d10_plain",    "lam_e10_d0_plain",
        "lam_e10_d10_plain",   "lam_e5_d10_plain",    "lam_e0_d0_weighted",
        "lam_e0_d10_weighted", "lam_e10_d0_weighted", "lam_e10_d10_weighted",
        "lam_e5_d10_weighted", "mix_a16_b0",          "mix_a12_b4",
        "mix_a8_b8",           "mix_a4_b12",          "mix_a0_b16"};
    bool structure_ok = rows.size() == expected_cells.size() * 3;
    int failed_cells = 0;
    for (const std::string& id : expected_cells) {
      int count = 0;
      for (const AblationRow& row : rows) {
        if (row.cell_id == id) {
          ++count;
          if (row.failed) ++failed_cells;
        }
      }
      structure_ok = structure_ok && count == 3;
    }
    const std::string csv = read_file(ctx.workdir / "ablation" / "results.csv");
    structure_ok = structure_ok &&
                   csv.rfind("cell_id,lambda_e,lambda_d,variant,alpha,beta,"
                             "seed,mean_iou,pixel_acc\n",
                             0) == 0;

    const double weighted = seed_mean("lam_e0_d10_weighted");
    const double plain = seed_mean("lam_e0_d10_plain");
    report(7, "ablation grid structure and weighted-diversity ordering",
           structure_ok && weighted >= plain && failed_cells == 0,
           fmt("rows %zu (10 lambda + 5 mix cells x 3 seeds), %d failed; "
               "seed-mean IoU weighted %.4f vs plain %.4f at (0, 10)",
               rows.size(), failed_cells, weighted, plain),
           seconds_since(start));
  }

  // Criterion 6: mixing sweep.
  {
    const double pure_proxy = seed_mean("mix_a16_b0");
    const double pure_gen = seed_mean("mix_a0_b16");
    const double best_mixed =
        std::max({seed_mean("mix_a12_b4"), seed_mean("mix_a8_b8"),
                  seed_mean("mix_a4_b12")});
    const double reference = std::max(pure_proxy, pure_gen);
    const bool pass = best_mixed >= reference - 0.01;
    const bool strict = best_mixed > reference;
    report(6, "mixed-batch distillation sweep", pass,
           fmt("best mixed %.4f vs max(pure proxy %.4f, pure generated %.4f)%s",
               best_mixed, pure_proxy, pure_gen,
               strict ? "; strict win on the seed-mean" : ""),
           seconds_since(start));
  }
}

// ---------------------------------------------------------------------------
// Criterion 8: data-free audit
// ---------------------------------------------------------------------------

void criterion_8() {
  const auto start = std::chrono::steady_clock::now();

  DatasetConfig proxy_cfg;
  proxy_cfg.n_images = 32;
  proxy_cfg.image_h = proxy_cfg.image_w = 16;
  proxy_cfg.dropped_classes = {4, 5};
  proxy_cfg.seed = 5;
  const Dataset labeled_proxy = generate_dataset(proxy_cfg);
  const uint64_t reads_before = labeled_proxy.label_reads();
  const UnlabeledDataset proxy = drop_labels(labeled_proxy);

  ModelConfig tcfg = default_model_config(ModelKind::teacher_seg);
  tcfg.width = 8;
  tcfg.image_h = tcfg.image_w = 16;
  tcfg.seed = 6;
  SegNet teacher(tcfg);
  const uint64_t teacher_hash_before = parameters_hash(teacher.parameters());

  ModelConfig gcfg = default_model_config(ModelKind::generator);
  gcfg.width = 4;
  gcfg.image_h = gcfg.image_w = 16;
  gcfg.latent_dim = 16;
  gcfg.seed = 7;
  ModelConfig dcfg = default_model_config(ModelKind::discriminator);
  dcfg.width = 4;
  dcfg.image_h = dcfg.image_w = 16;
  dcfg.seed = 8;

  TrainPolicy gan_policy;
  gan_policy.epochs = 2;
  gan_policy.batch_size = 8;
  gan_policy.learning_rate = 2e-4;
  gan_policy.optimizer = OptimizerKind::adam;
  gan_policy.weight_decay = 0.0;
  gan_policy.seed = 9;
  GanTrainResult gan =
      train_gan(proxy, gcfg, dcfg, gan_policy,
                DeGANConfig{{10.0, 0.0}, DiversityVariant::weighted}, &teacher);
  const uint64_t hash_after_gan = parameters_hash(teacher.parameters());

  ModelConfig scfg = default_model_config(ModelKind::student_seg);
  scfg.width = 4;
  scfg.image_h = scfg.image_w = 16;
  scfg.seed = 10;
  TrainPolicy distill_policy = gan_policy;
  distill_policy.optimizer = OptimizerKind::sgd_momentum;
  distill_policy.learning_rate = 1e-3;
  DistillSource source;
  source.kind = DistillSourceKind::mixed;
  source.proxy = &proxy;
  source.generator = &gan.generator;
  source.mix = MixedBatchSpec{4, 4, 8};
  distill(teacher, scfg, source, distill_policy);
  const uint64_t hash_after_distill = parameters_hash(teacher.parameters());

  const uint64_t reads_after = labeled_proxy.label_reads();
  const bool no_label_reads = reads_after == reads_before;
  const bool frozen = teacher_hash_before == hash_after_gan &&
                      teacher_hash_before == hash_after_distill;
  report(8, "data-free audit", no_label_reads && frozen,
         fmt("label reads during GAN training + distillation: %llu; teacher "
             "hash %s across both",
             static_cast<unsigned long long>(reads_after - reads_before),
             frozen ? "bit-identical" : "CHANGED"),
         seconds_since(start));
}

// ---------------------------------------------------------------------------
// Criterion 9: end-to-end determinism and persistence (via the CLI binary)
// ---------------------------------------------------------------------------

void criterion_9(const fs::path& workdir) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path sandbox = workdir / "determinism";
  fs::remove_all(sandbox);
  fs::create_directories(sandbox);

  const std::string config_text = R"({
  "global_seed": 2027,
  "data": {"n_train": 48, "n_val": 16, "n_proxy": 32, "image_size": 16},
  "teacher": {"width": 8, "epochs": 2},
  "gan": {"width": 4, "latent_dim": 16, "epochs": 1},
  "distill": {"student_width": 4, "epochs": 1, "source": "mixed",
              "alpha": 8, "beta": 8}
})";
  const fs::path config = sandbox / "config.json";
  atomic_write_file(config, config_text);

  auto run_pipeline = [&](const fs::path& out) {
    const std::string base = std::string(DFSEG_CLI_PATH) + " ";
    const std::string tail = " --config " + config.string() + " --out " +
                             out.string() + " >> " +
                             (sandbox / "cli_log.txt").string() + " 2>&1";
    int rc = 0;
    rc |= std::system((base + "train --stage teacher" + tail).c_str());
    rc |= std::system((base + "train --stage degan" + tail).c_str());
    rc |= std::system((base + "train --stage distill" + tail).c_str());
    rc |= std::system(
        (base + "eval" + tail + " " + (out / "distill" / "checkpoint").string())
            .c_str());
    return rc == 0;
  };

  const fs::path out1 = sandbox / "run1";
  const fs::path out2 = sandbox / "run2";
  const bool ran = run_pipeline(out1) && run_pipeline(out2);

  bool identical = ran;
  std::string detail = "pipeline failed to run";
  if (ran) {
    const std::string report1 = read_file(out1 / "eval" / "report.json");
    const std::string report2 = read_file(out2 / "eval" / "report.json");
    identical = report1 == report2;
    for (const char* artifact :
         {"teacher/checkpoint", "degan/generator", "distill/checkpoint"}) {
      identical = identical && read_file(out1 / artifact / "params.bin") ==
                                   read_file(out2 / artifact / "params.bin");
    }
    // Round-trip: load the student checkpoint, save it again, byte-compare.
    SegNet student = load_segnet(out1 / "distill" / "checkpoint");
    save_checkpoint(sandbox / "resaved", student.config(), student.parameters());
    const bool roundtrip =
        read_file(out1 / "distill" / "checkpoint" / "params.bin") ==
            read_file(sandbox / "resaved" / "params.bin") &&
        read_file(out1 / "distill" / "checkpoint" / "manifest.json") ==
            read_file(sandbox / "resaved" / "manifest.json");
    identical = identical && roundtrip;
    detail = fmt("re-run report %s; checkpoints %s; round-trip %s",
                 report1 == report2 ? "identical" : "DIFFERS",
                 identical ? "identical" : "DIFFER",
                 roundtrip ? "bit-exact" : "NOT bit-exact");
  }
  report(9, "determinism and persistence", identical, detail,
         seconds_since(start));
}

}  // namespace

int main() {
  const fs::path workdir = fs::current_path() / "acceptance_artifacts";
  fs::remove_all(workdir);
  fs::create_directories(workdir);
  std::printf("acceptance artifacts: %s\n", workdir.string().c_str());
  std::fflush(stdout);

  criterion_1();
  criterion_2();
  criterion_3();

  SharedContext ctx;
  ctx.workdir = workdir;
  criterion_4(ctx);
  if (ctx.teacher.has_value()) {
    criterion_5(ctx);
    criteria_6_and_7(ctx);
  } else {
    report(5, "distribution-entropy gain of the shaped generator", false,
           "skipped: teacher training failed", 0.0);
    report(6, "mixed-batch distillation sweep", false,
           "skipped: teacher training failed", 0.0);
    report(7, "ablation grid structure and weighted-diversity ordering", false,
           "skipped: teacher training failed", 0.0);
  }
  criterion_8();
  criterion_9(workdir);

  std::printf("%d of 9 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
