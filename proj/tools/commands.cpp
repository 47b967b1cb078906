// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "dfseg/common.hpp"
#include "dfseg/evaluation.hpp"
#include "dfseg/runconfig.hpp"
#include "dfseg/training.hpp"

namespace dfseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

RunConfig load_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty()
                      ? RunConfig::make_default()
                      : RunConfig::from_file(args.config_path);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.seed.has_value()) cfg.global_seed = *args.seed;
  return cfg;
}

// Verbatim config echo: the exact input bytes when a config file was given,
// otherwise a serialization of the effective defaults.
void write_config_echo(const RunConfig& cfg) {
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  std::string echo = cfg.echo;
  if (echo.empty()) {
    echo = json{{"global_seed", cfg.global_seed},
                {"output_dir", cfg.output_dir}}
               .dump(2) +
           "\n";
  }
  atomic_write_file(out / "config.json", echo);
}

fs::path require_checkpoint(const std::string& configured,
                            const fs::path& fallback, const char* what) {
  const fs::path path = configured.empty() ? fallback : fs::path(configured);
  if (!fs::exists(path / "manifest.json")) {
    throw MissingDependencyError(std::string(what) +
                                 " checkpoint not found: " + path.string());
  }
  return path;
}

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const InvalidConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const InvalidInputError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const MissingDependencyError& e) {
    std::cerr << "missing dependency: " << e.what() << "\n";
    return kExitMissingDependency;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumericalFailure;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int cmd_gen_data(const CommonArgs& args) {
  return run_guarded([&] {
    const RunConfig cfg = load_config(args);
    write_config_echo(cfg);
    const fs::path out(cfg.output_dir);
    dump_dataset(out / "data" / "train", generate_dataset(cfg.train_dataset_config()));
    dump_dataset(out / "data" / "val", generate_dataset(cfg.val_dataset_config()));
    dump_dataset(out / "data" / "proxy", generate_dataset(cfg.proxy_dataset_config()));
    std::cout << "wrote dataset dumps under " << (out / "data").string() << "\n";
  });
}

int cmd_train(const CommonArgs& args, const std::string& stage) {
  return run_guarded([&] {
    const RunConfig cfg = load_config(args);
    write_config_echo(cfg);
    const fs::path out(cfg.output_dir);

    if (stage == "teacher") {
      const Dataset train_set = generate_dataset(cfg.train_dataset_config());
      TrainPolicy policy = cfg.teacher.policy;
      policy.seed = derive_seed(cfg.global_seed, "train.teacher");
      train_teacher(train_set, policy, cfg.teacher_model_config(),
                    out / "teacher");
      std::cout << "teacher checkpoint: "
                << (out / "teacher" / "checkpoint").string() << "\n";
      return;
    }

    if (stage == "gan" || stage == "degan") {
      const UnlabeledDataset proxy =
          drop_labels(generate_dataset(cfg.proxy_dataset_config()));
      TrainPolicy policy = cfg.gan.policy;
      policy.seed = derive_seed(cfg.global_seed, "train." + stage);
      if (stage == "gan") {
        train_gan(proxy, cfg.generator_model_config(),
                  cfg.discriminator_model_config(), policy, std::nullopt,
                  nullptr, {}, out / "gan");
        std::cout << "generator checkpoint: "
                  << (out / "gan" / "generator").string() << "\n";
        return;
      }
      const fs::path teacher_path =
          require_checkpoint(cfg.degan.teacher_checkpoint,
                             out / "teacher" / "checkpoint", "teacher");
      SegNet teacher = load_segnet(teacher_path);
      const DeGANConfig degan{{cfg.degan.lambda_d, cfg.degan.lambda_e},
                              cfg.degan.variant};
      train_gan(proxy, cfg.generator_model_config(),
                cfg.discriminator_model_config(), policy, degan, &teacher, {},
                out / "degan");
      std::cout << "generator checkpoint: "
                << (out / "degan" / "generator").string() << "\n";
      return;
    }

    if (stage == "distill") {
      const fs::path teacher_path =
          require_checkpoint(cfg.distill.teacher_checkpoint,
                             out / "teacher" / "checkpoint", "teacher");
      SegNet teacher = load_segnet(teacher_path);
      // "train" swaps in the true training images (labels discarded) as an
      // upper-bound baseline; the default stays data-free on the proxy set.
      const UnlabeledDataset proxy = drop_labels(generate_dataset(
          cfg.distill.data == "train" ? cfg.train_dataset_config()
                                      : cfg.proxy_dataset_config()));
      TrainPolicy policy = cfg.distill.policy;
      policy.seed = derive_seed(cfg.global_seed, "train.distill");

      DistillSource source;
      source.kind = cfg.distill.source;
      source.proxy = &proxy;
      std::optional<Generator> generator;
      if (source.kind != DistillSourceKind::proxy) {
        const fs::path gen_path =
            require_checkpoint(cfg.distill.generator_checkpoint,
                               out / "degan" / "generator", "generator");
        generator.emplace(load_generator(gen_path));
        source.generator = &*generator;
      }
      source.mix = MixedBatchSpec{cfg.distill.alpha, cfg.distill.beta,
                                  cfg.distill.alpha + cfg.distill.beta};
      if (source.kind == DistillSourceKind::mixed &&
          source.mix.n_batch != policy.batch_size) {
        throw InvalidConfigError(
            "distill alpha + beta must equal the distill batch_size");
      }
      distill(teacher, cfg.student_model_config(), source, policy,
              out / "distill");
      std::cout << "student checkpoint: "
                << (out / "distill" / "checkpoint").string() << "\n";
      return;
    }

    throw InvalidConfigError("unknown training stage: " + stage);
  });
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint) {
  return run_guarded([&] {
    const RunConfig cfg = load_config(args);
    write_config_echo(cfg);
    const fs::path out(cfg.output_dir);
    const std::string configured =
        !checkpoint.empty() ? checkpoint : cfg.eval.checkpoint;
    const fs::path ckpt = require_checkpoint(
        configured, out / "distill" / "checkpoint", "segmenter");
    SegNet net = load_segnet(ckpt);
    const Dataset val_set = generate_dataset(cfg.val_dataset_config());
    const EvalReport report = evaluate_model(net, val_set);
    fs::create_directories(out / "eval");
    atomic_write_file(out / "eval" / "report.json",
                      eval_report_to_json(report, cfg.echo, cfg.global_seed));
    std::cout << "mean_iou=" << report.mean_iou
              << " pixel_accuracy=" << report.pixel_accuracy << "\n";
  });
}

int cmd_ablate(const CommonArgs& args, std::optional<int> jobs) {
  return run_guarded([&] {
    const RunConfig cfg = load_config(args);
    write_config_echo(cfg);
    const fs::path out(cfg.output_dir);
    const fs::path teacher_path =
        require_checkpoint(cfg.degan.teacher_checkpoint,
                           out / "teacher" / "checkpoint", "teacher");
    SegNet teacher = load_segnet(teacher_path);
    const UnlabeledDataset proxy =
        drop_labels(generate_dataset(cfg.proxy_dataset_config()));
    const Dataset val_set = generate_dataset(cfg.val_dataset_config());

    AblationConfig ab;
    ab.lambda_grid = cfg.ablation.lambda_grid;
    ab.mix_grid = cfg.ablation.mix_grid;
    ab.mix_degan = DeGANConfig{
        {cfg.ablation.mix_lambda_d, cfg.ablation.mix_lambda_e},
        cfg.ablation.mix_variant};
    ab.seeds = cfg.ablation.seeds;
    ab.jobs = jobs.value_or(cfg.ablation.jobs);
    ab.gan_policy = cfg.gan.policy;
    ab.distill_policy = cfg.distill.policy;
    ab.generator_config = cfg.generator_model_config();
    ab.discriminator_config = cfg.discriminator_model_config();
    ab.student_config = cfg.student_model_config();
    ab.base_seed = cfg.global_seed;
    for (const MixedBatchSpec& mix : ab.mix_grid) {
      if (mix.n_batch != ab.distill_policy.batch_size) {
        throw InvalidConfigError(
            "mix_grid entries must sum to the distill batch_size");
      }
    }

    const auto rows = run_ablation(teacher, proxy, val_set, ab, out / "ablation");
    int failed = 0;
    for (const auto& row : rows) failed += row.failed ? 1 : 0;
    std::cout << "ablation rows: " << rows.size() << " (" << failed
              << " failed), results: "
              << (out / "ablation" / "results.csv").string() << "\n";
  });
}

int cmd_report(const CommonArgs& args) {
  return run_guarded([&] {
    const RunConfig cfg = load_config(args);
    write_config_echo(cfg);
    const fs::path out(cfg.output_dir);
    const fs::path teacher_path =
        require_checkpoint(cfg.eval.teacher_checkpoint,
                           out / "teacher" / "checkpoint", "teacher");
    const fs::path gen_path =
        require_checkpoint(cfg.eval.generator_checkpoint,
                           out / "degan" / "generator", "generator");
    SegNet teacher = load_segnet(teacher_path);
    Generator generator = load_generator(gen_path);
    const Tensor dist = generated_distribution_report(
        generator, teacher, cfg.eval.report_samples,
        derive_seed(cfg.global_seed, "report"));
    fs::create_directories(out / "report");
    write_distribution_csv(out / "report" / "distribution.csv", dist);
    json j;
    j["distribution"] = std::vector<double>(dist.data(), dist.data() + dist.numel());
    j["entropy_nats"] = distribution_entropy(dist);
    j["n_samples"] = cfg.eval.report_samples;
    j["seed"] = cfg.global_seed;
    atomic_write_file(out / "report" / "report.json", j.dump(2) + "\n");
    std::cout << "distribution entropy: " << distribution_entropy(dist)
              << " nats\n";
  });
}

}  // namespace dfseg::cli
