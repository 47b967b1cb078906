// SPDX-License-Identifier: Apache-2.0
#include "dfseg/runconfig.hpp"

#include <initializer_list>
#include <nlohmann/json.hpp>
#include <set>

#include "dfseg/common.hpp"

namespace dfseg {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::string& section,
                         std::initializer_list<const char*> known) {
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& item : j.items()) {
    if (allowed.find(item.key()) == allowed.end()) {
      throw InvalidConfigError("unknown key \"" + item.key() + "\" in " +
                               section);
    }
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_policy_fields(const json& j, TrainPolicy& policy) {
  maybe(j, "epochs", policy.epochs);
  maybe(j, "batch_size", policy.batch_size);
  maybe(j, "learning_rate", policy.learning_rate);
  maybe(j, "lr_decay_factor", policy.lr_decay_factor);
  maybe(j, "lr_decay_every_n_epochs", policy.lr_decay_every_n_epochs);
  maybe(j, "weight_decay", policy.weight_decay);
  maybe(j, "momentum", policy.momentum);
  maybe(j, "adam_beta1", policy.adam_beta1);
  maybe(j, "adam_beta2", policy.adam_beta2);
  if (j.contains("optimizer")) {
    policy.optimizer =
        optimizer_kind_from_string(j.at("optimizer").get<std::string>());
  }
}

}  // namespace

RunConfig RunConfig::make_default() {
  RunConfig cfg;
  // Teacher: step-decay SGD with momentum (scaled-down segmentation policy).
  cfg.teacher.policy.epochs = 30;
  cfg.teacher.policy.batch_size = 16;
  cfg.teacher.policy.learning_rate = 1e-3;
  cfg.teacher.policy.lr_decay_factor = 0.1;
  cfg.teacher.policy.lr_decay_every_n_epochs = 10;
  cfg.teacher.policy.weight_decay = 5e-4;
  cfg.teacher.policy.optimizer = OptimizerKind::sgd_momentum;
  // GAN: Adam(0.5, 0.999), lr 2e-4, batch 16.
  cfg.gan.policy.epochs = 12;
  cfg.gan.policy.batch_size = 16;
  cfg.gan.policy.learning_rate = 2e-4;
  cfg.gan.policy.lr_decay_factor = 1.0;
  cfg.gan.policy.lr_decay_every_n_epochs = 1000000;
  cfg.gan.policy.weight_decay = 0.0;
  cfg.gan.policy.optimizer = OptimizerKind::adam;
  // Distillation: same step schedule as the teacher.
  cfg.distill.policy = cfg.teacher.policy;
  // Ablation grids default to the standard sweep.
  cfg.ablation.lambda_grid = {
      {0.0, 0.0, DiversityVariant::plain},
      {0.0, 10.0, DiversityVariant::plain},
      {10.0, 0.0, DiversityVariant::plain},
      {10.0, 10.0, DiversityVariant::plain},
      {5.0, 10.0, DiversityVariant::plain},
      {0.0, 0.0, DiversityVariant::weighted},
      {0.0, 10.0, DiversityVariant::weighted},
      {10.0, 0.0, DiversityVariant::weighted},
      {10.0, 10.0, DiversityVariant::weighted},
      {5.0, 10.0, DiversityVariant::weighted},
  };
  cfg.ablation.mix_grid = {
      {16, 0, 16}, {12, 4, 16}, {8, 8, 16}, {4, 12, 16}, {0, 16, 16},
  };
  return cfg;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidConfigError(std::string("config JSON parse error: ") + e.what());
  }
  RunConfig cfg = make_default();
  cfg.echo = text;

  reject_unknown_keys(j, "config root",
                      {"global_seed", "output_dir", "data", "teacher", "gan",
                       "degan", "distill", "eval", "ablation"});
  maybe(j, "global_seed", cfg.global_seed);
  maybe(j, "output_dir", cfg.output_dir);

  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown_keys(d, "section \"data\"",
                        {"n_train", "n_val", "n_proxy", "num_classes",
                         "image_size", "class_frequency", "dropped_classes"});
    maybe(d, "n_train", cfg.data.n_train);
    maybe(d, "n_val", cfg.data.n_val);
    maybe(d, "n_proxy", cfg.data.n_proxy);
    maybe(d, "num_classes", cfg.data.num_classes);
    maybe(d, "image_size", cfg.data.image_size);
    maybe(d, "class_frequency", cfg.data.class_frequency);
    maybe(d, "dropped_classes", cfg.data.dropped_classes);
  }

  if (j.contains("teacher")) {
    const json& t = j.at("teacher");
    reject_unknown_keys(t, "section \"teacher\"",
                        {"width", "epochs", "batch_size", "learning_rate",
                         "lr_decay_factor", "lr_decay_every_n_epochs",
                         "weight_decay", "momentum", "adam_beta1", "adam_beta2",
                         "optimizer"});
    maybe(t, "width", cfg.teacher.width);
    parse_policy_fields(t, cfg.teacher.policy);
  }

  if (j.contains("gan")) {
    const json& g = j.at("gan");
    reject_unknown_keys(g, "section \"gan\"",
                        {"width", "latent_dim", "epochs", "batch_size",
                         "learning_rate", "lr_decay_factor",
                         "lr_decay_every_n_epochs", "weight_decay", "momentum",
                         "adam_beta1", "adam_beta2", "optimizer"});
    maybe(g, "width", cfg.gan.width);
    maybe(g, "latent_dim", cfg.gan.latent_dim);
    parse_policy_fields(g, cfg.gan.policy);
  }

  if (j.contains("degan")) {
    const json& d = j.at("degan");
    reject_unknown_keys(d, "section \"degan\"",
                        {"lambda_e", "lambda_d", "diversity_variant",
                         "teacher_checkpoint"});
    maybe(d, "lambda_e", cfg.degan.lambda_e);
    maybe(d, "lambda_d", cfg.degan.lambda_d);
    if (cfg.degan.lambda_e < 0.0 || cfg.degan.lambda_d < 0.0) {
      throw InvalidConfigError("lambda_e and lambda_d must be >= 0");
    }
    if (d.contains("diversity_variant")) {
      cfg.degan.variant = diversity_variant_from_string(
          d.at("diversity_variant").get<std::string>());
    }
    maybe(d, "teacher_checkpoint", cfg.degan.teacher_checkpoint);
  }

  if (j.contains("distill")) {
    const json& d = j.at("distill");
    reject_unknown_keys(
        d, "section \"distill\"",
        {"student_width", "source", "alpha", "beta", "data",
         "teacher_checkpoint", "generator_checkpoint", "epochs", "batch_size",
         "learning_rate", "lr_decay_factor", "lr_decay_every_n_epochs",
         "weight_decay", "momentum", "adam_beta1", "adam_beta2", "optimizer"});
    maybe(d, "student_width", cfg.distill.student_width);
    if (d.contains("data")) {
      cfg.distill.data = d.at("data").get<std::string>();
      if (cfg.distill.data != "proxy" && cfg.distill.data != "train") {
        throw InvalidConfigError("distill data must be \"proxy\" or \"train\"");
      }
    }
    if (d.contains("source")) {
      cfg.distill.source =
          distill_source_from_string(d.at("source").get<std::string>());
    }
    maybe(d, "alpha", cfg.distill.alpha);
    maybe(d, "beta", cfg.distill.beta);
    maybe(d, "teacher_checkpoint", cfg.distill.teacher_checkpoint);
    maybe(d, "generator_checkpoint", cfg.distill.generator_checkpoint);
    parse_policy_fields(d, cfg.distill.policy);
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    reject_unknown_keys(e, "section \"eval\"",
                        {"checkpoint", "teacher_checkpoint",
                         "generator_checkpoint", "report_samples"});
    maybe(e, "checkpoint", cfg.eval.checkpoint);
    maybe(e, "teacher_checkpoint", cfg.eval.teacher_checkpoint);
    maybe(e, "generator_checkpoint", cfg.eval.generator_checkpoint);
    maybe(e, "report_samples", cfg.eval.report_samples);
  }

  if (j.contains("ablation")) {
    const json& a = j.at("ablation");
    reject_unknown_keys(a, "section \"ablation\"",
                        {"lambda_grid", "variants", "mix_grid", "mix_lambda_e",
                         "mix_lambda_d", "mix_variant", "seeds", "jobs"});
    if (a.contains("lambda_grid") || a.contains("variants")) {
      std::vector<std::vector<double>> pairs = {
          {0, 0}, {0, 10}, {10, 0}, {10, 10}, {5, 10}};
      std::vector<std::string> variants = {"plain", "weighted"};
      maybe(a, "lambda_grid", pairs);
      maybe(a, "variants", variants);
      cfg.ablation.lambda_grid.clear();
      for (const std::string& variant : variants) {
        for (const auto& pair : pairs) {
          if (pair.size() != 2) {
            throw InvalidConfigError("lambda_grid entries must be [lambda_e, lambda_d]");
          }
          cfg.ablation.lambda_grid.push_back(
              {pair[0], pair[1], diversity_variant_from_string(variant)});
        }
      }
    }
    if (a.contains("mix_grid")) {
      cfg.ablation.mix_grid.clear();
      for (const auto& pair : a.at("mix_grid")) {
        if (!pair.is_array() || pair.size() != 2) {
          throw InvalidConfigError("mix_grid entries must be [alpha, beta]");
        }
        const int alpha = pair.at(0).get<int>();
        const int beta = pair.at(1).get<int>();
        cfg.ablation.mix_grid.push_back({alpha, beta, alpha + beta});
      }
    }
    maybe(a, "mix_lambda_e", cfg.ablation.mix_lambda_e);
    maybe(a, "mix_lambda_d", cfg.ablation.mix_lambda_d);
    if (a.contains("mix_variant")) {
      cfg.ablation.mix_variant = diversity_variant_from_string(
          a.at("mix_variant").get<std::string>());
    }
    maybe(a, "seeds", cfg.ablation.seeds);
    maybe(a, "jobs", cfg.ablation.jobs);
  }

  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  return from_json_text(read_file(path));
}

DatasetConfig RunConfig::train_dataset_config() const {
  DatasetConfig dc;
  dc.n_images = data.n_train;
  dc.num_classes = data.num_classes;
  dc.class_frequency = data.class_frequency;
  dc.image_h = dc.image_w = data.image_size;
  dc.seed = derive_seed(global_seed, "data.train");
  return dc;
}

DatasetConfig RunConfig::val_dataset_config() const {
  DatasetConfig dc = train_dataset_config();
  dc.n_images = data.n_val;
  dc.seed = derive_seed(global_seed, "data.val");
  return dc;
}

DatasetConfig RunConfig::proxy_dataset_config() const {
  DatasetConfig dc = train_dataset_config();
  dc.n_images = data.n_proxy;
  dc.dropped_classes = data.dropped_classes;
  dc.seed = derive_seed(global_seed, "data.proxy");
  return dc;
}

ModelConfig RunConfig::teacher_model_config() const {
  ModelConfig mc = default_model_config(ModelKind::teacher_seg);
  mc.num_classes = data.num_classes;
  mc.width = teacher.width;
  mc.image_h = mc.image_w = data.image_size;
  mc.seed = derive_seed(global_seed, "model.teacher");
  return mc;
}

ModelConfig RunConfig::student_model_config() const {
  if (distill.student_width >= teacher.width) {
    throw InvalidConfigError("student width must be smaller than teacher width");
  }
  ModelConfig mc = default_model_config(ModelKind::student_seg);
  mc.num_classes = data.num_classes;
  mc.width = distill.student_width;
  mc.image_h = mc.image_w = data.image_size;
  mc.seed = derive_seed(global_seed, "model.student");
  return mc;
}

ModelConfig RunConfig::generator_model_config() const {
  ModelConfig mc = default_model_config(ModelKind::generator);
  mc.width = gan.width;
  mc.latent_dim = gan.latent_dim;
  mc.image_h = mc.image_w = data.image_size;
  mc.seed = derive_seed(global_seed, "model.generator");
  return mc;
}

ModelConfig RunConfig::discriminator_model_config() const {
  ModelConfig mc = default_model_config(ModelKind::discriminator);
  mc.width = gan.width;
  mc.image_h = mc.image_w = data.image_size;
  mc.seed = derive_seed(global_seed, "model.discriminator");
  return mc;
}

}  // namespace dfseg
