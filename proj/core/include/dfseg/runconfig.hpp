// SPDX-License-Identifier: Apache-2.0
//
// Single structured run configuration (JSON document with per-stage
// sections). Parsing is strict: unknown keys are rejected with a diagnostic
// naming the key, so typos like "lamda_d" cannot silently fall back to a
// default.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfseg/models.hpp"
#include "dfseg/shapesdata.hpp"
#include "dfseg/training.hpp"

namespace dfseg {

struct DataSection {
  int n_train = 1000;
  int n_val = 200;
  int n_proxy = 512;
  int num_classes = 6;
  int image_size = 32;
  std::vector<double> class_frequency = {0.9, 0.7, 0.5, 0.2, 0.05};
  std::vector<int> dropped_classes = {4, 5};
};

struct TeacherSection {
  int width = 32;
  TrainPolicy policy;  // defaults below in make_default()
};

struct GanSection {
  int width = 16;
  int latent_dim = 64;
  TrainPolicy policy;
};

struct DeganSection {
  double lambda_e = 0.0;
  double lambda_d = 10.0;
  DiversityVariant variant = DiversityVariant::weighted;
  std::string teacher_checkpoint;  // empty: <output_dir>/teacher/checkpoint
};

struct DistillSection {
  int student_width = 8;
  DistillSourceKind source = DistillSourceKind::mixed;
  int alpha = 8;
  int beta = 8;
  /// Which image pool feeds distillation: "proxy" (default) or "train" (the
  /// true training images with their labels discarded; an upper-bound
  /// baseline, not a data-free configuration).
  std::string data = "proxy";
  std::string teacher_checkpoint;    // empty: <output_dir>/teacher/checkpoint
  std::string generator_checkpoint;  // empty: <output_dir>/degan/generator
  TrainPolicy policy;
};

struct EvalSection {
  std::string checkpoint;            // segmenter to score; empty: distill output
  std::string teacher_checkpoint;    // for report generation
  std::string generator_checkpoint;  // for report generation
  int report_samples = 256;
};

struct AblationSection {
  std::vector<LambdaCell> lambda_grid;     // rows x variants, built in parse
  std::vector<MixedBatchSpec> mix_grid;
  double mix_lambda_e = 0.0;
  double mix_lambda_d = 10.0;
  DiversityVariant mix_variant = DiversityVariant::weighted;
  int seeds = 3;
  int jobs = 1;
};

struct RunConfig {
  uint64_t global_seed = 42;
  std::string output_dir = "runs/default";
  DataSection data;
  TeacherSection teacher;
  GanSection gan;
  DeganSection degan;
  DistillSection distill;
  EvalSection eval;
  AblationSection ablation;

  /// The exact text the config was parsed from (for verbatim echoes).
  std::string echo;

  static RunConfig make_default();
  /// Strict parse; throws InvalidConfigError on unknown keys or bad values.
  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_file(const std::string& path);

  // Derived builders.
  DatasetConfig train_dataset_config() const;
  DatasetConfig val_dataset_config() const;
  DatasetConfig proxy_dataset_config() const;
  ModelConfig teacher_model_config() const;
  ModelConfig student_model_config() const;
  ModelConfig generator_model_config() const;
  ModelConfig discriminator_model_config() const;
};

}  // namespace dfseg
