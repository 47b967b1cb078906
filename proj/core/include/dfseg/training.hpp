// SPDX-License-Identifier: Apache-2.0
//
// Training procedures: supervised teacher training, adversarial generator
// training (plain, or with entropy/diversity shaping through a frozen
// teacher), mixed-batch knowledge distillation, and the ablation harness.
//
// The distillation and generator-training surfaces take UnlabeledDataset
// only: ground-truth labels are unreachable from these operations by
// construction.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dfseg/losses.hpp"
#include "dfseg/models.hpp"
#include "dfseg/shapesdata.hpp"

namespace dfseg {

enum class OptimizerKind { sgd_momentum, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& s);

struct TrainPolicy {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double lr_decay_factor = 0.1;
  int lr_decay_every_n_epochs = 10;
  double weight_decay = 5e-4;
  OptimizerKind optimizer = OptimizerKind::sgd_momentum;
  double momentum = 0.9;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  uint64_t seed = 0;

  void validate() const;  ///< throws InvalidConfigError
};

/// Step schedule: lr0 * factor^floor(epoch / every), epoch 0-based.
double lr_at_epoch(const TrainPolicy& policy, int epoch);

/// SGD-with-momentum or Adam over a fixed parameter registry; weight decay
/// is applied as an L2 gradient term on trainable parameters.
class Optimizer {
 public:
  Optimizer(const TrainPolicy& policy, std::vector<nn::ParamRef> params);
  void step(double lr);

 private:
  TrainPolicy policy_;
  std::vector<nn::ParamRef> params_;
  std::vector<Tensor> slot1_, slot2_;  // momentum / adam moments
  int64_t t_ = 0;
};

enum class DiversityVariant { plain, weighted };

std::string to_string(DiversityVariant variant);
DiversityVariant diversity_variant_from_string(const std::string& s);

struct DeGANConfig {
  LossWeights weights;  ///< lambda_d, lambda_e
  DiversityVariant variant = DiversityVariant::weighted;
};

struct MixedBatchSpec {
  int alpha = 8;   ///< proxy images per batch
  int beta = 8;    ///< generated images per batch
  int n_batch = 16;

  void validate() const;  ///< alpha + beta == n_batch, both >= 0
};

struct EpochStats {
  int epoch = 0;  ///< 1-based in records and logs
  std::map<std::string, double> losses;
  double lr = 0.0;
  double wall_time_s = 0.0;
};

struct RunRecord {
  std::vector<EpochStats> epochs;
  std::string final_checkpoint;
  std::string config_echo;
  uint64_t seed = 0;

  /// JSON Lines, one object per epoch: {epoch, losses.*, lr, wall_time_s}.
  void write_jsonl(const std::filesystem::path& path) const;
};

struct TeacherTrainResult {
  SegNet teacher;
  RunRecord record;
};

/// Supervised cross-entropy training. Persists a checkpoint plus
/// runlog.jsonl under artifacts_dir when given.
TeacherTrainResult train_teacher(const Dataset& dataset, const TrainPolicy& policy,
                                 const ModelConfig& teacher_config,
                                 const std::filesystem::path& artifacts_dir = {});

struct GanStepEvent {
  char player;  ///< 'D' or 'G'
  int epoch;    ///< 0-based
  int step;     ///< 0-based within the epoch
};

struct GanOptions {
  std::function<void(const GanStepEvent&)> on_step;
};

struct GanTrainResult {
  Generator generator;
  Discriminator discriminator;
  RunRecord record;
};

/// Alternating adversarial training: one discriminator step then one
/// generator step per proxy batch. With a DeGAN config, generated images
/// pass through the frozen teacher and the generator objective adds the
/// configured entropy/diversity terms; the teacher receives no updates.
GanTrainResult train_gan(const UnlabeledDataset& proxy,
                         const ModelConfig& generator_config,
                         const ModelConfig& discriminator_config,
                         const TrainPolicy& policy,
                         const std::optional<DeGANConfig>& degan = std::nullopt,
                         SegNet* teacher = nullptr,
                         const GanOptions& options = {},
                         const std::filesystem::path& artifacts_dir = {});

/// n_batch images: the first alpha rows of proxy_images followed by beta
/// freshly generated images (eval-mode generator, seeded latents), then a
/// deterministic shuffle of the combined batch.
Tensor make_mixed_batch(const Tensor& proxy_images, Generator& generator,
                        const MixedBatchSpec& spec, uint64_t z_seed);

enum class DistillSourceKind { proxy, generator, mixed };

std::string to_string(DistillSourceKind kind);
DistillSourceKind distill_source_from_string(const std::string& s);

struct DistillSource {
  DistillSourceKind kind = DistillSourceKind::proxy;
  const UnlabeledDataset* proxy = nullptr;  ///< required (epoch sizing)
  Generator* generator = nullptr;           ///< required unless kind == proxy
  MixedBatchSpec mix;                       ///< used when kind == mixed
};

struct DistillResult {
  SegNet student;
  RunRecord record;
};

/// Trains a student by minimizing KL(teacher || student) on batches from
/// the configured source. No ground-truth labels are reachable from this
/// surface, and the teacher is only ever run forward in eval mode.
DistillResult distill(SegNet& teacher, const ModelConfig& student_config,
                      const DistillSource& source, const TrainPolicy& policy,
                      const std::filesystem::path& artifacts_dir = {});

struct LambdaCell {
  double lambda_e = 0.0;
  double lambda_d = 0.0;
  DiversityVariant variant = DiversityVariant::plain;
};

struct AblationRow {
  std::string cell_id;
  double lambda_e = 0.0;
  double lambda_d = 0.0;
  std::string variant;
  int alpha = 0;
  int beta = 0;
  int seed = 0;  ///< seed index within the run
  double mean_iou = 0.0;
  double pixel_acc = 0.0;
  bool failed = false;
  std::string error;
};

struct AblationConfig {
  std::vector<LambdaCell> lambda_grid;   ///< distilled from pure generated data
  std::vector<MixedBatchSpec> mix_grid;  ///< distilled from mixed batches
  DeGANConfig mix_degan;                 ///< generator config for mix cells
  int seeds = 3;
  int jobs = 1;
  TrainPolicy gan_policy;
  TrainPolicy distill_policy;
  ModelConfig generator_config;
  ModelConfig discriminator_config;
  ModelConfig student_config;
  uint64_t base_seed = 0;
};

/// Trains a GAN and distills a student for every grid cell x seed, and
/// evaluates each student on eval_set. Failed cells are recorded and do not
/// stop the run. Cells are independent; up to `jobs` run concurrently, and
/// each finished cell's artifacts are written atomically.
std::vector<AblationRow> run_ablation(const SegNet& teacher,
                                      const UnlabeledDataset& proxy,
                                      const Dataset& eval_set,
                                      const AblationConfig& config,
                                      const std::filesystem::path& artifacts_dir);

/// Header: cell_id,lambda_e,lambda_d,variant,alpha,beta,seed,mean_iou,pixel_acc
void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationRow>& rows);

}  // namespace dfseg
