// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfseg/models.hpp"
#include "dfseg/shapesdata.hpp"
#include "dfseg/tensor.hpp"

namespace dfseg {

/// K x K pixel counts; rows are ground-truth classes, columns predictions.
/// Accumulation is associative, so per-image matrices merge by addition.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return k_; }
  uint64_t at(int truth, int pred) const {
    return counts_[static_cast<std::size_t>(truth) * k_ + pred];
  }
  void add(int truth, int pred, uint64_t count = 1);
  void merge(const ConfusionMatrix& other);
  uint64_t total() const;
  uint64_t diagonal() const;

 private:
  int k_ = 0;
  std::vector<uint64_t> counts_;
};

/// Adds one count per pixel at (truth, pred). Throws on shape mismatch or
/// out-of-range class ids.
void accumulate_confusion(const LabelMap& pred, const LabelMap& truth,
                          ConfusionMatrix& cm);

/// Per-class intersection-over-union; nullopt for classes absent from both
/// prediction and ground truth (zero union).
std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm);

/// Mean IoU over classes with nonzero union. Throws on an all-zero matrix.
double mean_iou(const ConfusionMatrix& cm);

/// trace / total. Throws on an all-zero matrix.
double pixel_accuracy(const ConfusionMatrix& cm);

struct EvalReport {
  double mean_iou = 0.0;
  double pixel_accuracy = 0.0;
  std::vector<std::optional<double>> per_class_iou;
  ConfusionMatrix confusion;
  int n_images = 0;
};

/// Argmax class per pixel for image n of a softmax map; ties break to the
/// lowest class index.
LabelMap argmax_labels(const Tensor& softmax_map, int image_index);

/// Runs the segmenter in eval mode over a labeled dataset and scores the
/// argmax predictions against ground truth.
EvalReport evaluate_model(SegNet& segnet, const Dataset& dataset,
                          int batch_size = 16);

/// Class distribution of teacher argmax predictions over n_samples freshly
/// generated images (the pie-chart data of the distribution reports).
Tensor generated_distribution_report(Generator& generator, SegNet& teacher,
                                     int n_samples, uint64_t seed,
                                     int batch_size = 16);

/// Shannon entropy (nats) of a class distribution; the scalar used by the
/// diversity comparisons.
double distribution_entropy(const Tensor& distribution);

/// JSON serialization, with optional provenance (config echo, seed).
std::string eval_report_to_json(const EvalReport& report,
                                const std::string& config_echo = "",
                                std::optional<uint64_t> seed = std::nullopt);

/// CSV rows "class_id,fraction" for external plotting.
void write_distribution_csv(const std::filesystem::path& path, const Tensor& dist);

}  // namespace dfseg
