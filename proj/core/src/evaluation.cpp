// SPDX-License-Identifier: Apache-2.0
#include "dfseg/evaluation.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dfseg/common.hpp"

namespace dfseg {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw InvalidInputError("confusion matrix needs K >= 1");
}

void ConfusionMatrix::add(int truth, int pred, uint64_t count) {
  if (truth < 0 || truth >= k_ || pred < 0 || pred >= k_) {
    throw InvalidInputError("confusion matrix class id out of range");
  }
  counts_[static_cast<std::size_t>(truth) * k_ + pred] += count;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw InvalidInputError("confusion matrix size mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

uint64_t ConfusionMatrix::total() const {
  uint64_t t = 0;
  for (uint64_t v : counts_) t += v;
  return t;
}

uint64_t ConfusionMatrix::diagonal() const {
  uint64_t t = 0;
  for (int i = 0; i < k_; ++i) t += at(i, i);
  return t;
}

void accumulate_confusion(const LabelMap& pred, const LabelMap& truth,
                          ConfusionMatrix& cm) {
  if (pred.height != truth.height || pred.width != truth.width) {
    throw InvalidInputError("prediction/truth label maps differ in shape");
  }
  for (std::size_t i = 0; i < truth.v.size(); ++i) {
    cm.add(truth.v[i], pred.v[i]);
  }
}

std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  std::vector<std::optional<double>> ious(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    uint64_t row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const uint64_t inter = cm.at(c, c);
    const uint64_t uni = row + col - inter;
    if (uni > 0) {
      ious[static_cast<std::size_t>(c)] =
          static_cast<double>(inter) / static_cast<double>(uni);
    }
  }
  return ious;
}

double mean_iou(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw InvalidInputError("mean IoU of an empty matrix");
  const auto ious = per_class_iou(cm);
  double sum = 0.0;
  int n = 0;
  for (const auto& iou : ious) {
    if (iou.has_value()) {
      sum += *iou;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

double pixel_accuracy(const ConfusionMatrix& cm) {
  const uint64_t total = cm.total();
  if (total == 0) throw InvalidInputError("pixel accuracy of an empty matrix");
  return static_cast<double>(cm.diagonal()) / static_cast<double>(total);
}

LabelMap argmax_labels(const Tensor& softmax_map, int image_index) {
  const int k = softmax_map.dim(1), h = softmax_map.dim(2), w = softmax_map.dim(3);
  LabelMap out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int best = 0;
      double best_v = softmax_map.at(image_index, 0, y, x);
      for (int c = 1; c < k; ++c) {
        const double v = softmax_map.at(image_index, c, y, x);
        if (v > best_v) {  // strict: ties keep the lowest class index
          best_v = v;
          best = c;
        }
      }
      out.at(y, x) = static_cast<uint8_t>(best);
    }
  }
  return out;
}

EvalReport evaluate_model(SegNet& segnet, const Dataset& dataset, int batch_size) {
  if (dataset.size() == 0) throw InvalidInputError("evaluation dataset is empty");
  const int k = segnet.config().num_classes;
  ConfusionMatrix cm(k);
  BatchStream stream(dataset, batch_size, /*shuffle_seed=*/0, /*with_labels=*/true);
  stream.start_epoch(0);
  Batch batch;
  while (stream.next(batch)) {
    const Tensor probs = segnet.forward(batch.images, /*train=*/false);
    for (int i = 0; i < batch.images.dim(0); ++i) {
      const LabelMap pred = argmax_labels(probs, i);
      accumulate_confusion(pred, batch.labels[static_cast<std::size_t>(i)], cm);
    }
  }
  EvalReport report;
  report.confusion = cm;
  report.mean_iou = mean_iou(cm);
  report.pixel_accuracy = pixel_accuracy(cm);
  report.per_class_iou = per_class_iou(cm);
  report.n_images = dataset.size();
  return report;
}

Tensor generated_distribution_report(Generator& generator, SegNet& teacher,
                                     int n_samples, uint64_t seed,
                                     int batch_size) {
  if (n_samples < 1) throw InvalidInputError("need n_samples >= 1");
  Rng rng(derive_seed(seed, "distribution.report"));
  const int k = teacher.config().num_classes;
  Tensor counts({k});
  int remaining = n_samples;
  while (remaining > 0) {
    const int n = std::min(remaining, batch_size);
    Tensor z({n, generator.config().latent_dim});
    for (int64_t i = 0; i < z.numel(); ++i) z[i] = rng.normal();
    const Tensor images = generator.forward(z, /*train=*/false);
    const Tensor probs = teacher.forward(images, /*train=*/false);
    for (int i = 0; i < n; ++i) {
      const LabelMap pred = argmax_labels(probs, i);
      for (uint8_t v : pred.v) counts.at(v) += 1.0;
    }
    remaining -= n;
  }
  counts.scale(1.0 / counts.sum());
  return counts;
}

double distribution_entropy(const Tensor& distribution) {
  double e = 0.0;
  for (int i = 0; i < distribution.dim(0); ++i) {
    const double p = distribution.at(i);
    if (p > 0.0) e -= p * std::log(p);
  }
  return e;
}

std::string eval_report_to_json(const EvalReport& report,
                                const std::string& config_echo,
                                std::optional<uint64_t> seed) {
  json j;
  j["mean_iou"] = report.mean_iou;
  j["pixel_accuracy"] = report.pixel_accuracy;
  json ious = json::array();
  for (const auto& iou : report.per_class_iou) {
    if (iou.has_value()) {
      ious.push_back(*iou);
    } else {
      ious.push_back(nullptr);
    }
  }
  j["per_class_iou"] = ious;
  const int k = report.confusion.num_classes();
  json cm = json::array();
  for (int t = 0; t < k; ++t) {
    json row = json::array();
    for (int p = 0; p < k; ++p) row.push_back(report.confusion.at(t, p));
    cm.push_back(row);
  }
  j["confusion"] = cm;
  j["n_images"] = report.n_images;
  if (!config_echo.empty()) j["config_echo"] = config_echo;
  if (seed.has_value()) j["seed"] = *seed;
  return j.dump(2) + "\n";
}

void write_distribution_csv(const std::filesystem::path& path, const Tensor& dist) {
  std::ostringstream out;
  out << "class_id,fraction\n";
  for (int i = 0; i < dist.dim(0); ++i) {
    out << i << "," << dist.at(i) << "\n";
  }
  atomic_write_file(path, out.str());
}

}  // namespace dfseg
