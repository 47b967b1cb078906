// SPDX-License-Identifier: Apache-2.0
//
// ShapesSeg: a deterministic synthetic segmentation dataset. Scenes are
// lists of colored shapes rasterized over a background; labels follow the
// shape geometry exactly, with later shapes occluding earlier ones. A
// class-dropped, reweighted variant of the same renderer acts as the
// unlabeled proxy domain.
#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "dfseg/tensor.hpp"

namespace dfseg {

enum class ShapeKind {
  circle,
  square,
  triangle,
  horizontal_stripe,
  vertical_stripe,
};

std::string to_string(ShapeKind kind);

struct ShapeSpec {
  int class_id = 1;  ///< in [1, K); class 0 is reserved for background
  ShapeKind kind = ShapeKind::circle;
  double cx = 0.0, cy = 0.0;  ///< center, pixel units
  double scale = 0.0;         ///< diameter / side / height / thickness
  std::array<double, 3> fill{0.0, 0.0, 0.0};  ///< RGB in [-1, 1]
};

struct SceneSpec {
  int height = 32, width = 32;
  int num_classes = 6;
  std::array<double, 3> background{-0.85, -0.82, -0.75};
  std::vector<ShapeSpec> shapes;  ///< painted in order; later occludes earlier
};

struct LabelMap {
  int height = 0, width = 0;
  std::vector<uint8_t> v;

  LabelMap() = default;
  LabelMap(int h, int w) : height(h), width(w), v(static_cast<std::size_t>(h) * w, 0) {}
  uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * width + x]; }
};

struct LabeledSample {
  Tensor image;    ///< (3, H, W) in [-1, 1]
  LabelMap labels; ///< (H, W) class ids in [0, K)
};

/// True whether the pixel with center (x+0.5, y+0.5) lies inside the shape.
bool shape_covers(const ShapeSpec& shape, int y, int x);

/// Rasterizes a scene. Shapes partly outside the canvas are clipped
/// silently; a nonpositive scale is an invalid spec.
LabeledSample render_scene(const SceneSpec& spec);

struct DatasetConfig {
  int n_images = 1000;
  int num_classes = 6;  ///< including background
  /// Probability that an image contains each non-background class.
  std::vector<double> class_frequency = {0.9, 0.7, 0.5, 0.2, 0.05};
  std::vector<int> dropped_classes;  ///< never drawn (proxy mode)
  uint64_t seed = 0;
  int image_h = 32, image_w = 32;

  void validate() const;  ///< throws InvalidConfigError
};

/// In-memory dataset. Label access is counted so tests can audit that
/// data-free operations never touch ground truth.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<LabeledSample> samples, DatasetConfig config);
  Dataset(const Dataset& other);
  Dataset& operator=(const Dataset& other);

  int size() const { return static_cast<int>(samples_.size()); }
  const Tensor& image(int i) const { return samples_[static_cast<std::size_t>(i)].image; }
  const LabelMap& labels(int i) const {
    label_reads_.fetch_add(1, std::memory_order_relaxed);
    return samples_[static_cast<std::size_t>(i)].labels;
  }
  uint64_t label_reads() const { return label_reads_.load(std::memory_order_relaxed); }
  const DatasetConfig& config() const { return config_; }

 private:
  std::vector<LabeledSample> samples_;
  DatasetConfig config_;
  mutable std::atomic<uint64_t> label_reads_{0};
};

/// The scene behind sample `index` of a generated dataset; exposed so the
/// emitted label maps can be re-derived from geometry independently.
SceneSpec sample_scene(const DatasetConfig& config, int index);

/// Pure function of the config: same config, same dataset, bit for bit.
/// Sample i is exactly render_scene(sample_scene(config, i)).
Dataset generate_dataset(const DatasetConfig& config);

/// Pixel-count fraction per class over a label collection; length K.
Tensor class_pixel_histogram(const std::vector<const LabelMap*>& labels, int num_classes);
Tensor class_pixel_histogram(const Dataset& dataset);

/// Images only; constructing one is the only sanctioned way to feed
/// datasets into the data-free operations (their signatures cannot reach a
/// LabelMap at all).
struct UnlabeledDataset {
  std::vector<Tensor> images;
  int image_h = 0, image_w = 0;
  int size() const { return static_cast<int>(images.size()); }
};

UnlabeledDataset drop_labels(const Dataset& dataset);

struct Batch {
  Tensor images;                ///< (n, 3, H, W)
  std::vector<LabelMap> labels; ///< empty when the stream has with_labels=false
  std::vector<int> indices;     ///< dataset indices, for provenance
};

/// Epoch-wise shuffled batches; order is a pure function of
/// (shuffle_seed, epoch). The final partial batch is emitted.
class BatchStream {
 public:
  BatchStream(const Dataset& dataset, int batch_size, uint64_t shuffle_seed,
              bool with_labels);
  void start_epoch(int epoch);
  bool next(Batch& out);
  bool with_labels() const { return with_labels_; }

 private:
  const Dataset* dataset_;
  int batch_size_;
  uint64_t shuffle_seed_;
  bool with_labels_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
};

class UnlabeledBatchStream {
 public:
  UnlabeledBatchStream(const UnlabeledDataset& dataset, int batch_size,
                       uint64_t shuffle_seed);
  void start_epoch(int epoch);
  bool next(Tensor& images);
  /// Deterministic wrap-around draw of exactly n images (mixed batches).
  Tensor take(int n);

 private:
  const UnlabeledDataset* dataset_;
  int batch_size_;
  uint64_t shuffle_seed_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
  int epoch_ = 0;
};

/// On-disk dump: binary PPM (P6) images mapped from [-1,1] to [0,255],
/// binary PGM (P5) labels with pixel value = class id, and an index.json
/// carrying the file list, config echo, and seed.
void dump_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace dfseg
