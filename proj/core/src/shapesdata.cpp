// SPDX-License-Identifier: Apache-2.0
#include "dfseg/shapesdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

#include "dfseg/common.hpp"

namespace dfseg {

namespace {

using nlohmann::json;

// Fixed class palette (RGB in [-1, 1]); chosen well separated so class is
// learnable from appearance. Index 0 is unused (background comes from the
// scene spec).
constexpr std::array<std::array<double, 3>, 6> kPalette{{
    {0.0, 0.0, 0.0},
    {0.85, -0.60, -0.60},   // red
    {-0.60, 0.80, -0.55},   // green
    {-0.55, -0.50, 0.90},   // blue
    {0.85, 0.80, -0.70},    // yellow
    {0.80, -0.65, 0.80},    // magenta
}};

ShapeKind class_default_kind(int class_id) {
  switch ((class_id - 1) % 5) {
    case 0: return ShapeKind::circle;
    case 1: return ShapeKind::square;
    case 2: return ShapeKind::triangle;
    case 3: return ShapeKind::horizontal_stripe;
    default: return ShapeKind::vertical_stripe;
  }
}

uint8_t to_byte(double v) {
  const double scaled = (v + 1.0) * 0.5 * 255.0;
  return static_cast<uint8_t>(std::lround(std::clamp(scaled, 0.0, 255.0)));
}

double from_byte(uint8_t b) { return static_cast<double>(b) / 255.0 * 2.0 - 1.0; }

}  // namespace

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
    case ShapeKind::horizontal_stripe: return "horizontal_stripe";
    case ShapeKind::vertical_stripe: return "vertical_stripe";
  }
  return "unknown";
}

bool shape_covers(const ShapeSpec& shape, int y, int x) {
  const double px = x + 0.5;
  const double py = y + 0.5;
  const double half = shape.scale / 2.0;
  switch (shape.kind) {
    case ShapeKind::circle: {
      const double dx = px - shape.cx;
      const double dy = py - shape.cy;
      return dx * dx + dy * dy <= half * half;
    }
    case ShapeKind::square:
      return std::abs(px - shape.cx) <= half && std::abs(py - shape.cy) <= half;
    case ShapeKind::triangle: {
      // Upward isoceles triangle: apex at cy - half, base at cy + half.
      const double from_apex = py - (shape.cy - half);
      if (from_apex < 0.0 || from_apex > shape.scale) return false;
      return std::abs(px - shape.cx) <= from_apex / 2.0;
    }
    case ShapeKind::horizontal_stripe:
      return std::abs(py - shape.cy) <= half;
    case ShapeKind::vertical_stripe:
      return std::abs(px - shape.cx) <= half;
  }
  return false;
}

LabeledSample render_scene(const SceneSpec& spec) {
  if (spec.height < 1 || spec.width < 1) {
    throw InvalidConfigError("scene canvas must be nonempty");
  }
  for (const ShapeSpec& s : spec.shapes) {
    if (s.scale <= 0.0) throw InvalidConfigError("zero-area shape in scene spec");
    if (s.class_id < 1 || s.class_id >= spec.num_classes) {
      throw InvalidConfigError("shape class_id outside [1, K)");
    }
  }
  LabeledSample out;
  out.image = Tensor({3, spec.height, spec.width});
  out.labels = LabelMap(spec.height, spec.width);
  const int64_t plane_size = static_cast<int64_t>(spec.height) * spec.width;
  for (int c = 0; c < 3; ++c) {
    double* plane = out.image.data() + c * plane_size;
    for (int64_t i = 0; i < plane_size; ++i) {
      plane[i] = spec.background[static_cast<std::size_t>(c)];
    }
  }
  for (const ShapeSpec& s : spec.shapes) {
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        if (shape_covers(s, y, x)) {
          out.labels.at(y, x) = static_cast<uint8_t>(s.class_id);
          for (int c = 0; c < 3; ++c) {
            out.image.data()[c * plane_size + y * spec.width + x] =
                s.fill[static_cast<std::size_t>(c)];
          }
        }
      }
    }
  }
  return out;
}

void DatasetConfig::validate() const {
  if (n_images < 0) throw InvalidConfigError("n_images must be >= 0");
  if (num_classes < 2) throw InvalidConfigError("need at least 2 classes");
  if (image_h % 8 != 0 || image_w % 8 != 0 || image_h < 8 || image_w < 8) {
    throw InvalidConfigError("image size must be divisible by 8");
  }
  if (static_cast<int>(class_frequency.size()) != num_classes - 1) {
    throw InvalidConfigError("class_frequency must have K-1 entries");
  }
  for (double f : class_frequency) {
    if (!(f > 0.0) || f > 1.0) {
      throw InvalidConfigError("class frequencies must lie in (0, 1]");
    }
  }
  for (int c : dropped_classes) {
    if (c < 1 || c >= num_classes) {
      throw InvalidConfigError("dropped class outside [1, K)");
    }
  }
}

Dataset::Dataset(std::vector<LabeledSample> samples, DatasetConfig config)
    : samples_(std::move(samples)), config_(std::move(config)) {}

Dataset::Dataset(const Dataset& other)
    : samples_(other.samples_), config_(other.config_),
      label_reads_(other.label_reads_.load()) {}

Dataset& Dataset::operator=(const Dataset& other) {
  samples_ = other.samples_;
  config_ = other.config_;
  label_reads_.store(other.label_reads_.load());
  return *this;
}

SceneSpec sample_scene(const DatasetConfig& config, int index) {
  const double min_side = std::min(config.image_h, config.image_w);
  Rng rng(derive_seed(config.seed, static_cast<uint64_t>(index) + 0x5eedULL));
  SceneSpec scene;
  scene.height = config.image_h;
  scene.width = config.image_w;
  scene.num_classes = config.num_classes;
  for (int c = 0; c < 3; ++c) {
    scene.background[static_cast<std::size_t>(c)] = std::clamp(
        scene.background[static_cast<std::size_t>(c)] + rng.uniform(-0.05, 0.05),
        -1.0, 1.0);
  }

  std::vector<int> present;
  for (int cls = 1; cls < config.num_classes; ++cls) {
    const bool dropped =
        std::find(config.dropped_classes.begin(), config.dropped_classes.end(),
                  cls) != config.dropped_classes.end();
    const double f = config.class_frequency[static_cast<std::size_t>(cls - 1)];
    const double draw = rng.uniform();
    if (!dropped && draw < f) present.push_back(cls);
  }
  // Random z-order so no class systematically occludes another.
  const std::vector<int> order = rng.permutation(static_cast<int>(present.size()));

  for (int pos : order) {
    const int cls = present[static_cast<std::size_t>(pos)];
    ShapeSpec s;
    s.class_id = cls;
    s.kind = class_default_kind(cls);
    s.cx = rng.uniform(0.2, 0.8) * config.image_w;
    s.cy = rng.uniform(0.2, 0.8) * config.image_h;
    if (s.kind == ShapeKind::horizontal_stripe ||
        s.kind == ShapeKind::vertical_stripe) {
      s.scale = rng.uniform(0.12, 0.24) * min_side;
    } else {
      s.scale = rng.uniform(0.30, 0.55) * min_side;
    }
    for (int c = 0; c < 3; ++c) {
      s.fill[static_cast<std::size_t>(c)] = std::clamp(
          kPalette[static_cast<std::size_t>(cls)][static_cast<std::size_t>(c)] +
              rng.uniform(-0.08, 0.08),
          -1.0, 1.0);
    }
    scene.shapes.push_back(s);
  }
  return scene;
}

Dataset generate_dataset(const DatasetConfig& config) {
  config.validate();
  std::vector<LabeledSample> samples;
  samples.reserve(static_cast<std::size_t>(config.n_images));
  for (int idx = 0; idx < config.n_images; ++idx) {
    samples.push_back(render_scene(sample_scene(config, idx)));
  }
  return Dataset(std::move(samples), config);
}

Tensor class_pixel_histogram(const std::vector<const LabelMap*>& labels,
                             int num_classes) {
  if (labels.empty()) {
    throw InvalidInputError("class_pixel_histogram: empty label collection");
  }
  Tensor hist({num_classes});
  uint64_t total = 0;
  for (const LabelMap* map : labels) {
    for (uint8_t v : map->v) {
      if (v >= num_classes) {
        throw InvalidInputError("label id out of range in histogram");
      }
      hist.at(v) += 1.0;
      ++total;
    }
  }
  hist.scale(1.0 / static_cast<double>(total));
  return hist;
}

Tensor class_pixel_histogram(const Dataset& dataset) {
  std::vector<const LabelMap*> maps;
  maps.reserve(static_cast<std::size_t>(dataset.size()));
  for (int i = 0; i < dataset.size(); ++i) maps.push_back(&dataset.labels(i));
  return class_pixel_histogram(maps, dataset.config().num_classes);
}

UnlabeledDataset drop_labels(const Dataset& dataset) {
  UnlabeledDataset out;
  out.image_h = dataset.config().image_h;
  out.image_w = dataset.config().image_w;
  out.images.reserve(static_cast<std::size_t>(dataset.size()));
  for (int i = 0; i < dataset.size(); ++i) out.images.push_back(dataset.image(i));
  return out;
}

// ---------------------------------------------------------------------------
// Batch streams
// ---------------------------------------------------------------------------

namespace {

Tensor stack_images(const std::vector<const Tensor*>& images) {
  const int n = static_cast<int>(images.size());
  const int c = images[0]->dim(0), h = images[0]->dim(1), w = images[0]->dim(2);
  Tensor out({n, c, h, w});
  const int64_t per = static_cast<int64_t>(c) * h * w;
  for (int i = 0; i < n; ++i) {
    std::copy(images[static_cast<std::size_t>(i)]->data(),
              images[static_cast<std::size_t>(i)]->data() + per,
              out.data() + i * per);
  }
  return out;
}

}  // namespace

BatchStream::BatchStream(const Dataset& dataset, int batch_size,
                         uint64_t shuffle_seed, bool with_labels)
    : dataset_(&dataset), batch_size_(batch_size), shuffle_seed_(shuffle_seed),
      with_labels_(with_labels) {
  if (batch_size < 1) throw InvalidConfigError("batch_size must be >= 1");
  start_epoch(0);
}

void BatchStream::start_epoch(int epoch) {
  Rng rng(derive_seed(shuffle_seed_, static_cast<uint64_t>(epoch)));
  order_ = rng.permutation(dataset_->size());
  cursor_ = 0;
}

bool BatchStream::next(Batch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(cursor_ + static_cast<std::size_t>(batch_size_),
                                   order_.size());
  std::vector<const Tensor*> images;
  out.labels.clear();
  out.indices.clear();
  for (std::size_t i = cursor_; i < end; ++i) {
    const int idx = order_[i];
    images.push_back(&dataset_->image(idx));
    out.indices.push_back(idx);
    if (with_labels_) out.labels.push_back(dataset_->labels(idx));
  }
  out.images = stack_images(images);
  cursor_ = end;
  return true;
}

UnlabeledBatchStream::UnlabeledBatchStream(const UnlabeledDataset& dataset,
                                           int batch_size, uint64_t shuffle_seed)
    : dataset_(&dataset), batch_size_(batch_size), shuffle_seed_(shuffle_seed) {
  if (batch_size < 1) throw InvalidConfigError("batch_size must be >= 1");
  if (dataset.images.empty()) {
    throw InvalidInputError("unlabeled dataset is empty");
  }
  start_epoch(0);
}

void UnlabeledBatchStream::start_epoch(int epoch) {
  epoch_ = epoch;
  Rng rng(derive_seed(shuffle_seed_, static_cast<uint64_t>(epoch)));
  order_ = rng.permutation(dataset_->size());
  cursor_ = 0;
}

bool UnlabeledBatchStream::next(Tensor& images) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(cursor_ + static_cast<std::size_t>(batch_size_),
                                   order_.size());
  std::vector<const Tensor*> batch;
  for (std::size_t i = cursor_; i < end; ++i) {
    batch.push_back(&dataset_->images[static_cast<std::size_t>(order_[i])]);
  }
  images = stack_images(batch);
  cursor_ = end;
  return true;
}

Tensor UnlabeledBatchStream::take(int n) {
  std::vector<const Tensor*> batch;
  batch.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(batch.size()) < n) {
    if (cursor_ >= order_.size()) start_epoch(++epoch_);
    batch.push_back(&dataset_->images[static_cast<std::size_t>(order_[cursor_++])]);
  }
  return stack_images(batch);
}

// ---------------------------------------------------------------------------
// Disk dump
// ---------------------------------------------------------------------------

namespace {

std::string ppm_bytes(const Tensor& image) {
  const int h = image.dim(1), w = image.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(h) * w * 3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.push_back(
            static_cast<char>(to_byte(image.data()[c * plane + y * w + x])));
      }
    }
  }
  return out;
}

std::string pgm_bytes(const LabelMap& labels) {
  std::string out = "P5\n" + std::to_string(labels.width) + " " +
                    std::to_string(labels.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(labels.v.data()), labels.v.size());
  return out;
}

// Minimal binary PNM reader for the round-trip loader.
struct PnmImage {
  int width = 0, height = 0;
  std::vector<uint8_t> bytes;  // RGB or gray
  int channels = 0;
};

PnmImage read_pnm(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  PnmImage img;
  std::size_t pos = 0;
  auto token = [&data, &pos]() {
    while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  const std::string magic = token();
  if (magic == "P6") {
    img.channels = 3;
  } else if (magic == "P5") {
    img.channels = 1;
  } else {
    throw InvalidInputError("unsupported PNM magic in " + path.string());
  }
  img.width = std::stoi(token());
  img.height = std::stoi(token());
  const int maxval = std::stoi(token());
  if (maxval != 255) throw InvalidInputError("PNM maxval must be 255");
  ++pos;  // single whitespace after header
  const std::size_t need =
      static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (data.size() - pos < need) throw InvalidInputError("PNM body truncated");
  img.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                   data.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

json dataset_config_to_json(const DatasetConfig& cfg) {
  return json{{"n_images", cfg.n_images},
              {"num_classes", cfg.num_classes},
              {"class_frequency", cfg.class_frequency},
              {"dropped_classes", cfg.dropped_classes},
              {"seed", cfg.seed},
              {"image_size", {cfg.image_h, cfg.image_w}}};
}

DatasetConfig dataset_config_from_json(const json& j) {
  DatasetConfig cfg;
  cfg.n_images = j.at("n_images").get<int>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.class_frequency = j.at("class_frequency").get<std::vector<double>>();
  cfg.dropped_classes = j.at("dropped_classes").get<std::vector<int>>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.image_h = j.at("image_size").at(0).get<int>();
  cfg.image_w = j.at("image_size").at(1).get<int>();
  return cfg;
}

}  // namespace

void dump_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  json index;
  index["format_version"] = 1;
  index["seed"] = dataset.config().seed;
  index["config"] = dataset_config_to_json(dataset.config());
  json samples = json::array();
  char name[64];
  for (int i = 0; i < dataset.size(); ++i) {
    std::snprintf(name, sizeof(name), "img_%05d.ppm", i);
    const std::string img_name = name;
    std::snprintf(name, sizeof(name), "lab_%05d.pgm", i);
    const std::string lab_name = name;
    atomic_write_file(dir / img_name, ppm_bytes(dataset.image(i)));
    atomic_write_file(dir / lab_name, pgm_bytes(dataset.labels(i)));
    samples.push_back(json{{"image", img_name}, {"labels", lab_name}});
  }
  index["samples"] = samples;
  atomic_write_file(dir / "index.json", index.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const json index = json::parse(read_file(dir / "index.json"));
  DatasetConfig cfg = dataset_config_from_json(index.at("config"));
  std::vector<LabeledSample> samples;
  for (const json& entry : index.at("samples")) {
    const PnmImage img = read_pnm(dir / entry.at("image").get<std::string>());
    const PnmImage lab = read_pnm(dir / entry.at("labels").get<std::string>());
    LabeledSample sample;
    sample.image = Tensor({3, img.height, img.width});
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          sample.image.data()[static_cast<int64_t>(c) * img.height * img.width +
                              y * img.width + x] =
              from_byte(img.bytes[(static_cast<std::size_t>(y) * img.width + x) * 3 +
                                  static_cast<std::size_t>(c)]);
        }
      }
    }
    sample.labels = LabelMap(lab.height, lab.width);
    std::copy(lab.bytes.begin(), lab.bytes.end(), sample.labels.v.begin());
    samples.push_back(std::move(sample));
  }
  return Dataset(std::move(samples), cfg);
}

}  // namespace dfseg
