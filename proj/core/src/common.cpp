// SPDX-License-Identifier: Apache-2.0
#include "dfseg/common.hpp"

#include <fstream>
#include <cmath>
#include <system_error>

namespace dfseg {

namespace {

uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

uint64_t derive_seed(uint64_t root, uint64_t stream) {
  uint64_t state = root ^ (0x633a4d62b1c0a9e3ULL + stream * 0x9e3779b97f4a7c15ULL);
  uint64_t s = splitmix64(state);
  return splitmix64(state) ^ s;
}

uint64_t derive_seed(uint64_t root, const std::string& tag) {
  return derive_seed(root, fnv1a64(tag.data(), tag.size()));
}

int Rng::uniform_int(int lo, int hi) {
  // Rejection-free modulo bias is irrelevant at these ranges, but rejection
  // keeps the draw exact.
  const uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
  const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return lo + static_cast<int>(x % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; 1 - u avoids log(0).
  const double u = 1.0 - uniform();
  const double v = uniform();
  const double r = std::sqrt(-2.0 * std::log(u));
  const double theta = 2.0 * 3.14159265358979323846 * v;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::vector<int> Rng::permutation(int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = uniform_int(0, i);
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t fnv1a64_file(const std::filesystem::path& path) {
  const std::string contents = read_file(path);
  return fnv1a64(contents.data(), contents.size());
}

void atomic_write_file(const std::filesystem::path& path, const void* data,
                       std::size_t n) {
  const std::filesystem::path dir = path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot open for write: " + tmp.string());
    }
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) {
      throw std::runtime_error("short write: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

void atomic_write_file(const std::filesystem::path& path,
                       const std::string& contents) {
  atomic_write_file(path, contents.data(), contents.size());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw MissingDependencyError("missing file: " + path.string());
  }
  std::string contents((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  return contents;
}

}  // namespace dfseg
