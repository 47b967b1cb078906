// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfseg {

/// Bad runtime data: simplex violations, NaN inputs, shape mismatches.
class InvalidInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad configuration: out-of-range fields, unknown keys, impossible specs.
class InvalidConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A required artifact (checkpoint, dataset dump) is absent.
class MissingDependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged (NaN/Inf loss). Message carries epoch and step.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Derives independent stream seeds from one root seed. The tag keeps
/// streams (data, init, shuffle, latents, dropout) decorrelated.
uint64_t derive_seed(uint64_t root, uint64_t stream);
uint64_t derive_seed(uint64_t root, const std::string& tag);

/// Deterministic RNG with explicitly specified scalar distributions, so
/// results do not depend on the standard library's distribution
/// implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);

  /// Standard normal via Box-Muller with a cached spare.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// FNV-1a 64-bit hash, used for cheap content-identity checks.
uint64_t fnv1a64(const void* data, std::size_t n);
uint64_t fnv1a64_file(const std::filesystem::path& path);

/// Write-to-temp-then-rename so readers never observe partial files.
void atomic_write_file(const std::filesystem::path& path,
                       const std::string& contents);
void atomic_write_file(const std::filesystem::path& path, const void* data,
                       std::size_t n);

/// Reads a whole file; throws MissingDependencyError naming the path.
std::string read_file(const std::filesystem::path& path);

}  // namespace dfseg
