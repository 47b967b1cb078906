// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace dfseg::cli {

struct CommonArgs {
  std::string config_path;          // empty: built-in defaults
  std::string out_dir;              // overrides config output_dir
  std::optional<uint64_t> seed;     // overrides config global_seed
};

// Exit codes: 0 success, 2 config error, 3 missing dependency,
// 4 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitMissingDependency = 3;
inline constexpr int kExitNumericalFailure = 4;

int cmd_gen_data(const CommonArgs& args);
int cmd_train(const CommonArgs& args, const std::string& stage);
int cmd_eval(const CommonArgs& args, const std::string& checkpoint);
int cmd_ablate(const CommonArgs& args, std::optional<int> jobs);
int cmd_report(const CommonArgs& args);

}  // namespace dfseg::cli
