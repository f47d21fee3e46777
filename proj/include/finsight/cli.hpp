// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line entry point. Every subcommand writes machine-readable
// outputs plus one run manifest.

#ifndef FINSIGHT_CLI_HPP_
#define FINSIGHT_CLI_HPP_

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace finsight::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSeedEnv = "FINSIGHT_SEED";

enum ExitCode : int { kOk = 0, kToleranceFailure = 1, kUsageError = 2 };

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Manifest path a run writes next to its primary output.
std::filesystem::path manifest_path_for(const std::filesystem::path& output, bool is_dir);

// Manifest without the wall-clock field, for comparing reruns.
nlohmann::json strip_wall_clock(nlohmann::json manifest);

}  // namespace finsight::cli

#endif  // FINSIGHT_CLI_HPP_
