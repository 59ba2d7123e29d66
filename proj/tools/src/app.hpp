#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace biasaudit {

inline constexpr const char* kToolName = "biasaudit";
inline constexpr const char* kToolVersion = "0.1.0";

/// Parsed command line. Flag values override the config file.
struct CliOptions {
  std::string command;
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool force = false;
  std::optional<double> p_threshold;
  std::optional<double> epsilon;
  std::string format;  // graph artifact filter: dot | json | csv (default all)
  bool global = false;
};

/// Exit codes shared with the test suites.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDataError = 3;
inline constexpr int kExitProviderError = 4;
inline constexpr int kExitMitigationIncomplete = 5;

/// Runs one subcommand end to end; returns the process exit code.
/// Engine errors map to the exit codes above in main().
int run_command(const CliOptions& opts);

}  // namespace biasaudit
