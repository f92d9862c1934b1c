#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddbh/config.hpp"
#include "ddbh/io.hpp"

namespace ddbh::cli {

struct CommandOutput {
  RunManifest manifest;
  int exit_code = 0;  ///< 0, or 2 when some points failed numerically
  std::vector<std::string> warnings;
};

/// Each command writes its CSV tables and manifest.json under out_dir.
/// UsageError and NumericalError propagate for whole-command failures;
/// per-point numerical failures are recorded in the tables and reported
/// through exit_code = 2.
CommandOutput cmd_meanfield(const RunConfig& config, const std::filesystem::path& out_dir);
CommandOutput cmd_sweep(const RunConfig& config, const std::filesystem::path& out_dir);
CommandOutput cmd_histogram(const RunConfig& config, const std::filesystem::path& out_dir);
CommandOutput cmd_gap(const RunConfig& config, const std::filesystem::path& out_dir);
CommandOutput cmd_benchmark(const RunConfig& config, const std::filesystem::path& out_dir);

CommandOutput run_command(const std::string& name, const RunConfig& config, const std::filesystem::path& out_dir);

/// Entry point shared by the binary and the tests. Returns the exit code.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ddbh::cli
