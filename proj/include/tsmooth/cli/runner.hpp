#pragma once

// Experiment execution, artifact manifests and run-directory comparison.

#include "tsmooth/cli/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tsmooth::cli {

struct RunOptions {
  /// Overrides the config seed (and every seed derived from it).
  std::optional<std::uint64_t> seed;
  /// Overrides the config output directory.
  std::optional<std::string> out;
  /// OpenMP thread count; 0 keeps the runtime default.
  int threads = 0;
  /// Base for relative record paths inside the config.
  std::filesystem::path config_dir = ".";
};

struct Artifact {
  std::string name;
  std::uintmax_t bytes = 0;
  std::string hash;
};

struct RunResult {
  std::filesystem::path dir;
  std::vector<Artifact> artifacts;
  nlohmann::json diagnostics;
  nlohmann::json manifest;
};

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);

/// Output directory after the --out override and TSMOOTH_OUTPUT_ROOT.
std::filesystem::path resolve_output(const ExperimentConfig& cfg, const RunOptions& opts);

/// Runs a parsed config; manifest.json is written last.
RunResult run(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Loads, applies the seed override, validates and runs.
RunResult run_file(const std::string& path, RunOptions opts = {});

struct ArtifactDiff {
  std::string name;
  bool tabular = false;
  bool identical = false;
  std::size_t rows = 0;
  double max_abs = 0.0;
  double max_rel = 0.0;
};

struct CompareReport {
  std::vector<ArtifactDiff> artifacts;
  double max_abs = 0.0;
  double max_rel = 0.0;
  bool identical = true;

  nlohmann::json to_json() const;
};

/// Per-artifact differences; manifest.json is skipped. Different artifact
/// sets, CSV headers or row counts throw Mismatch.
CompareReport compare(const std::filesystem::path& a, const std::filesystem::path& b);

/// Command-line entry: `run <config>` and `compare <a> <b>`. Returns the exit
/// code (0 ok, 1 numerical failure, 2 config error).
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tsmooth::cli
