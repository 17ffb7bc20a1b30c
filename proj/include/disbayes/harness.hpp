#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "disbayes/config.hpp"

namespace disbayes {

enum class Command { Simulate, Bvm, Contraction, Timevary, Coverage, LlnClt };

std::string to_string(Command command);
/// Accepts the CLI spellings simulate, bvm, contraction, timevary, coverage and lln-clt.
std::optional<Command> parse_command(std::string_view name);

struct HarnessOptions {
  /// Overrides output.dir when non-empty.
  std::filesystem::path out_dir;
  /// Overrides run.seed.
  std::optional<std::uint64_t> seed;
  /// Overrides run.workers when positive.
  int workers = 0;
  /// Keep finished replication units from an earlier run instead of recomputing them.
  bool resume = false;
};

struct RunResult {
  std::filesystem::path csv;
  std::filesystem::path summary_path;
  nlohmann::json summary;
};

/// Runs one experiment, writing <out>/<command>.csv and <out>/<command>_summary.json.
///
/// Work is split into replication units, each spilled to <out>/units/<command>/ once finished,
/// so a run can be resumed. The final CSV concatenates the units in a fixed order, so neither the
/// worker count nor resumption changes a single byte. Throws NoConvergence after writing the
/// outputs when too many final estimates failed to converge.
RunResult run_experiment(Command command, ExperimentConfig config, const HarnessOptions& options);

RunResult run_simulate(const ExperimentConfig& config, const HarnessOptions& options);
RunResult run_bvm(const ExperimentConfig& config, const HarnessOptions& options);
RunResult run_contraction(const ExperimentConfig& config, const HarnessOptions& options);
RunResult run_timevary(const ExperimentConfig& config, const HarnessOptions& options);
RunResult run_coverage(const ExperimentConfig& config, const HarnessOptions& options);
RunResult run_lln_clt(const ExperimentConfig& config, const HarnessOptions& options);

/// Minimal reader for the CSVs written by the harness (no quoting).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static CsvTable read(const std::filesystem::path& path);
  std::size_t column(std::string_view name) const;
  /// NaN for an empty cell.
  double number(std::size_t row, std::string_view name) const;
  const std::string& text(std::size_t row, std::string_view name) const;
};

}  // namespace disbayes
