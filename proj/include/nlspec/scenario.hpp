#pragma once

#include "nlspec/errors.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nlspec {

inline constexpr const char *tool_version = "1.0.0";

enum class Task { essential, eigs, weyl, certify_t2, certify_heavy, certify_t5, gap, sweep };
const char *to_string(Task t);
Task task_from_string(const std::string &s);

/// Default task parameters. Keys not listed here are rejected.
const nlohmann::json &task_defaults(Task t);
/// Defaults of the "sweep" block.
const nlohmann::json &sweep_defaults();

struct Scenario {
  std::string name;
  std::string description;
  Task task = Task::essential;
  int dim = 1;
  double half_width = 1.0;
  std::size_t points = 8;
  nlohmann::json kernel;
  nlohmann::json potential;
  nlohmann::json params = nlohmann::json::object(); // merged with defaults
  std::uint64_t seed = 0;
  nlohmann::json sweep; // null unless task == sweep
  std::filesystem::path base_dir;

  /// Validates everything (including model descriptors); throws ConfigError.
  static Scenario from_json(const nlohmann::json &j, const std::filesystem::path &base_dir = {});
  static Scenario load(const std::filesystem::path &path);
  nlohmann::json to_json() const;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

/// Executes the task. Config errors propagate as ConfigError; other library
/// errors are recorded in the report's "error" block with status "error".
nlohmann::json run_scenario(const Scenario &scenario, const RunOptions &opts = {});
nlohmann::json run_sweep(const Scenario &scenario, const RunOptions &opts = {});

enum class ReportFormat { json, csv, plotdata };
ReportFormat format_from_string(const std::string &s);

/// Writes the report into `out_dir`; returns the files written.
std::vector<std::filesystem::path> emit_report(const nlohmann::json &report, ReportFormat format,
                                               const std::filesystem::path &out_dir,
                                               const std::string &stem);

/// SHA-256 of the report with its "timings" block removed.
std::string determinism_hash(const nlohmann::json &report);

/// Whether the report's main outcome is a pass (certificates, sweeps) or a
/// plain success for tasks without a verdict.
bool report_passed(const nlohmann::json &report);

enum ExitCode : int {
  exit_ok = 0,
  exit_other = 1,
  exit_config = 2,
  exit_sizing = 3,
  exit_convergence = 4,
  exit_certificate_fail = 5,
};

int exit_code_for(ErrorKind kind);
/// Exit code of a finished report (status, error kind, and verdict).
int exit_code_for(const nlohmann::json &report, bool expect_pass);

} // namespace nlspec
