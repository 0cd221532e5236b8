#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "reactor/cli/experiment_config.hpp"
#include "reactor/trainer.hpp"

namespace reactor::cli {

enum ExitCode : int { kSuccess = 0, kFailure = 1, kUsage = 2 };

struct TrainOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> workers;
  std::optional<bool> deterministic;
};

void apply_overrides(ExperimentConfig& cfg, const TrainOverrides& overrides);

/// `step,episodes,mean_return,critic_loss,entropy,buffer_size,version` plus one row per entry.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

/// First metrics step whose greedy fraction reaches `threshold`.
std::optional<std::size_t> steps_to_threshold(const std::vector<MetricsRow>& rows, double threshold);

nlohmann::json make_summary(const ExperimentConfig& cfg, const TrainResult& result, const Environment& env);

int run_train(const std::string& config_path, const TrainOverrides& overrides, std::ostream& out, std::ostream& err);

/// One compared quantity of the table report.
struct TableCell {
  std::string fixture;
  std::string algorithm;
  std::string metric;  // normalized | mean_rank | elo | elo_order
  double expected = 0.0;
  double actual = 0.0;
  double tolerance = 0.0;
  bool checked = false;  // informational cells carry no verdict
  bool passed = true;
  std::string note;
};

struct TablesReport {
  std::vector<TableCell> cells;
  std::vector<std::string> missing_fixtures;
  std::vector<std::string> errors;

  bool all_checked_pass() const;
};

TablesReport compute_tables(const std::filesystem::path& fixtures_dir);

/// Exit 0 when every checked cell passes, 1 on a comparison failure, 2 when a
/// fixture is missing or malformed.
int run_tables(const std::filesystem::path& fixtures_dir, std::ostream& out, std::ostream& err);

}  // namespace reactor::cli
