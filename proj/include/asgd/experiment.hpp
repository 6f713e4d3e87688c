#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "asgd/config.hpp"

namespace asgd {

enum class RunStatus { kConverged, kNoConvergence };

const char* to_string(RunStatus status);

/// A run is flagged NC when any sampled loss is non-finite or exceeds
/// 1e6 times the initial loss.
RunStatus classify_run(const std::vector<LossPoint>& loss_curve);

struct RunOptions {
  std::filesystem::path out_dir;
  bool concurrent = false;  // real threads instead of the deterministic engine
};

struct ReplicateResult {
  RunStatus status = RunStatus::kConverged;
  double final_loss = 0.0;
  double initial_loss = 0.0;
  RunTrace trace;
  std::filesystem::path loss_curve_csv;
  std::filesystem::path trace_json;
  std::filesystem::path bound_report_json;
};

struct RunResult {
  std::string digest;
  std::vector<ReplicateResult> replicates;
  std::filesystem::path run_json;
  std::filesystem::path mean_curve_csv;  // empty unless replicates > 1
};

/// Runs every replicate, writes the loss-curve CSV, staleness trace and
/// bound report per replicate plus an aggregate run.json. NC results are
/// recorded, not raised.
RunResult run_single(const ExperimentConfig& config, const RunOptions& options);

struct SweepRow {
  int batch_size = 0;
  int num_learners = 0;
  int softsync_n = 0;
  std::string policy;
  RunStatus status = RunStatus::kConverged;
  double final_loss = 0.0;
  double time_per_epoch = 0.0;
  double mean_staleness = 0.0;
};

struct SweepResult {
  std::string digest;
  std::vector<SweepRow> rows;
  std::filesystem::path summary_csv;
};

/// Runs every sweep cell under both the constant and staleness-inverse
/// policies; per-cell failures are recorded as NC and the sweep continues.
SweepResult run_sweep(const ExperimentConfig& config, const RunOptions& options);

struct CompareResult {
  std::string verdict;  // both-converged | only-staleness-converged | both-NC
  RunStatus constant_status = RunStatus::kConverged;
  RunStatus staleness_status = RunStatus::kConverged;
  double constant_final_loss = 0.0;
  double staleness_final_loss = 0.0;
  std::filesystem::path constant_csv;
  std::filesystem::path staleness_csv;
  std::filesystem::path report_json;
};

/// Runs the same seeds under the constant and staleness-inverse policies
/// and emits paired curves plus a verdict.
CompareResult compare_policies(const ExperimentConfig& config, const RunOptions& options);

/// Loss-curve CSV: a config-digest comment line, a header, then one row
/// per sampled point.
void write_loss_curve_csv(const std::filesystem::path& path, const std::string& digest,
                          const std::vector<LossPoint>& curve);

/// Full per-sample staleness trace with protocol metadata, JSON.
void write_trace_json(const std::filesystem::path& path, const std::string& digest,
                      const StalenessTrace& trace, int aggregation_count, int batch_size);

StalenessTrace read_trace_json(const std::filesystem::path& path, int& aggregation_count,
                               int& batch_size);

/// Bound report for a softsync trace after dropping warmup updates;
/// produces a rejection record when the decomposition fails and a
/// not-applicable record for hardsync traces.
nlohmann::json bound_report_or_rejection(const ExperimentConfig& config,
                                         const StalenessTrace& trace,
                                         const std::string& digest);

}  // namespace asgd
