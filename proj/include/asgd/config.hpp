#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asgd/bounds.hpp"
#include "asgd/simulator.hpp"

namespace asgd {

struct ObjectiveSpec {
  std::string kind;  // "quadratic" | "logistic" | "mlp"
  int dataset_size = 256;
  std::uint64_t seed = 1;
  // quadratic
  std::vector<double> diagonal;
  std::vector<std::vector<double>> matrix;
  std::vector<double> linear;
  double noise_scale = 0.0;
  // logistic
  int dimension = 2;
  double feature_scale = 1.0;
  // mlp
  std::vector<int> layers;

  std::shared_ptr<const Objective> build() const;
};

struct TheorySpec {
  double c1 = 1.0, c2 = 1.0, c3 = 1.0, c4 = 1.0;
  std::uint64_t warmup_updates = 0;  // updates dropped before decomposition
};

struct SweepCell {
  int batch_size = 1;
  int num_learners = 1;
  std::optional<int> softsync_n;  // defaults to num_learners
};

/// Full description of one experiment. Parsed strictly: unknown keys are
/// rejected with their path so hyperparameter typos cannot pass silently.
struct ExperimentConfig {
  ObjectiveSpec objective;
  ProtocolConfig protocol;
  LearningRatePolicy lr;
  double momentum = 0.0;
  TimingModel compute_time{TimingModel::Kind::kConstant, 100.0, 0.0};
  TimingModel comm_time{TimingModel::Kind::kConstant, 1.0, 0.0};
  StopCondition stop;
  std::uint64_t master_seed = 1;
  int replicates = 1;
  std::uint64_t loss_sample_interval = 50;
  TheorySpec theory;
  std::vector<SweepCell> sweep_cells;  // sweep subcommand only

  /// Simulator config for one replicate (replicate k shifts the master
  /// seed by k).
  SimConfig sim_config(int replicate = 0) const;

  BoundConstants bound_constants() const;
  void validate() const;
};

ExperimentConfig parse_config(const nlohmann::json& document);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// FNV-1a digest of the canonical serialized config; stamped into every
/// artifact the runner writes.
std::string config_digest(const ExperimentConfig& config);

}  // namespace asgd
