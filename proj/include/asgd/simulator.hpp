#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "asgd/objectives.hpp"
#include "asgd/server.hpp"

namespace asgd {

struct TimingModel {
  enum class Kind { kConstant, kUniformJitter };
  Kind kind = Kind::kConstant;
  double duration = 1.0;  // mean duration
  double jitter = 0.0;    // relative half-width in [0, 1), kUniformJitter only

  /// Draws one duration; kUniformJitter samples uniformly from
  /// [duration * (1 - jitter), duration * (1 + jitter)].
  double sample(std::mt19937_64& rng) const;
  void validate(bool allow_zero) const;
};

struct LearnerModel {
  LearnerId id = 0;
  TimingModel compute_time;  // duration of one gradient computation
  TimingModel comm_time;     // duration of each pull and each push service
  std::uint64_t rng_seed = 0;
};

struct StopCondition {
  enum class Kind { kUpdates, kEpochs };
  Kind kind = Kind::kUpdates;
  std::uint64_t updates = 1000;
  double epochs = 1.0;

  static StopCondition after_updates(std::uint64_t updates);
  static StopCondition after_epochs(double epochs);
};

struct SimConfig {
  ProtocolConfig protocol;
  std::shared_ptr<const Objective> objective;
  LearningRatePolicy lr;
  double momentum = 0.0;
  std::vector<LearnerModel> learners;  // one per learner, ids 0..lambda-1
  StopCondition stop;
  std::uint64_t master_seed = 0;
  std::uint64_t loss_sample_interval = 50;
  bool record_weight_history = false;
  std::vector<double> initial_theta;  // empty: uniform [-0.1, 0.1] from master_seed

  void validate() const;
};

struct LossPoint {
  std::uint64_t update_index = 0;  // updates applied so far (0 = initial point)
  double sim_time = 0.0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  double epoch = 0.0;
};

struct RunTrace {
  StalenessTrace staleness;
  std::vector<UpdateRecord> update_log;
  std::vector<LossPoint> loss_curve;
  std::vector<std::vector<double>> weight_history;  // per update, when recorded
  std::vector<double> final_weights;
  double sim_wallclock = 0.0;
  std::uint64_t updates_applied = 0;
  std::uint64_t samples_processed = 0;
};

/// Deterministic discrete-event execution: learners cycle through pull,
/// compute, push against a server that services one message at a time,
/// each service occupying the server for the learner's comm_time draw.
/// Event ties are broken by (event time, learner id, creation order).
/// Identical configs produce bit-identical traces.
RunTrace run_simulation(const SimConfig& config);

/// Same protocol contract executed by real threads against one
/// mutex-guarded server; timing models are ignored and sim_time is wall
/// time in seconds. Staleness is nondeterministic but every protocol
/// invariant holds. Hardsync trajectories match run_simulation exactly.
RunTrace run_concurrent(const SimConfig& config);

/// Simulated time per epoch: sim_wallclock / epochs processed.
double time_per_epoch(const RunTrace& trace, int dataset_size);

/// Runs the config at each learner count (cloning learner 0's timing) and
/// reports (lambda, time-per-epoch at 1 / time-per-epoch at lambda).
std::vector<std::pair<int, double>> measure_speedup(const SimConfig& config,
                                                    const std::vector<int>& lambdas);

/// Shared sample indices for one hardsync round; learner l consumes the
/// l-th contiguous slice of length batch_size. Depends only on the seed
/// and round, so any execution order reproduces the same batches.
std::vector<int> hardsync_round_batch(std::uint64_t master_seed, std::uint64_t round,
                                      int count, int dataset_size);

/// Learner models with homogeneous timing and per-learner seeds derived
/// from the master seed.
std::vector<LearnerModel> homogeneous_learners(int count, TimingModel compute_time,
                                               TimingModel comm_time,
                                               std::uint64_t master_seed);

}  // namespace asgd
