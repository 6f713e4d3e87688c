#pragma once

#include <cstdint>
#include <vector>

#include "asgd/core.hpp"
#include "asgd/learning_rate.hpp"

namespace asgd {

enum class SyncMode { kHardsync, kSoftsync };

struct ProtocolConfig {
  SyncMode mode = SyncMode::kHardsync;
  int softsync_n = 1;  // splitting parameter, ignored under hardsync
  int num_learners = 1;
  int batch_size = 1;  // per-learner mini-batch size

  /// Gradients aggregated per update: floor(num_learners / softsync_n)
  /// under softsync, num_learners under hardsync.
  int aggregation_count() const;
  void validate() const;
};

struct UpdateRecord {
  std::uint64_t update_index = 0;        // server timestamp before the update
  std::vector<std::uint64_t> staleness;  // per aggregated gradient, arrival order
  std::vector<double> rates;             // effective learning rate per gradient
};

/// Single logical parameter server holding the authoritative weights.
/// All mutation happens through one serialized command stream; callers that
/// share an instance across threads must funnel every call through one
/// exclusive access point (see run_concurrent).
class ParameterServer {
 public:
  ParameterServer(ProtocolConfig protocol, LearningRatePolicy policy,
                  std::vector<double> initial_values, int dataset_size,
                  double momentum = 0.0);

  const VersionedWeights& weights() const { return weights_; }
  VersionedWeights pull() const { return weights_; }

  /// Barrier update: exactly one staleness-0 gradient per learner. The
  /// gradients are averaged in learner-id order and scaled by the policy's
  /// base rate at the current epoch.
  void hardsync_update(const std::vector<GradientMessage>& gradients);

  /// Queues one gradient; once aggregation_count() are pending they are
  /// applied together, each scaled by its own staleness-dependent rate
  /// evaluated against the timestamp at application time. Returns true
  /// when this message triggered an update.
  bool softsync_receive(GradientMessage message);

  std::uint64_t updates_applied() const { return weights_.timestamp; }
  std::uint64_t samples_processed() const { return samples_processed_; }
  double current_epoch() const;
  int dataset_size() const { return dataset_size_; }
  const ProtocolConfig& protocol() const { return protocol_; }
  const StalenessTrace& trace() const { return trace_; }
  const std::vector<UpdateRecord>& update_log() const { return update_log_; }
  std::size_t pending_count() const { return pending_.size(); }

 private:
  void check_message(const GradientMessage& message) const;
  void finish_update(std::vector<double> step, UpdateRecord record, std::uint64_t samples);

  ProtocolConfig protocol_;
  LearningRatePolicy policy_;
  double momentum_;
  int dataset_size_;
  VersionedWeights weights_;
  std::vector<double> velocity_;
  std::vector<GradientMessage> pending_;
  std::uint64_t samples_processed_ = 0;
  StalenessTrace trace_;
  std::vector<UpdateRecord> update_log_;
};

}  // namespace asgd
