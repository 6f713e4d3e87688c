#include "asgd/server.hpp"

#include <string>

namespace asgd {

int ProtocolConfig::aggregation_count() const {
  if (mode == SyncMode::kHardsync) return num_learners;
  return num_learners / softsync_n;
}

void ProtocolConfig::validate() const {
  if (num_learners < 1) throw ConfigError("protocol needs at least one learner");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (mode == SyncMode::kSoftsync) {
    if (softsync_n < 1 || softsync_n > num_learners) {
      throw ConfigError("softsync n must satisfy 1 <= n <= num_learners, got n=" +
                        std::to_string(softsync_n) + " with " +
                        std::to_string(num_learners) + " learners");
    }
  }
}

ParameterServer::ParameterServer(ProtocolConfig protocol, LearningRatePolicy policy,
                                 std::vector<double> initial_values, int dataset_size,
                                 double momentum)
    : protocol_(protocol),
      policy_(policy),
      momentum_(momentum),
      dataset_size_(dataset_size) {
  protocol_.validate();
  asgd::validate(policy_);
  if (dataset_size_ < 1) throw ConfigError("dataset_size must be positive");
  if (momentum_ < 0.0 || momentum_ >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (initial_values.empty()) throw ConfigError("initial weights must be non-empty");
  weights_.values = std::move(initial_values);
  weights_.timestamp = 0;
  if (momentum_ != 0.0) velocity_.assign(weights_.values.size(), 0.0);
  trace_.protocol_n = protocol_.mode == SyncMode::kSoftsync ? protocol_.softsync_n : 0;
  trace_.num_learners = protocol_.num_learners;
  pending_.reserve(protocol_.aggregation_count());
}

double ParameterServer::current_epoch() const {
  return epoch_of(samples_processed_, dataset_size_);
}

void ParameterServer::check_message(const GradientMessage& message) const {
  if (message.learner_id >= static_cast<LearnerId>(protocol_.num_learners)) {
    throw ProtocolError("gradient from unknown learner " +
                        std::to_string(message.learner_id));
  }
  if (message.gradient.size() != weights_.values.size()) {
    throw ProtocolError("gradient dimension " + std::to_string(message.gradient.size()) +
                        " does not match weights dimension " +
                        std::to_string(weights_.values.size()));
  }
  if (message.computed_at > weights_.timestamp) {
    throw ProtocolError("gradient computed at timestamp " +
                        std::to_string(message.computed_at) +
                        " but server clock reads " + std::to_string(weights_.timestamp));
  }
}

void ParameterServer::finish_update(std::vector<double> step, UpdateRecord record,
                                    std::uint64_t samples) {
  if (momentum_ != 0.0) {
    for (std::size_t k = 0; k < step.size(); ++k) {
      velocity_[k] = momentum_ * velocity_[k] + step[k];
      weights_.values[k] -= velocity_[k];
    }
  } else {
    for (std::size_t k = 0; k < step.size(); ++k) {
      weights_.values[k] -= step[k];
    }
  }
  ++weights_.timestamp;
  samples_processed_ += samples;
  update_log_.push_back(std::move(record));
}

void ParameterServer::hardsync_update(const std::vector<GradientMessage>& gradients) {
  if (protocol_.mode != SyncMode::kHardsync) {
    throw ProtocolError("hardsync_update called on a softsync server");
  }
  const int lambda = protocol_.num_learners;
  if (static_cast<int>(gradients.size()) != lambda) {
    throw ProtocolError("hardsync update needs exactly " + std::to_string(lambda) +
                        " gradients, got " + std::to_string(gradients.size()));
  }
  std::vector<const GradientMessage*> by_learner(lambda, nullptr);
  for (const GradientMessage& message : gradients) {
    check_message(message);
    if (message.computed_at != weights_.timestamp) {
      throw ProtocolError("hardsync gradient has timestamp " +
                          std::to_string(message.computed_at) + ", expected " +
                          std::to_string(weights_.timestamp));
    }
    if (by_learner[message.learner_id] != nullptr) {
      throw ProtocolError("duplicate hardsync gradient from learner " +
                          std::to_string(message.learner_id));
    }
    by_learner[message.learner_id] = &message;
  }

  const double epoch = current_epoch();
  const double rate = effective_rate(policy_, 0, epoch);
  const Timestamp now = weights_.timestamp;
  UpdateRecord record{now, {}, {}};
  record.staleness.assign(lambda, 0);
  record.rates.assign(lambda, rate);

  // Sum in learner-id order, average, then scale by the single rate. The
  // grouping matters: the serial oracle reproduces it operation for
  // operation.
  std::vector<double> step(weights_.values.size(), 0.0);
  for (int l = 0; l < lambda; ++l) {
    const std::vector<double>& g = by_learner[l]->gradient;
    for (std::size_t k = 0; k < step.size(); ++k) step[k] += g[k];
    trace_.samples.push_back({now, static_cast<LearnerId>(l), 0});
  }
  const double scale = rate / static_cast<double>(lambda);
  for (double& s : step) s *= scale;

  finish_update(std::move(step), std::move(record),
                static_cast<std::uint64_t>(lambda) * protocol_.batch_size);
}

bool ParameterServer::softsync_receive(GradientMessage message) {
  if (protocol_.mode != SyncMode::kSoftsync) {
    throw ProtocolError("softsync_receive called on a hardsync server");
  }
  check_message(message);
  pending_.push_back(std::move(message));
  const int c = protocol_.aggregation_count();
  if (static_cast<int>(pending_.size()) < c) return false;

  // Staleness is evaluated now, at application time, so all c gradients
  // share the same server timestamp.
  const double epoch = current_epoch();
  const Timestamp now = weights_.timestamp;
  UpdateRecord record{now, {}, {}};
  std::vector<double> step(weights_.values.size(), 0.0);
  for (const GradientMessage& g : pending_) {
    const std::uint64_t staleness = compute_staleness(now, g.computed_at);
    const double rate = effective_rate(policy_, staleness, epoch);
    for (std::size_t k = 0; k < step.size(); ++k) step[k] += rate * g.gradient[k];
    trace_.samples.push_back({now, g.learner_id, staleness});
    record.staleness.push_back(staleness);
    record.rates.push_back(rate);
  }
  const double inv = 1.0 / static_cast<double>(c);
  for (double& s : step) s *= inv;
  pending_.clear();

  finish_update(std::move(step), std::move(record),
                static_cast<std::uint64_t>(c) * protocol_.batch_size);
  return true;
}

}  // namespace asgd
