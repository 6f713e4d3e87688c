#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace asgd {

/// Violation of a synchronization-protocol rule: a gradient from the
/// future, an unknown learner, a duplicate contribution to a barrier round.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A staleness trace that violates a structural requirement.
class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Timestamp = std::uint64_t;
using LearnerId = std::uint32_t;

/// Flat parameter vector plus the server's scalar clock. The timestamp
/// starts at 0 and increments by exactly one per applied update.
struct VersionedWeights {
  std::vector<double> values;
  Timestamp timestamp = 0;
};

/// One mini-batch gradient pushed by a learner. The gradient is already
/// divided by the mini-batch size; computed_at is the timestamp of the
/// weights it was evaluated on.
struct GradientMessage {
  std::vector<double> gradient;
  LearnerId learner_id = 0;
  Timestamp computed_at = 0;
};

struct StalenessSample {
  std::uint64_t update_index = 0;  // server timestamp when the update was applied
  LearnerId learner_id = 0;
  std::uint64_t staleness = 0;
};

struct StalenessTrace {
  std::vector<StalenessSample> samples;  // ordered by update, ties by arrival
  int protocol_n = 0;                    // softsync splitting parameter, 0 for hardsync
  int num_learners = 1;
};

struct StalenessSummary {
  double mean = 0.0;
  std::uint64_t max = 0;
  std::map<std::uint64_t, std::uint64_t> histogram;
  double fraction_exceeding = 0.0;  // fraction with staleness > 2 * protocol_n
};

/// Staleness of a gradient carrying weight timestamp `gradient_timestamp`
/// when applied while the server clock reads `server_timestamp`.
/// Throws ProtocolError if the gradient claims a future timestamp.
std::uint64_t compute_staleness(Timestamp server_timestamp, Timestamp gradient_timestamp);

/// Mean, max, exact integer histogram and tail fraction of a trace.
/// Throws TraceError on an empty trace.
StalenessSummary summarize_staleness(const StalenessTrace& trace);

nlohmann::json to_json(const StalenessSummary& summary);

}  // namespace asgd
