#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace asgd {

enum class RateMode {
  kConstant,
  kStalenessInverse,   // base / staleness, full base for fresh gradients
  kExponentialPenalty  // base * gamma^staleness, for comparison runs
};

/// Multiplies the base rate by `factor` once for every milestone epoch
/// that has been reached.
struct StepDecay {
  std::vector<double> milestones;  // strictly increasing epoch numbers
  double factor = 0.1;             // in (0, 1)
};

struct LearningRatePolicy {
  double base = 0.01;
  RateMode mode = RateMode::kConstant;
  std::optional<StepDecay> decay;
  double penalty_gamma = 0.95;  // used by kExponentialPenalty only
};

/// Throws ConfigError on invalid fields.
void validate(const LearningRatePolicy& policy);

/// Per-gradient rate: step decay scales the base first, then the staleness
/// rule applies. Staleness 0 always receives the full decayed base rate,
/// so barrier-synchronized runs reduce to plain SGD.
double effective_rate(const LearningRatePolicy& policy, std::uint64_t staleness, double epoch);

/// Fractional epochs from total samples processed across all learners.
double epoch_of(std::uint64_t samples_processed, int dataset_size);

}  // namespace asgd
