#include "asgd/learning_rate.hpp"

#include <cmath>
#include <stdexcept>

#include "asgd/core.hpp"

namespace asgd {

void validate(const LearningRatePolicy& policy) {
  if (!(policy.base > 0.0)) throw ConfigError("learning rate base must be positive");
  if (policy.decay) {
    const StepDecay& decay = *policy.decay;
    if (!(decay.factor > 0.0 && decay.factor < 1.0)) {
      throw ConfigError("decay factor must lie in (0, 1)");
    }
    for (std::size_t k = 1; k < decay.milestones.size(); ++k) {
      if (!(decay.milestones[k] > decay.milestones[k - 1])) {
        throw ConfigError("decay milestones must be strictly increasing");
      }
    }
  }
  if (policy.mode == RateMode::kExponentialPenalty &&
      !(policy.penalty_gamma > 0.0 && policy.penalty_gamma <= 1.0)) {
    throw ConfigError("penalty gamma must lie in (0, 1]");
  }
}

double effective_rate(const LearningRatePolicy& policy, std::uint64_t staleness, double epoch) {
  double rate = policy.base;
  if (policy.decay) {
    for (double milestone : policy.decay->milestones) {
      if (milestone <= epoch) {
        rate *= policy.decay->factor;
      } else {
        break;
      }
    }
  }
  switch (policy.mode) {
    case RateMode::kConstant:
      return rate;
    case RateMode::kStalenessInverse:
      return staleness > 0 ? rate / static_cast<double>(staleness) : rate;
    case RateMode::kExponentialPenalty:
      return rate * std::pow(policy.penalty_gamma, static_cast<double>(staleness));
  }
  return rate;
}

double epoch_of(std::uint64_t samples_processed, int dataset_size) {
  if (dataset_size <= 0) throw std::invalid_argument("dataset_size must be positive");
  return static_cast<double>(samples_processed) / static_cast<double>(dataset_size);
}

}  // namespace asgd
