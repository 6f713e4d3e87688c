#pragma once

// Independent single-context oracle for barrier-synchronized training:
// serial mini-batch SGD with batch size mu * lambda, consuming the same
// shared round batches as the simulator and summing slice by slice in the
// same order, so trajectories must agree bit for bit.

#include <cstdint>
#include <vector>

#include "asgd/learning_rate.hpp"
#include "asgd/objectives.hpp"
#include "asgd/simulator.hpp"

namespace asgd::testing {

struct SerialRun {
  std::vector<std::vector<double>> weight_history;  // after each round
  std::vector<double> final_weights;
  std::vector<double> losses;  // after each round
};

inline SerialRun serial_sgd(const Objective& objective, std::vector<double> theta,
                            const LearningRatePolicy& policy, int batch_size,
                            int num_learners, std::uint64_t rounds,
                            std::uint64_t master_seed) {
  SerialRun run;
  std::uint64_t samples = 0;
  for (std::uint64_t round = 0; round < rounds; ++round) {
    const std::vector<int> indices = hardsync_round_batch(
        master_seed, round, batch_size * num_learners, objective.dataset_size());
    std::vector<double> sum(theta.size(), 0.0);
    for (int learner = 0; learner < num_learners; ++learner) {
      MinibatchSpec slice;
      slice.sample_indices.assign(
          indices.begin() + static_cast<std::ptrdiff_t>(learner) * batch_size,
          indices.begin() + static_cast<std::ptrdiff_t>(learner + 1) * batch_size);
      const std::vector<double> grad = minibatch_gradient(objective, theta, slice);
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += grad[k];
    }
    const double rate =
        effective_rate(policy, 0, epoch_of(samples, objective.dataset_size()));
    const double scale = rate / static_cast<double>(num_learners);
    for (std::size_t k = 0; k < sum.size(); ++k) theta[k] -= scale * sum[k];
    samples += static_cast<std::uint64_t>(batch_size) * num_learners;
    run.weight_history.push_back(theta);
    run.losses.push_back(full_loss(objective, theta));
  }
  run.final_weights = theta;
  return run;
}

/// Largest stable rate for the serial oracle, found by bisection on the
/// divergence predicate (loss non-finite or above 1e6 times the initial).
inline double serial_stability_threshold(const Objective& objective,
                                         const std::vector<double>& theta0,
                                         int batch_size, int num_learners,
                                         std::uint64_t rounds, std::uint64_t master_seed) {
  const double initial = full_loss(objective, theta0);
  auto diverges = [&](double rate) {
    LearningRatePolicy policy{rate, RateMode::kConstant, std::nullopt, 0.95};
    const SerialRun run =
        serial_sgd(objective, theta0, policy, batch_size, num_learners, rounds, master_seed);
    for (double loss : run.losses) {
      if (!std::isfinite(loss) || loss > 1e6 * initial) return true;
    }
    return false;
  };

  double low = 1e-6;
  double high = 1e-6;
  while (!diverges(high)) {
    low = high;
    high *= 2.0;
    if (high > 1e9) return low;  // nothing diverges in range
  }
  for (int iteration = 0; iteration < 60; ++iteration) {
    const double mid = 0.5 * (low + high);
    (diverges(mid) ? high : low) = mid;
  }
  return 0.5 * (low + high);
}

}  // namespace asgd::testing
