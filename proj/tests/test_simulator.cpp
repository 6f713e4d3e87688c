#include <doctest.h>

#include <cmath>

#include "asgd/simulator.hpp"
#include "support/serial_oracle.hpp"

using namespace asgd;

namespace {

SimConfig base_config(SyncMode mode, int n, int lambda, int mu,
                      std::shared_ptr<const Objective> objective) {
  SimConfig config;
  config.protocol = {mode, n, lambda, mu};
  config.objective = std::move(objective);
  config.lr = {0.05, RateMode::kStalenessInverse, std::nullopt, 0.95};
  config.learners = homogeneous_learners(lambda, {TimingModel::Kind::kConstant, 100.0, 0.0},
                                         {TimingModel::Kind::kConstant, 1.0, 0.0}, 99);
  config.stop = StopCondition::after_updates(200);
  config.master_seed = 99;
  config.loss_sample_interval = 50;
  return config;
}

std::shared_ptr<const Objective> small_quadratic() {
  return QuadraticObjective::diagonal({1.0, 0.25}, {0.3, -0.2}, 64, 0.3, 7);
}

bool identical_traces(const RunTrace& a, const RunTrace& b) {
  if (a.updates_applied != b.updates_applied) return false;
  if (a.samples_processed != b.samples_processed) return false;
  if (a.sim_wallclock != b.sim_wallclock) return false;
  if (a.final_weights != b.final_weights) return false;
  if (a.staleness.samples.size() != b.staleness.samples.size()) return false;
  for (std::size_t k = 0; k < a.staleness.samples.size(); ++k) {
    const StalenessSample& x = a.staleness.samples[k];
    const StalenessSample& y = b.staleness.samples[k];
    if (x.update_index != y.update_index || x.learner_id != y.learner_id ||
        x.staleness != y.staleness) {
      return false;
    }
  }
  if (a.loss_curve.size() != b.loss_curve.size()) return false;
  for (std::size_t k = 0; k < a.loss_curve.size(); ++k) {
    if (a.loss_curve[k].loss != b.loss_curve[k].loss) return false;
    if (a.loss_curve[k].sim_time != b.loss_curve[k].sim_time) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("hardsync staleness is identically zero") {
  auto config = base_config(SyncMode::kHardsync, 1, 4, 2, small_quadratic());
  config.stop = StopCondition::after_updates(50);
  const RunTrace trace = run_simulation(config);
  CHECK(trace.updates_applied == 50);
  CHECK(trace.staleness.samples.size() == 50 * 4);
  for (const StalenessSample& sample : trace.staleness.samples) {
    CHECK(sample.staleness == 0);
  }
}

TEST_CASE("identical configs give bit-identical runs") {
  auto config = base_config(SyncMode::kSoftsync, 4, 8, 2, small_quadratic());
  config.learners = homogeneous_learners(8, {TimingModel::Kind::kUniformJitter, 100.0, 0.4},
                                         {TimingModel::Kind::kUniformJitter, 2.0, 0.3}, 5);
  config.master_seed = 5;
  const RunTrace first = run_simulation(config);
  const RunTrace second = run_simulation(config);
  CHECK(identical_traces(first, second));

  auto reseeded = config;
  reseeded.master_seed = 6;
  reseeded.learners = homogeneous_learners(8, {TimingModel::Kind::kUniformJitter, 100.0, 0.4},
                                           {TimingModel::Kind::kUniformJitter, 2.0, 0.3}, 6);
  const RunTrace third = run_simulation(reseeded);
  CHECK_FALSE(identical_traces(first, third));
}

TEST_CASE("sample accounting matches updates times aggregation size") {
  SUBCASE("softsync") {
    auto config = base_config(SyncMode::kSoftsync, 2, 8, 3, small_quadratic());
    const RunTrace trace = run_simulation(config);
    CHECK(trace.samples_processed == trace.updates_applied * 4 * 3);  // c = 4
    CHECK(trace.staleness.samples.size() == trace.updates_applied * 4);
  }
  SUBCASE("hardsync") {
    auto config = base_config(SyncMode::kHardsync, 1, 8, 3, small_quadratic());
    const RunTrace trace = run_simulation(config);
    CHECK(trace.samples_processed == trace.updates_applied * 8 * 3);
  }
}

TEST_CASE("every update contributes exactly aggregation_count trace samples") {
  auto config = base_config(SyncMode::kSoftsync, 3, 8, 2, small_quadratic());  // c = 2
  const RunTrace trace = run_simulation(config);
  REQUIRE(!trace.update_log.empty());
  for (const UpdateRecord& record : trace.update_log) {
    CHECK(record.staleness.size() == 2);
  }
}

TEST_CASE("mean staleness tracks the splitting parameter under homogeneous timing") {
  const int lambda = 16;
  for (int n : {lambda / 2, lambda}) {
    auto config = base_config(SyncMode::kSoftsync, n, lambda, 2, small_quadratic());
    config.lr.base = 1e-3;
    config.stop = StopCondition::after_updates(2000);
    const RunTrace trace = run_simulation(config);
    const StalenessSummary summary = summarize_staleness(trace.staleness);
    CHECK(summary.mean >= 0.5 * n);
    CHECK(summary.mean <= 1.5 * n);
  }
}

TEST_CASE("single-batch softsync staleness stays within a tight band") {
  auto config = base_config(SyncMode::kSoftsync, 1, 16, 2, small_quadratic());
  config.lr.base = 1e-3;
  config.stop = StopCondition::after_updates(1000);
  const RunTrace trace = run_simulation(config);
  const StalenessSummary summary = summarize_staleness(trace.staleness);
  CHECK(summary.max <= 2);
}

TEST_CASE("epoch stop halts at the first crossing update") {
  auto config = base_config(SyncMode::kSoftsync, 8, 8, 4, small_quadratic());
  config.stop = StopCondition::after_epochs(2.0);
  const RunTrace trace = run_simulation(config);
  const std::uint64_t dataset = 64;
  CHECK(trace.samples_processed >= 2 * dataset);
  CHECK(trace.samples_processed - 4 < 2 * dataset);  // one update earlier was short
}

TEST_CASE("simulation rejects degenerate configs") {
  auto config = base_config(SyncMode::kSoftsync, 1, 1, 1, small_quadratic());
  config.learners.clear();
  CHECK_THROWS_AS(run_simulation(config), ConfigError);

  auto bad_interval = base_config(SyncMode::kSoftsync, 1, 2, 1, small_quadratic());
  bad_interval.loss_sample_interval = 0;
  CHECK_THROWS_AS(run_simulation(bad_interval), ConfigError);
}

TEST_CASE("hardsync trajectory equals the serial oracle exactly") {
  const auto objective = small_quadratic();
  auto config = base_config(SyncMode::kHardsync, 1, 6, 2, objective);
  config.lr = {0.2, RateMode::kConstant, std::nullopt, 0.95};
  config.stop = StopCondition::after_updates(60);
  config.record_weight_history = true;
  const RunTrace trace = run_simulation(config);

  const std::vector<double> theta0 = initial_weights(objective->dimension(), config.master_seed);
  const auto oracle =
      testing::serial_sgd(*objective, theta0, config.lr, 2, 6, 60, config.master_seed);
  REQUIRE(trace.weight_history.size() == 60);
  for (std::size_t round = 0; round < 60; ++round) {
    for (int k = 0; k < objective->dimension(); ++k) {
      CHECK(trace.weight_history[round][k] == oracle.weight_history[round][k]);
    }
  }
}

TEST_CASE("perfect parallelism with free communication") {
  auto config = base_config(SyncMode::kHardsync, 1, 4, 2, small_quadratic());
  config.lr = {0.01, RateMode::kConstant, std::nullopt, 0.95};
  config.learners = homogeneous_learners(4, {TimingModel::Kind::kConstant, 50.0, 0.0},
                                         {TimingModel::Kind::kConstant, 0.0, 0.0}, 99);
  config.stop = StopCondition::after_epochs(1.0);
  const auto speedups = measure_speedup(config, {1, 2, 4});
  CHECK(speedups[0].second == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(speedups[1].second == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(speedups[2].second == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("softsync epochs never run slower than hardsync under jitter") {
  const auto objective = small_quadratic();
  auto softsync = base_config(SyncMode::kSoftsync, 8, 8, 2, objective);
  softsync.lr.base = 1e-3;
  softsync.learners = homogeneous_learners(8, {TimingModel::Kind::kUniformJitter, 100.0, 0.3},
                                           {TimingModel::Kind::kUniformJitter, 2.0, 0.3}, 21);
  softsync.master_seed = 21;
  softsync.stop = StopCondition::after_epochs(4.0);

  auto hardsync = softsync;
  hardsync.protocol.mode = SyncMode::kHardsync;

  const double soft_tpe = time_per_epoch(run_simulation(softsync), objective->dataset_size());
  const double hard_tpe = time_per_epoch(run_simulation(hardsync), objective->dataset_size());
  CHECK(soft_tpe <= hard_tpe);
}

TEST_CASE("loss curve indices strictly increase and include the final update") {
  auto config = base_config(SyncMode::kSoftsync, 4, 4, 2, small_quadratic());
  config.stop = StopCondition::after_updates(123);
  config.loss_sample_interval = 50;
  const RunTrace trace = run_simulation(config);
  REQUIRE(trace.loss_curve.size() >= 2);
  CHECK(trace.loss_curve.front().update_index == 0);
  CHECK(trace.loss_curve.back().update_index == 123);
  for (std::size_t k = 1; k < trace.loss_curve.size(); ++k) {
    CHECK(trace.loss_curve[k].update_index > trace.loss_curve[k - 1].update_index);
    CHECK(trace.loss_curve[k].sim_time >= trace.loss_curve[k - 1].sim_time);
  }
}
