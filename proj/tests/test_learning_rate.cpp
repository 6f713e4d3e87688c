#include <doctest.h>

#include "asgd/core.hpp"
#include "asgd/learning_rate.hpp"

using namespace asgd;

TEST_CASE("staleness-inverse rate divides the base by the staleness") {
  LearningRatePolicy policy{0.001, RateMode::kStalenessInverse, std::nullopt, 0.95};
  CHECK(effective_rate(policy, 2, 0.0) == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK(effective_rate(policy, 0, 0.0) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(effective_rate(policy, 1, 0.0) == doctest::Approx(0.001).epsilon(1e-12));
}

TEST_CASE("step decay multiplies once per reached milestone") {
  LearningRatePolicy policy{0.001, RateMode::kConstant, StepDecay{{120.0, 130.0}, 0.1}, 0.95};
  CHECK(effective_rate(policy, 0, 0.0) == doctest::Approx(0.001));
  CHECK(effective_rate(policy, 0, 125.0) == doctest::Approx(0.0001));
  CHECK(effective_rate(policy, 0, 135.0) == doctest::Approx(0.00001));
  CHECK(effective_rate(policy, 0, 120.0) == doctest::Approx(0.0001));  // inclusive
}

TEST_CASE("rates are unchanged between milestones") {
  LearningRatePolicy policy{0.5, RateMode::kStalenessInverse, StepDecay{{2.0, 8.0}, 0.5}, 0.95};
  for (std::uint64_t staleness : {0ull, 1ull, 3ull}) {
    CHECK(effective_rate(policy, staleness, 2.5) == effective_rate(policy, staleness, 7.9));
    CHECK(effective_rate(policy, staleness, 0.0) == effective_rate(policy, staleness, 1.99));
  }
}

TEST_CASE("staleness-inverse times staleness recovers the constant rate") {
  LearningRatePolicy inverse{0.37, RateMode::kStalenessInverse, StepDecay{{1.0}, 0.25}, 0.95};
  LearningRatePolicy constant = inverse;
  constant.mode = RateMode::kConstant;
  for (std::uint64_t staleness = 1; staleness <= 40; ++staleness) {
    for (double epoch : {0.0, 0.5, 3.0}) {
      CHECK(effective_rate(inverse, staleness, epoch) * double(staleness) ==
            doctest::Approx(effective_rate(constant, staleness, epoch)).epsilon(1e-15));
    }
  }
}

TEST_CASE("rate never increases with staleness") {
  LearningRatePolicy policy{0.9, RateMode::kStalenessInverse, std::nullopt, 0.95};
  double previous = effective_rate(policy, 0, 0.0);
  for (std::uint64_t staleness = 1; staleness <= 100; ++staleness) {
    const double rate = effective_rate(policy, staleness, 0.0);
    CHECK(rate <= previous);
    previous = rate;
  }
}

TEST_CASE("exponential penalty decays geometrically") {
  LearningRatePolicy policy{1.0, RateMode::kExponentialPenalty, std::nullopt, 0.5};
  CHECK(effective_rate(policy, 0, 0.0) == doctest::Approx(1.0));
  CHECK(effective_rate(policy, 3, 0.0) == doctest::Approx(0.125));
}

TEST_CASE("epochs are fractional sample counts") {
  CHECK(epoch_of(0, 50000) == 0.0);
  CHECK(epoch_of(50000, 50000) == 1.0);
  CHECK(epoch_of(125000, 50000) == 2.5);
  CHECK_THROWS_AS(epoch_of(1, 0), std::invalid_argument);
}

TEST_CASE("policy validation") {
  LearningRatePolicy bad_base{0.0, RateMode::kConstant, std::nullopt, 0.95};
  CHECK_THROWS_AS(validate(bad_base), ConfigError);

  LearningRatePolicy bad_factor{0.1, RateMode::kConstant, StepDecay{{1.0}, 1.5}, 0.95};
  CHECK_THROWS_AS(validate(bad_factor), ConfigError);

  LearningRatePolicy bad_milestones{0.1, RateMode::kConstant, StepDecay{{3.0, 2.0}, 0.5}, 0.95};
  CHECK_THROWS_AS(validate(bad_milestones), ConfigError);
}
