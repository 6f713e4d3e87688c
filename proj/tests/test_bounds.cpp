#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "asgd/bounds.hpp"
#include "asgd/random.hpp"

using namespace asgd;

namespace {

StalenessTrace trace_of(std::vector<std::vector<std::uint64_t>> per_update, int n = 1,
                        int lambda = 4) {
  StalenessTrace trace;
  trace.protocol_n = n;
  trace.num_learners = lambda;
  std::uint64_t update = 0;
  for (const auto& group : per_update) {
    for (std::uint64_t staleness : group) {
      trace.samples.push_back({update, 0, staleness});
    }
    ++update;
  }
  return trace;
}

DecomposedTrace decomposed(std::vector<std::uint64_t> p, int c = 1, int n = 1) {
  DecomposedTrace trace;
  trace.adjusted_staleness = std::move(p);
  trace.aggregation_count = c;
  trace.protocol_n = n;
  return trace;
}

BoundConstants unit_constants(int mu = 1, int c = 1, int n = 1) {
  BoundConstants constants;
  constants.batch_size = mu;
  constants.aggregation_count = c;
  constants.protocol_n = n;
  return constants;
}

}  // namespace

TEST_CASE("decomposition flattens per-update staleness") {
  SUBCASE("c = 1 keeps the raw sequence") {
    const auto out = decompose_trace(trace_of({{2}, {3}, {1}}), 1);
    CHECK(out.adjusted_staleness == std::vector<std::uint64_t>{2, 3, 1});
  }
  SUBCASE("one update with three staleness-1 gradients") {
    const auto out = decompose_trace(trace_of({{1, 1, 1}}), 3);
    CHECK(out.adjusted_staleness == std::vector<std::uint64_t>{1, 1, 1});
  }
  SUBCASE("two updates of two gradients") {
    const auto out = decompose_trace(trace_of({{2, 3}, {1, 1}}), 2);
    CHECK(out.adjusted_staleness == std::vector<std::uint64_t>{2, 3, 1, 1});
  }
}

TEST_CASE("decomposition rejects structural problems") {
  CHECK_THROWS_AS(decompose_trace(trace_of({{1, 1, 1}}), 2), TraceError);  // 3 not mult of 2
  CHECK_THROWS_AS(decompose_trace(trace_of({{1}, {0}}), 1), TraceError);   // zero staleness
  CHECK_THROWS_AS(decompose_trace(StalenessTrace{}, 1), TraceError);
  CHECK_THROWS_AS(decompose_trace(trace_of({{1}}), 0), std::invalid_argument);
}

TEST_CASE("recommended base rate on hand-checked inputs") {
  // C1 = C2 = 1, c = 1, mu = 1, p = [1,1,1,1]: sqrt(1 / 8)
  const double rate = recommend_base_rate(unit_constants(), decomposed({1, 1, 1, 1}));
  CHECK(rate == doctest::Approx(std::sqrt(1.0 / 8.0)).epsilon(1e-12));
  CHECK(rate == doctest::Approx(0.353553).epsilon(1e-5));

  // c = 2, mu = 4: sqrt(16 / 8) = sqrt(2)
  const double scaled =
      recommend_base_rate(unit_constants(4, 2), decomposed({1, 1, 1, 1}, 2));
  CHECK(scaled == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("recommended rate scales as sqrt(mu) and grows with staleness") {
  const auto p = decomposed({1, 2, 3, 2, 1});
  const double at_mu1 = recommend_base_rate(unit_constants(1), p);
  const double at_mu2 = recommend_base_rate(unit_constants(2), p);
  CHECK(at_mu2 == doctest::Approx(std::sqrt(2.0) * at_mu1).epsilon(1e-12));

  const double smaller = recommend_base_rate(unit_constants(), decomposed({1, 2, 3, 2, 1}));
  const double larger = recommend_base_rate(unit_constants(), decomposed({2, 2, 3, 2, 1}));
  CHECK(larger > smaller);
}

TEST_CASE("prerequisites on the hand-evaluated example") {
  const auto p = decomposed({1, 1, 1, 1});
  const auto constants = unit_constants();
  const double alpha0 = std::sqrt(1.0 / 8.0);

  // Interior step evaluation, 1-based t = 3:
  //   rate cap: 1 / (1 * sum_{j in [1,2]} 1) = 0.5 >= alpha0
  //   contraction: alpha0 + 1 * alpha0^2 * (1/p_4) = 0.3536 + 0.125 <= 1
  // and at t = 1 the contraction sum covers steps 2 and 3:
  //   0.3536 + 0.125 * 2 = 0.6036 <= 1
  const auto report = check_prerequisites(alpha0, constants, p);
  CHECK(report.rate_bound_ok);
  CHECK(report.contraction_ok);
  CHECK_FALSE(report.first_violation.has_value());
}

TEST_CASE("oversized rate violates both prerequisites") {
  // With alpha0 = 10 the rate cap (0.5 at the first interior step) fails,
  // and the contraction condition already fails at t = 1, so that is the
  // first reported violation.
  const auto report = check_prerequisites(10.0, unit_constants(), decomposed({1, 1, 1, 1}));
  CHECK_FALSE(report.rate_bound_ok);
  CHECK_FALSE(report.contraction_ok);
  REQUIRE(report.first_violation.has_value());
  CHECK(report.first_violation->first == Prerequisite::kContraction);
  CHECK(report.first_violation->second == 1);

  // A rate inside the contraction region but above the cap pins the
  // violation on the rate cap. With p = [1,1,4,4] the cap at t = 3 is
  // 1 / (4 * 2) = 0.125 while the contraction holds at 0.2 everywhere.
  const auto cap_only =
      check_prerequisites(0.2, unit_constants(), decomposed({1, 1, 4, 4}));
  CHECK_FALSE(cap_only.rate_bound_ok);
  CHECK(cap_only.contraction_ok);
  REQUIRE(cap_only.first_violation.has_value());
  CHECK(cap_only.first_violation->first == Prerequisite::kRateBound);
  CHECK(cap_only.first_violation->second == 3);
}

TEST_CASE("vanishing rate always satisfies both prerequisites") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint64_t> p(1 + uniform_index(rng, 40));
    for (auto& value : p) value = 1 + uniform_index(rng, 10);
    const auto report =
        check_prerequisites(1e-12, unit_constants(1, 1, 2), decomposed(std::move(p), 1, 2));
    CHECK(report.rate_bound_ok);
    CHECK(report.contraction_ok);
  }
}

TEST_CASE("bound right-hand side on hand-checked inputs") {
  // C1 = C2 = mu = 1, p = [1,1,1,1]: 2 sqrt(2 * 4) / 4 = sqrt(2)
  const double rhs = convergence_bound_rhs(unit_constants(), decomposed({1, 1, 1, 1}));
  CHECK(rhs == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(rhs == doctest::Approx(2.0 * 2.8284271247461903 / 4.0).epsilon(1e-12));
}

TEST_CASE("constant adjusted staleness reduces the bound to the closed form") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    BoundConstants constants = unit_constants(1 + uniform_index(rng, 64));
    constants.c1 = uniform_range(rng, 0.1, 10.0);
    constants.c2 = uniform_range(rng, 0.1, 10.0);
    const std::uint64_t total = 1 + uniform_index(rng, 500);
    const std::uint64_t level = 1 + uniform_index(rng, 30);
    const auto p = decomposed(std::vector<std::uint64_t>(total, level));
    const double rhs = convergence_bound_rhs(constants, p);
    const double closed = constant_staleness_bound(constants, total);
    CHECK(rhs == doctest::Approx(closed).epsilon(1e-12));
  }
}

TEST_CASE("bound value halves when the step count quadruples") {
  const auto constants = unit_constants();
  CHECK(constant_staleness_bound(constants, 4) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(constant_staleness_bound(constants, 16) ==
        doctest::Approx(0.5 * constant_staleness_bound(constants, 4)).epsilon(1e-12));
  CHECK(constant_staleness_bound(unit_constants(4), 4) ==
        doctest::Approx(0.5 * std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("bounds over integer staleness vectors with the same weight sum") {
  // The bound is proportional to dispersion_ratio(1/p), so among vectors
  // whose 1/p entries share the same sum the constant vector wins.
  // [2,2,2] and [1,3,6] both have inverse sum 1.5.
  const auto constants = unit_constants();
  CHECK(convergence_bound_rhs(constants, decomposed({2, 2, 2})) <=
        convergence_bound_rhs(constants, decomposed({1, 3, 6})));

  // Exhaustive enumeration of p in {1..6}^3, grouped by inverse sum.
  std::map<long long, std::pair<double, bool>> best;  // keyed sum -> (min rhs, is constant)
  for (std::uint64_t a = 1; a <= 6; ++a) {
    for (std::uint64_t b = 1; b <= 6; ++b) {
      for (std::uint64_t c = 1; c <= 6; ++c) {
        const double inv_sum = 1.0 / a + 1.0 / b + 1.0 / c;
        const long long key = std::llround(inv_sum * 1e9);
        const double rhs = convergence_bound_rhs(constants, decomposed({a, b, c}));
        auto [it, inserted] = best.try_emplace(key, rhs, a == b && b == c);
        if (!inserted && rhs < it->second.first - 1e-12) {
          it->second = {rhs, a == b && b == c};
        }
      }
    }
  }
  for (const auto& [key, entry] : best) {
    // Wherever a constant vector exists in the group it must be minimal.
    if (entry.second) continue;
    const long long constant_key = [&] {
      for (std::uint64_t level = 1; level <= 6; ++level) {
        if (std::llround(3.0 / level * 1e9) == key) return key;
      }
      return -1LL;
    }();
    CHECK(constant_key == -1);  // no constant vector was beaten
  }
}

TEST_CASE("dispersion ratio basics") {
  CHECK(dispersion_ratio(std::vector<double>{1, 1, 1, 1}) == doctest::Approx(0.5));
  CHECK(dispersion_ratio(std::vector<double>{1}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(dispersion_ratio(std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(dispersion_ratio(std::vector<double>{1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("uniform vectors minimize the dispersion ratio at fixed sum") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 500; ++trial) {
    const int count = 2 + uniform_index(rng, 40);
    std::vector<double> z(count);
    double sum = 0.0;
    for (double& value : z) {
      value = uniform_range(rng, 0.05, 10.0);
      sum += value;
    }
    const double target = static_cast<double>(count);
    for (double& value : z) value *= target / sum;  // fixed sum = count
    const std::vector<double> uniform(count, 1.0);
    CHECK(dispersion_ratio(uniform) <= dispersion_ratio(z));
  }
}

TEST_CASE("weighted gradient average repeats each update's value c times") {
  const auto p = decomposed({1, 2, 1, 4}, 2);
  // weights 1, 1/2 | 1, 1/4 over updates [g0, g1]
  const std::vector<double> norms{2.0, 8.0};
  const double expected = (1.0 * 2.0 + 0.5 * 2.0 + 1.0 * 8.0 + 0.25 * 8.0) / (1.0 + 0.5 + 1.0 + 0.25);
  CHECK(weighted_gradient_average(norms, p) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(weighted_gradient_average(std::vector<double>{1.0}, p),
                  std::invalid_argument);
}

TEST_CASE("bound report serializes its inputs and verdicts") {
  const auto trace = trace_of({{2, 3}, {1, 1}}, 2, 4);
  const auto p = decompose_trace(trace, 2);
  BoundConstants constants = unit_constants(4, 2, 2);
  const BoundReport report = make_bound_report(constants, p);
  const nlohmann::json doc = to_json(report);
  CHECK(doc.at("alpha0").get<double>() == doctest::Approx(report.recommended_base_rate));
  CHECK(doc.at("rhs").get<double>() == doctest::Approx(report.bound_rhs));
  CHECK(doc.contains("prereq5_ok"));
  CHECK(doc.contains("prereq6_ok"));
  CHECK(doc.at("input").at("T") == 4);
  CHECK(doc.at("input").at("c") == 2);
  CHECK(doc.at("input").at("mu") == 4);
}
