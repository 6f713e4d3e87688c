#include "asgd/bounds.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace asgd {

void BoundConstants::validate() const {
  if (!(c1 > 0.0 && c2 > 0.0 && c3 > 0.0 && c4 > 0.0)) {
    throw ConfigError("bound constants must all be positive");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (aggregation_count < 1) throw ConfigError("aggregation_count must be positive");
  if (protocol_n < 1) throw ConfigError("protocol_n must be positive");
}

DecomposedTrace decompose_trace(const StalenessTrace& trace, int aggregation_count) {
  if (aggregation_count < 1) {
    throw std::invalid_argument("aggregation_count must be positive");
  }
  if (trace.samples.empty()) throw TraceError("cannot decompose an empty trace");

  DecomposedTrace out;
  out.aggregation_count = aggregation_count;
  out.protocol_n = trace.protocol_n;
  out.adjusted_staleness.reserve(trace.samples.size());

  std::size_t group_start = 0;
  for (std::size_t k = 0; k <= trace.samples.size(); ++k) {
    const bool boundary =
        k == trace.samples.size() ||
        trace.samples[k].update_index != trace.samples[group_start].update_index;
    if (!boundary) continue;
    const std::size_t group_size = k - group_start;
    if (group_size % static_cast<std::size_t>(aggregation_count) != 0) {
      throw TraceError("update " + std::to_string(trace.samples[group_start].update_index) +
                       " carries " + std::to_string(group_size) +
                       " samples, not a multiple of " + std::to_string(aggregation_count));
    }
    if (k < trace.samples.size() &&
        trace.samples[k].update_index < trace.samples[group_start].update_index) {
      throw TraceError("trace is not ordered by update index");
    }
    group_start = k;
  }

  for (std::size_t t = 0; t < trace.samples.size(); ++t) {
    const std::uint64_t staleness = trace.samples[t].staleness;
    if (staleness == 0) {
      throw TraceError("non-positive adjusted staleness at step " + std::to_string(t + 1) +
                       " (update " + std::to_string(trace.samples[t].update_index) +
                       ", learner " + std::to_string(trace.samples[t].learner_id) + ")");
    }
    out.adjusted_staleness.push_back(staleness);
  }
  return out;
}

double recommend_base_rate(const BoundConstants& constants, const DecomposedTrace& trace) {
  constants.validate();
  if (trace.adjusted_staleness.empty()) {
    throw std::invalid_argument("decomposed trace is empty");
  }
  double denom = 0.0;
  for (std::uint64_t p : trace.adjusted_staleness) {
    const double pd = static_cast<double>(p);
    denom += 2.0 * constants.c2 / (pd * pd);
  }
  const double c = static_cast<double>(constants.aggregation_count);
  const double mu = static_cast<double>(constants.batch_size);
  return std::sqrt(constants.c1 * c * c * mu / denom);
}

PrerequisiteReport check_prerequisites(double base_rate, const BoundConstants& constants,
                                       const DecomposedTrace& trace) {
  constants.validate();
  if (trace.adjusted_staleness.empty()) {
    throw std::invalid_argument("decomposed trace is empty");
  }
  const std::vector<std::uint64_t>& p = trace.adjusted_staleness;
  const std::int64_t total = static_cast<std::int64_t>(p.size());
  const std::int64_t window = 2 * static_cast<std::int64_t>(constants.protocol_n);
  const double c = static_cast<double>(constants.aggregation_count);

  PrerequisiteReport report;
  auto record = [&](Prerequisite which, std::int64_t t) {
    if (which == Prerequisite::kRateBound) {
      report.rate_bound_ok = false;
    } else {
      report.contraction_ok = false;
    }
    if (!report.first_violation) {
      report.first_violation = {which, static_cast<std::uint64_t>(t)};
    }
  };

  // Steps are 1-based; sums with indices outside [1, T] are clipped.
  for (std::int64_t t = 1; t <= total; ++t) {
    const double p_t = static_cast<double>(p[t - 1]);

    double trailing = 0.0;  // sum over j in [t - 2n, t - 1] of 1/p_j^2
    for (std::int64_t j = std::max<std::int64_t>(1, t - window); j <= t - 1; ++j) {
      const double pj = static_cast<double>(p[j - 1]);
      trailing += 1.0 / (pj * pj);
    }
    if (trailing > 0.0) {
      const double cap = c * constants.c2 / (constants.c3 * p_t * trailing);
      if (base_rate > cap) record(Prerequisite::kRateBound, t);
    }

    double leading = 0.0;  // sum over kappa in [1, 2n] of 1/p_{t+kappa}
    for (std::int64_t kappa = 1; kappa <= window && t + kappa <= total; ++kappa) {
      leading += 1.0 / static_cast<double>(p[t + kappa - 1]);
    }
    const double lhs = constants.c3 * base_rate / (c * p_t) +
                       constants.c4 * static_cast<double>(constants.protocol_n) *
                           (base_rate * base_rate) / (c * c * p_t) * leading;
    if (lhs > 1.0) record(Prerequisite::kContraction, t);
  }
  return report;
}

double convergence_bound_rhs(const BoundConstants& constants, const DecomposedTrace& trace) {
  constants.validate();
  if (trace.adjusted_staleness.empty()) {
    throw std::invalid_argument("decomposed trace is empty");
  }
  double sum_inv_sq = 0.0;
  double sum_inv = 0.0;
  for (std::uint64_t p : trace.adjusted_staleness) {
    const double pd = static_cast<double>(p);
    sum_inv_sq += 1.0 / (pd * pd);
    sum_inv += 1.0 / pd;
  }
  const double mu = static_cast<double>(constants.batch_size);
  return 2.0 * std::sqrt(2.0 * constants.c1 * constants.c2 / mu * sum_inv_sq) / sum_inv;
}

double dispersion_ratio(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("dispersion_ratio needs a non-empty vector");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double z : values) {
    if (!(z > 0.0)) throw std::invalid_argument("dispersion_ratio needs positive entries");
    sum += z;
    sum_sq += z * z;
  }
  return std::sqrt(sum_sq) / sum;
}

double constant_staleness_bound(const BoundConstants& constants, std::uint64_t total_steps) {
  constants.validate();
  if (total_steps < 1) throw std::invalid_argument("total_steps must be positive");
  const double mu = static_cast<double>(constants.batch_size);
  return 2.0 * std::sqrt(2.0 * constants.c1 * constants.c2) /
         std::sqrt(static_cast<double>(total_steps) * mu);
}

double weighted_gradient_average(std::span<const double> grad_norm_per_update,
                                 const DecomposedTrace& trace) {
  const std::size_t c = static_cast<std::size_t>(trace.aggregation_count);
  if (grad_norm_per_update.size() * c != trace.adjusted_staleness.size()) {
    throw std::invalid_argument("need one gradient norm per update covering the whole trace");
  }
  double weighted = 0.0;
  double weight_sum = 0.0;
  for (std::size_t t = 0; t < trace.adjusted_staleness.size(); ++t) {
    const double w = 1.0 / static_cast<double>(trace.adjusted_staleness[t]);
    weighted += w * grad_norm_per_update[t / c];
    weight_sum += w;
  }
  return weighted / weight_sum;
}

BoundReport make_bound_report(const BoundConstants& constants, const DecomposedTrace& trace) {
  if (constants.aggregation_count != trace.aggregation_count) {
    throw std::invalid_argument("constants and trace disagree on aggregation_count");
  }
  BoundReport report;
  report.constants = constants;
  report.trace_length = trace.length();
  report.recommended_base_rate = recommend_base_rate(constants, trace);
  report.bound_rhs = convergence_bound_rhs(constants, trace);
  report.prerequisites = check_prerequisites(report.recommended_base_rate, constants, trace);
  return report;
}

nlohmann::json to_json(const BoundReport& report) {
  nlohmann::json violation = nullptr;
  if (report.prerequisites.first_violation) {
    const auto& [which, t] = *report.prerequisites.first_violation;
    violation = {{"prerequisite", static_cast<int>(which)}, {"t", t}};
  }
  return {{"alpha0", report.recommended_base_rate},
          {"rhs", report.bound_rhs},
          {"prereq5_ok", report.prerequisites.rate_bound_ok},
          {"prereq6_ok", report.prerequisites.contraction_ok},
          {"first_violation", violation},
          {"input",
           {{"T", report.trace_length},
            {"c", report.constants.aggregation_count},
            {"n", report.constants.protocol_n},
            {"mu", report.constants.batch_size},
            {"c1", report.constants.c1},
            {"c2", report.constants.c2},
            {"c3", report.constants.c3},
            {"c4", report.constants.c4}}}};
}

}  // namespace asgd
