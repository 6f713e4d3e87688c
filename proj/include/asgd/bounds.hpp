#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "asgd/core.hpp"

namespace asgd {

/// A softsync staleness trace flattened into one entry per mini-batch step.
/// Entry t is the staleness of the r-th gradient of update floor(t/c),
/// r = t mod c; by construction it must be strictly positive.
struct DecomposedTrace {
  std::vector<std::uint64_t> adjusted_staleness;  // one per mini-batch step
  int aggregation_count = 1;                      // gradients per server update
  int protocol_n = 1;

  std::uint64_t length() const { return adjusted_staleness.size(); }
};

/// User-supplied constants of the convergence bound plus the protocol
/// shape they apply to.
struct BoundConstants {
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
  double c4 = 1.0;
  int batch_size = 1;
  int aggregation_count = 1;
  int protocol_n = 1;

  void validate() const;  // throws ConfigError
};

enum class Prerequisite { kRateBound = 5, kContraction = 6 };

struct PrerequisiteReport {
  bool rate_bound_ok = true;    // base rate below the per-step cap everywhere
  bool contraction_ok = true;   // per-step contraction condition everywhere
  std::optional<std::pair<Prerequisite, std::uint64_t>> first_violation;  // (which, 1-based t)
};

struct BoundReport {
  double recommended_base_rate = 0.0;
  double bound_rhs = 0.0;
  PrerequisiteReport prerequisites;
  BoundConstants constants;
  std::uint64_t trace_length = 0;
};

/// Flattens a softsync trace into per-mini-batch adjusted staleness.
/// Requires every update to contribute a multiple of aggregation_count
/// samples; throws TraceError on structural problems or on any
/// non-positive adjusted staleness.
DecomposedTrace decompose_trace(const StalenessTrace& trace, int aggregation_count);

/// Base rate sqrt(C1 c^2 mu / sum_t 2 C2 / p_t^2) that balances the bound.
double recommend_base_rate(const BoundConstants& constants, const DecomposedTrace& trace);

/// Evaluates both prerequisite inequalities at every step. Sums indexing
/// outside [1, T] are clipped, which only loosens the checks.
PrerequisiteReport check_prerequisites(double base_rate, const BoundConstants& constants,
                                       const DecomposedTrace& trace);

/// Right-hand side of the convergence bound:
/// 2 sqrt((2 C1 C2 / mu) sum_t 1/p_t^2) / sum_t 1/p_t.
double convergence_bound_rhs(const BoundConstants& constants, const DecomposedTrace& trace);

/// sqrt(sum z^2) / sum z; minimized exactly when all entries are equal,
/// so a concentrated staleness distribution gives the smallest bound.
double dispersion_ratio(std::span<const double> values);

/// Bound value when every adjusted staleness is the same constant:
/// 2 sqrt(2 C1 C2) / sqrt(T mu).
double constant_staleness_bound(const BoundConstants& constants, std::uint64_t total_steps);

/// (1/p_t)-weighted average of per-update squared gradient norms, each
/// update's value repeated for its aggregation_count mini-batch steps.
double weighted_gradient_average(std::span<const double> grad_norm_per_update,
                                 const DecomposedTrace& trace);

/// Recommended rate, prerequisite checks at that rate, and the bound RHS.
BoundReport make_bound_report(const BoundConstants& constants, const DecomposedTrace& trace);

nlohmann::json to_json(const BoundReport& report);

}  // namespace asgd
