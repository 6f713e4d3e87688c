#include "asgd/core.hpp"

#include <algorithm>
#include <string>

namespace asgd {

std::uint64_t compute_staleness(Timestamp server_timestamp, Timestamp gradient_timestamp) {
  if (gradient_timestamp > server_timestamp) {
    throw ProtocolError("gradient timestamp " + std::to_string(gradient_timestamp) +
                        " is ahead of server timestamp " + std::to_string(server_timestamp));
  }
  return server_timestamp - gradient_timestamp;
}

StalenessSummary summarize_staleness(const StalenessTrace& trace) {
  if (trace.samples.empty()) {
    throw TraceError("cannot summarize an empty staleness trace");
  }
  StalenessSummary summary;
  const std::uint64_t tail = 2 * static_cast<std::uint64_t>(trace.protocol_n);
  std::uint64_t exceeding = 0;
  double sum = 0.0;
  for (const StalenessSample& sample : trace.samples) {
    sum += static_cast<double>(sample.staleness);
    summary.max = std::max(summary.max, sample.staleness);
    ++summary.histogram[sample.staleness];
    if (sample.staleness > tail) ++exceeding;
  }
  const double count = static_cast<double>(trace.samples.size());
  summary.mean = sum / count;
  summary.fraction_exceeding = static_cast<double>(exceeding) / count;
  return summary;
}

nlohmann::json to_json(const StalenessSummary& summary) {
  nlohmann::json histogram = nlohmann::json::object();
  for (const auto& [staleness, count] : summary.histogram) {
    histogram[std::to_string(staleness)] = count;
  }
  return {{"mean", summary.mean},
          {"max", summary.max},
          {"histogram", histogram},
          {"fraction_exceeding", summary.fraction_exceeding}};
}

}  // namespace asgd
