#include "asgd/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace asgd {

namespace {

using nlohmann::json;

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string());
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
}

void write_json_file(const std::filesystem::path& path, const json& document) {
  write_text(path, document.dump(2) + "\n");
}

double final_loss_of(const RunTrace& trace) {
  return trace.loss_curve.back().loss;
}

StalenessTrace drop_warmup(const StalenessTrace& trace, std::uint64_t warmup_updates) {
  if (warmup_updates == 0) return trace;
  StalenessTrace trimmed;
  trimmed.protocol_n = trace.protocol_n;
  trimmed.num_learners = trace.num_learners;
  for (const StalenessSample& sample : trace.samples) {
    if (sample.update_index >= warmup_updates) trimmed.samples.push_back(sample);
  }
  return trimmed;
}

}  // namespace

const char* to_string(RunStatus status) {
  return status == RunStatus::kConverged ? "converged" : "NC";
}

RunStatus classify_run(const std::vector<LossPoint>& loss_curve) {
  if (loss_curve.empty()) return RunStatus::kNoConvergence;
  // Divergence means growth by a factor of 1e6 over the initial loss
  // scale. The magnitude guard keeps the rule meaningful for objectives
  // whose loss can start at or below zero.
  const double scale = std::max(std::abs(loss_curve.front().loss), 1e-12);
  for (const LossPoint& point : loss_curve) {
    if (!std::isfinite(point.loss)) return RunStatus::kNoConvergence;
    if (point.loss > 1e6 * scale) return RunStatus::kNoConvergence;
  }
  return RunStatus::kConverged;
}

void write_loss_curve_csv(const std::filesystem::path& path, const std::string& digest,
                          const std::vector<LossPoint>& curve) {
  std::string body = "# config_digest=" + digest + "\n";
  body += "update_index,sim_time,loss,grad_norm_sq,epoch\n";
  for (const LossPoint& point : curve) {
    body += std::to_string(point.update_index) + "," + format_double(point.sim_time) + "," +
            format_double(point.loss) + "," + format_double(point.grad_norm_sq) + "," +
            format_double(point.epoch) + "\n";
  }
  write_text(path, body);
}

void write_trace_json(const std::filesystem::path& path, const std::string& digest,
                      const StalenessTrace& trace, int aggregation_count, int batch_size) {
  json samples = json::array();
  for (const StalenessSample& sample : trace.samples) {
    samples.push_back({sample.update_index, sample.learner_id, sample.staleness});
  }
  write_json_file(path, {{"config_digest", digest},
                         {"protocol_n", trace.protocol_n},
                         {"num_learners", trace.num_learners},
                         {"aggregation_count", aggregation_count},
                         {"batch_size", batch_size},
                         {"samples", samples}});
}

StalenessTrace read_trace_json(const std::filesystem::path& path, int& aggregation_count,
                               int& batch_size) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file " + path.string());
  json document;
  try {
    in >> document;
  } catch (const json::exception& e) {
    throw ConfigError("trace file " + path.string() + " is not valid JSON: " + e.what());
  }
  StalenessTrace trace;
  try {
    trace.protocol_n = document.at("protocol_n").get<int>();
    trace.num_learners = document.at("num_learners").get<int>();
    aggregation_count = document.at("aggregation_count").get<int>();
    batch_size = document.at("batch_size").get<int>();
    for (const json& row : document.at("samples")) {
      trace.samples.push_back({row.at(0).get<std::uint64_t>(), row.at(1).get<LearnerId>(),
                               row.at(2).get<std::uint64_t>()});
    }
  } catch (const json::exception& e) {
    throw ConfigError("trace file " + path.string() + " has a bad schema: " + e.what());
  }
  return trace;
}

json bound_report_or_rejection(const ExperimentConfig& config, const StalenessTrace& trace,
                                const std::string& digest) {
  json report;
  if (config.protocol.mode != SyncMode::kSoftsync) {
    report = {{"status", "not_applicable"},
              {"reason", "bound evaluation applies to softsync traces"}};
  } else {
    const StalenessTrace trimmed = drop_warmup(trace, config.theory.warmup_updates);
    if (trimmed.samples.empty()) {
      report = {{"status", "trace_rejected"}, {"reason", "no samples after warmup"}};
    } else {
      try {
        const DecomposedTrace decomposed =
            decompose_trace(trimmed, config.protocol.aggregation_count());
        report = to_json(make_bound_report(config.bound_constants(), decomposed));
        report["status"] = "ok";
      } catch (const TraceError& e) {
        report = {{"status", "trace_rejected"}, {"reason", e.what()}};
      }
    }
    report["warmup_updates"] = config.theory.warmup_updates;
  }
  report["config_digest"] = digest;
  return report;
}

RunResult run_single(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  ensure_dir(options.out_dir);
  RunResult result;
  result.digest = config_digest(config);

  json replicate_reports = json::array();
  for (int replicate = 0; replicate < config.replicates; ++replicate) {
    SimConfig sim = config.sim_config(replicate);
    ReplicateResult rep;
    rep.trace = options.concurrent ? run_concurrent(sim) : run_simulation(sim);
    rep.status = classify_run(rep.trace.loss_curve);
    rep.initial_loss = rep.trace.loss_curve.front().loss;
    rep.final_loss = final_loss_of(rep.trace);

    const std::string suffix = "_r" + std::to_string(replicate);
    rep.loss_curve_csv = options.out_dir / ("loss_curve" + suffix + ".csv");
    rep.trace_json = options.out_dir / ("staleness_trace" + suffix + ".json");
    rep.bound_report_json = options.out_dir / ("bound_report" + suffix + ".json");
    write_loss_curve_csv(rep.loss_curve_csv, result.digest, rep.trace.loss_curve);
    write_trace_json(rep.trace_json, result.digest, rep.trace.staleness,
                     config.protocol.aggregation_count(), config.protocol.batch_size);
    write_json_file(rep.bound_report_json,
                    bound_report_or_rejection(config, rep.trace.staleness, result.digest));

    json report = {{"replicate", replicate},
                   {"status", to_string(rep.status)},
                   {"initial_loss", rep.initial_loss},
                   {"final_loss", rep.final_loss},
                   {"updates_applied", rep.trace.updates_applied},
                   {"samples_processed", rep.trace.samples_processed},
                   {"sim_wallclock", rep.trace.sim_wallclock},
                   {"staleness_summary", to_json(summarize_staleness(rep.trace.staleness))}};
    replicate_reports.push_back(std::move(report));
    result.replicates.push_back(std::move(rep));
  }

  if (config.replicates > 1) {
    // Deterministic runs sample the same update indices, so a pointwise
    // mean curve is well defined; lengths can differ under epoch stops.
    std::size_t shortest = result.replicates.front().trace.loss_curve.size();
    for (const ReplicateResult& rep : result.replicates) {
      shortest = std::min(shortest, rep.trace.loss_curve.size());
    }
    std::vector<LossPoint> mean_curve(result.replicates.front().trace.loss_curve.begin(),
                                      result.replicates.front().trace.loss_curve.begin() +
                                          static_cast<std::ptrdiff_t>(shortest));
    for (std::size_t point = 0; point < shortest; ++point) {
      double loss = 0.0;
      double grad = 0.0;
      for (const ReplicateResult& rep : result.replicates) {
        loss += rep.trace.loss_curve[point].loss;
        grad += rep.trace.loss_curve[point].grad_norm_sq;
      }
      mean_curve[point].loss = loss / config.replicates;
      mean_curve[point].grad_norm_sq = grad / config.replicates;
    }
    result.mean_curve_csv = options.out_dir / "loss_curve_mean.csv";
    write_loss_curve_csv(result.mean_curve_csv, result.digest, mean_curve);
  }

  result.run_json = options.out_dir / "run.json";
  write_json_file(result.run_json, {{"config_digest", result.digest},
                                    {"config", to_json(config)},
                                    {"concurrent", options.concurrent},
                                    {"replicates", replicate_reports}});
  return result;
}

SweepResult run_sweep(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (config.sweep_cells.empty()) throw ConfigError("sweep config has no cells");
  ensure_dir(options.out_dir);
  SweepResult result;
  result.digest = config_digest(config);

  for (const SweepCell& cell : config.sweep_cells) {
    for (const RateMode mode : {RateMode::kConstant, RateMode::kStalenessInverse}) {
      ExperimentConfig variant = config;
      variant.sweep_cells.clear();
      variant.protocol.batch_size = cell.batch_size;
      variant.protocol.num_learners = cell.num_learners;
      variant.protocol.softsync_n = cell.softsync_n.value_or(cell.num_learners);
      variant.lr.mode = mode;

      SweepRow row;
      row.batch_size = cell.batch_size;
      row.num_learners = cell.num_learners;
      row.softsync_n = variant.protocol.softsync_n;
      row.policy = mode == RateMode::kConstant ? "constant" : "staleness_inverse";
      try {
        const RunTrace trace = options.concurrent ? run_concurrent(variant.sim_config())
                                                  : run_simulation(variant.sim_config());
        row.status = classify_run(trace.loss_curve);
        row.final_loss = final_loss_of(trace);
        row.time_per_epoch = time_per_epoch(trace, variant.objective.dataset_size);
        row.mean_staleness = summarize_staleness(trace.staleness).mean;
      } catch (const std::exception&) {
        row.status = RunStatus::kNoConvergence;
        row.final_loss = std::numeric_limits<double>::quiet_NaN();
      }
      result.rows.push_back(std::move(row));
    }
  }

  std::string body = "# config_digest=" + result.digest + "\n";
  body += "batch_size,num_learners,n,policy,status,final_loss,time_per_epoch,mean_staleness\n";
  for (const SweepRow& row : result.rows) {
    body += std::to_string(row.batch_size) + "," + std::to_string(row.num_learners) + "," +
            std::to_string(row.softsync_n) + "," + row.policy + "," + to_string(row.status) +
            "," + format_double(row.final_loss) + "," + format_double(row.time_per_epoch) +
            "," + format_double(row.mean_staleness) + "\n";
  }
  result.summary_csv = options.out_dir / "sweep.csv";
  write_text(result.summary_csv, body);
  return result;
}

CompareResult compare_policies(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  ensure_dir(options.out_dir);
  const std::string digest = config_digest(config);

  auto run_mode = [&](RateMode mode) {
    ExperimentConfig variant = config;
    variant.lr.mode = mode;
    SimConfig sim = variant.sim_config();
    return options.concurrent ? run_concurrent(sim) : run_simulation(sim);
  };
  const RunTrace constant_trace = run_mode(RateMode::kConstant);
  const RunTrace staleness_trace = run_mode(RateMode::kStalenessInverse);

  CompareResult result;
  result.constant_status = classify_run(constant_trace.loss_curve);
  result.staleness_status = classify_run(staleness_trace.loss_curve);
  result.constant_final_loss = final_loss_of(constant_trace);
  result.staleness_final_loss = final_loss_of(staleness_trace);

  const bool constant_ok = result.constant_status == RunStatus::kConverged;
  const bool staleness_ok = result.staleness_status == RunStatus::kConverged;
  if (constant_ok && staleness_ok) {
    result.verdict = "both-converged";
  } else if (staleness_ok) {
    result.verdict = "only-staleness-converged";
  } else if (!constant_ok) {
    result.verdict = "both-NC";
  } else {
    result.verdict = "only-constant-converged";
  }

  result.constant_csv = options.out_dir / "loss_curve_constant.csv";
  result.staleness_csv = options.out_dir / "loss_curve_staleness.csv";
  write_loss_curve_csv(result.constant_csv, digest, constant_trace.loss_curve);
  write_loss_curve_csv(result.staleness_csv, digest, staleness_trace.loss_curve);

  result.report_json = options.out_dir / "compare.json";
  write_json_file(result.report_json,
                  {{"config_digest", digest},
                   {"verdict", result.verdict},
                   {"constant",
                    {{"status", to_string(result.constant_status)},
                     {"final_loss", result.constant_final_loss}}},
                   {"staleness_inverse",
                    {{"status", to_string(result.staleness_status)},
                     {"final_loss", result.staleness_final_loss}}}});
  return result;
}

}  // namespace asgd
