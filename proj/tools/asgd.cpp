#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "asgd/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  bool concurrent = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool wants_replicates = true) {
  cmd->add_option("--config", args.config_path, "experiment config file (JSON)")
      ->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "override the master seed");
  if (wants_replicates) {
    cmd->add_option("--replicates", args.replicates, "override the replicate count");
  }
  cmd->add_flag("--concurrent", args.concurrent,
                "run the threaded executor instead of the deterministic simulator");
}

asgd::ExperimentConfig load(const CommonArgs& args) {
  asgd::ExperimentConfig config = asgd::load_config(args.config_path);
  if (args.seed) config.master_seed = *args.seed;
  if (args.replicates) config.replicates = *args.replicates;
  config.validate();
  return config;
}

int run_command(const CommonArgs& args) {
  const asgd::ExperimentConfig config = load(args);
  const asgd::RunResult result = asgd::run_single(config, {args.out_dir, args.concurrent});
  for (const asgd::ReplicateResult& rep : result.replicates) {
    std::cout << "replicate status=" << asgd::to_string(rep.status)
              << " final_loss=" << rep.final_loss << "\n";
    std::cout << "  " << rep.loss_curve_csv.string() << "\n";
    std::cout << "  " << rep.trace_json.string() << "\n";
    std::cout << "  " << rep.bound_report_json.string() << "\n";
  }
  std::cout << result.run_json.string() << "\n";
  return 0;
}

int sweep_command(const CommonArgs& args) {
  const asgd::ExperimentConfig config = load(args);
  const asgd::SweepResult result = asgd::run_sweep(config, {args.out_dir, args.concurrent});
  for (const asgd::SweepRow& row : result.rows) {
    std::cout << "mu=" << row.batch_size << " lambda=" << row.num_learners
              << " policy=" << row.policy << " status=" << asgd::to_string(row.status)
              << " final_loss=" << row.final_loss << "\n";
  }
  std::cout << result.summary_csv.string() << "\n";
  return 0;
}

int compare_command(const CommonArgs& args) {
  const asgd::ExperimentConfig config = load(args);
  const asgd::CompareResult result =
      asgd::compare_policies(config, {args.out_dir, args.concurrent});
  std::cout << "verdict=" << result.verdict << "\n";
  std::cout << result.constant_csv.string() << "\n";
  std::cout << result.staleness_csv.string() << "\n";
  std::cout << result.report_json.string() << "\n";
  return 0;
}

int theory_command(const CommonArgs& args, const std::string& trace_path) {
  const asgd::ExperimentConfig config = load(args);
  int aggregation_count = 1;
  int batch_size = 1;
  const asgd::StalenessTrace trace =
      asgd::read_trace_json(trace_path, aggregation_count, batch_size);
  if (trace.protocol_n < 1 || trace.num_learners < 1) {
    throw asgd::ConfigError("trace file " + trace_path +
                            " was not produced by a softsync run");
  }

  asgd::ExperimentConfig effective = config;
  effective.protocol.mode = asgd::SyncMode::kSoftsync;
  effective.protocol.num_learners = trace.num_learners;
  effective.protocol.softsync_n = trace.protocol_n;
  effective.protocol.batch_size = batch_size;
  const nlohmann::json report =
      asgd::bound_report_or_rejection(effective, trace, asgd::config_digest(effective));

  std::filesystem::create_directories(args.out_dir);
  const std::filesystem::path out = std::filesystem::path(args.out_dir) / "bound_report.json";
  std::ofstream(out) << report.dump(2) << "\n";
  std::cout << report.dump(2) << "\n";
  std::cout << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asynchronous-SGD training engine with a simulated parameter-server cluster"};
  app.require_subcommand(1);

  CommonArgs run_args;
  CLI::App* run = app.add_subcommand("run", "run a single experiment");
  add_common(run, run_args);

  CommonArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "run a (batch size, learners) sweep");
  add_common(sweep, sweep_args, /*wants_replicates=*/false);

  CommonArgs compare_args;
  CLI::App* compare =
      app.add_subcommand("compare", "compare constant and staleness-inverse policies");
  add_common(compare, compare_args, /*wants_replicates=*/false);

  CommonArgs theory_args;
  std::string trace_path;
  CLI::App* theory = app.add_subcommand("theory", "bound report from a staleness trace");
  add_common(theory, theory_args, /*wants_replicates=*/false);
  theory->add_option("--trace", trace_path, "staleness trace JSON written by run")->required();

  try {
    app.parse(argc, argv);
    if (run->parsed()) return run_command(run_args);
    if (sweep->parsed()) return sweep_command(sweep_args);
    if (compare->parsed()) return compare_command(compare_args);
    if (theory->parsed()) return theory_command(theory_args, trace_path);
    return 2;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const asgd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
