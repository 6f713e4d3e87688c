#include "asgd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace asgd {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& reason) {
  throw ConfigError("config error at " + path + ": " + reason);
}

void expect_keys(const json& node, const std::string& path,
                 const std::set<std::string>& allowed) {
  if (!node.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : node.items()) {
    if (!allowed.contains(key)) fail(path + "/" + key, "unknown key");
  }
}

template <typename T>
T get_required(const json& node, const std::string& path, const char* key) {
  if (!node.contains(key)) fail(path + "/" + key, "missing required key");
  try {
    return node.at(key).get<T>();
  } catch (const json::exception&) {
    fail(path + "/" + key, "wrong type");
  }
}

template <typename T>
T get_or(const json& node, const std::string& path, const char* key, T fallback) {
  if (!node.contains(key)) return fallback;
  try {
    return node.at(key).get<T>();
  } catch (const json::exception&) {
    fail(path + "/" + key, "wrong type");
  }
}

TimingModel parse_timing(const json& node, const std::string& path) {
  expect_keys(node, path, {"kind", "duration", "jitter"});
  TimingModel model;
  const std::string kind = get_or<std::string>(node, path, "kind", "constant");
  if (kind == "constant") {
    model.kind = TimingModel::Kind::kConstant;
  } else if (kind == "uniform_jitter") {
    model.kind = TimingModel::Kind::kUniformJitter;
  } else {
    fail(path + "/kind", "expected constant or uniform_jitter");
  }
  model.duration = get_required<double>(node, path, "duration");
  model.jitter = get_or<double>(node, path, "jitter", 0.0);
  return model;
}

json timing_to_json(const TimingModel& model) {
  json node = {{"kind", model.kind == TimingModel::Kind::kConstant ? "constant"
                                                                   : "uniform_jitter"},
               {"duration", model.duration}};
  if (model.kind == TimingModel::Kind::kUniformJitter) node["jitter"] = model.jitter;
  return node;
}

ObjectiveSpec parse_objective(const json& node, const std::string& path) {
  expect_keys(node, path,
              {"kind", "dataset_size", "seed", "diagonal", "matrix", "linear", "noise_scale",
               "dimension", "feature_scale", "layers"});
  ObjectiveSpec spec;
  spec.kind = get_required<std::string>(node, path, "kind");
  spec.dataset_size = get_required<int>(node, path, "dataset_size");
  spec.seed = get_or<std::uint64_t>(node, path, "seed", 1);
  if (spec.kind == "quadratic") {
    spec.diagonal = get_or<std::vector<double>>(node, path, "diagonal", {});
    spec.matrix = get_or<std::vector<std::vector<double>>>(node, path, "matrix", {});
    spec.linear = get_or<std::vector<double>>(node, path, "linear", {});
    spec.noise_scale = get_or<double>(node, path, "noise_scale", 0.0);
    if (spec.diagonal.empty() == spec.matrix.empty()) {
      fail(path, "quadratic objective needs exactly one of diagonal or matrix");
    }
  } else if (spec.kind == "logistic") {
    spec.dimension = get_required<int>(node, path, "dimension");
    spec.feature_scale = get_or<double>(node, path, "feature_scale", 1.0);
  } else if (spec.kind == "mlp") {
    spec.layers = get_required<std::vector<int>>(node, path, "layers");
  } else {
    fail(path + "/kind", "expected quadratic, logistic or mlp");
  }
  return spec;
}

LearningRatePolicy parse_lr(const json& node, const std::string& path, double& momentum) {
  expect_keys(node, path, {"mode", "base", "gamma", "momentum", "decay"});
  LearningRatePolicy policy;
  const std::string mode = get_required<std::string>(node, path, "mode");
  if (mode == "constant") {
    policy.mode = RateMode::kConstant;
  } else if (mode == "staleness_inverse") {
    policy.mode = RateMode::kStalenessInverse;
  } else if (mode == "exponential_penalty") {
    policy.mode = RateMode::kExponentialPenalty;
  } else {
    fail(path + "/mode", "expected constant, staleness_inverse or exponential_penalty");
  }
  policy.base = get_required<double>(node, path, "base");
  policy.penalty_gamma = get_or<double>(node, path, "gamma", 0.95);
  momentum = get_or<double>(node, path, "momentum", 0.0);
  if (node.contains("decay")) {
    const json& decay = node.at("decay");
    expect_keys(decay, path + "/decay", {"milestones", "factor"});
    StepDecay step;
    step.milestones = get_required<std::vector<double>>(decay, path + "/decay", "milestones");
    step.factor = get_required<double>(decay, path + "/decay", "factor");
    policy.decay = step;
  }
  return policy;
}

}  // namespace

std::shared_ptr<const Objective> ObjectiveSpec::build() const {
  if (kind == "quadratic") {
    if (!diagonal.empty()) {
      std::vector<double> b = linear;
      if (b.empty()) b.assign(diagonal.size(), 0.0);
      return QuadraticObjective::diagonal(diagonal, b, dataset_size, noise_scale, seed);
    }
    const std::size_t d = matrix.size();
    std::vector<double> flat;
    flat.reserve(d * d);
    for (const auto& row : matrix) {
      if (row.size() != d) throw ConfigError("quadratic matrix must be square");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    std::vector<double> b = linear;
    if (b.empty()) b.assign(d, 0.0);
    return std::make_shared<QuadraticObjective>(std::move(flat), std::move(b), dataset_size,
                                                noise_scale, seed);
  }
  if (kind == "logistic") {
    return std::make_shared<LogisticRegressionObjective>(dimension, dataset_size, seed,
                                                         feature_scale);
  }
  if (kind == "mlp") {
    return std::make_shared<TinyMlpObjective>(layers, dataset_size, seed);
  }
  throw ConfigError("unknown objective kind: " + kind);
}

SimConfig ExperimentConfig::sim_config(int replicate) const {
  SimConfig sim;
  sim.protocol = protocol;
  sim.objective = objective.build();
  sim.lr = lr;
  sim.momentum = momentum;
  sim.master_seed = master_seed + static_cast<std::uint64_t>(replicate);
  sim.learners =
      homogeneous_learners(protocol.num_learners, compute_time, comm_time, sim.master_seed);
  sim.stop = stop;
  sim.loss_sample_interval = loss_sample_interval;
  return sim;
}

BoundConstants ExperimentConfig::bound_constants() const {
  BoundConstants constants;
  constants.c1 = theory.c1;
  constants.c2 = theory.c2;
  constants.c3 = theory.c3;
  constants.c4 = theory.c4;
  constants.batch_size = protocol.batch_size;
  constants.aggregation_count = protocol.aggregation_count();
  constants.protocol_n = protocol.mode == SyncMode::kSoftsync ? protocol.softsync_n : 1;
  return constants;
}

void ExperimentConfig::validate() const {
  sim_config(0).validate();
  if (replicates < 1) throw ConfigError("replicates must be positive");
  if (!(theory.c1 > 0 && theory.c2 > 0 && theory.c3 > 0 && theory.c4 > 0)) {
    throw ConfigError("theory constants must be positive");
  }
  for (const SweepCell& cell : sweep_cells) {
    ExperimentConfig variant = *this;
    variant.sweep_cells.clear();
    variant.protocol.batch_size = cell.batch_size;
    variant.protocol.num_learners = cell.num_learners;
    variant.protocol.softsync_n = cell.softsync_n.value_or(cell.num_learners);
    variant.validate();
  }
}

ExperimentConfig parse_config(const json& document) {
  const std::string root = "#";
  expect_keys(document, root,
              {"objective", "protocol", "lr", "timing", "stop", "seeds",
               "loss_sample_interval", "theory", "sweep"});
  ExperimentConfig config;

  if (!document.contains("objective")) fail(root + "/objective", "missing required key");
  config.objective = parse_objective(document.at("objective"), root + "/objective");

  if (!document.contains("protocol")) fail(root + "/protocol", "missing required key");
  const json& protocol = document.at("protocol");
  expect_keys(protocol, root + "/protocol", {"mode", "n", "num_learners", "batch_size"});
  const std::string mode = get_required<std::string>(protocol, root + "/protocol", "mode");
  if (mode == "hardsync") {
    config.protocol.mode = SyncMode::kHardsync;
  } else if (mode == "softsync") {
    config.protocol.mode = SyncMode::kSoftsync;
  } else {
    fail(root + "/protocol/mode", "expected hardsync or softsync");
  }
  config.protocol.num_learners =
      get_required<int>(protocol, root + "/protocol", "num_learners");
  config.protocol.batch_size = get_required<int>(protocol, root + "/protocol", "batch_size");
  if (config.protocol.mode == SyncMode::kSoftsync) {
    config.protocol.softsync_n = get_required<int>(protocol, root + "/protocol", "n");
  } else if (protocol.contains("n")) {
    fail(root + "/protocol/n", "n applies to softsync only");
  }

  if (!document.contains("lr")) fail(root + "/lr", "missing required key");
  config.lr = parse_lr(document.at("lr"), root + "/lr", config.momentum);

  if (document.contains("timing")) {
    const json& timing = document.at("timing");
    expect_keys(timing, root + "/timing", {"compute", "comm"});
    if (timing.contains("compute")) {
      config.compute_time = parse_timing(timing.at("compute"), root + "/timing/compute");
    }
    if (timing.contains("comm")) {
      config.comm_time = parse_timing(timing.at("comm"), root + "/timing/comm");
    }
  }

  if (!document.contains("stop")) fail(root + "/stop", "missing required key");
  const json& stop = document.at("stop");
  expect_keys(stop, root + "/stop", {"updates", "epochs"});
  if (stop.contains("updates") == stop.contains("epochs")) {
    fail(root + "/stop", "expected exactly one of updates or epochs");
  }
  if (stop.contains("updates")) {
    config.stop = StopCondition::after_updates(
        get_required<std::uint64_t>(stop, root + "/stop", "updates"));
  } else {
    config.stop =
        StopCondition::after_epochs(get_required<double>(stop, root + "/stop", "epochs"));
  }

  if (document.contains("seeds")) {
    const json& seeds = document.at("seeds");
    expect_keys(seeds, root + "/seeds", {"master", "replicates"});
    config.master_seed = get_or<std::uint64_t>(seeds, root + "/seeds", "master", 1);
    config.replicates = get_or<int>(seeds, root + "/seeds", "replicates", 1);
  }

  config.loss_sample_interval =
      get_or<std::uint64_t>(document, root, "loss_sample_interval", 50);

  if (document.contains("theory")) {
    const json& theory = document.at("theory");
    expect_keys(theory, root + "/theory", {"c1", "c2", "c3", "c4", "warmup_updates"});
    config.theory.c1 = get_or<double>(theory, root + "/theory", "c1", 1.0);
    config.theory.c2 = get_or<double>(theory, root + "/theory", "c2", 1.0);
    config.theory.c3 = get_or<double>(theory, root + "/theory", "c3", 1.0);
    config.theory.c4 = get_or<double>(theory, root + "/theory", "c4", 1.0);
    config.theory.warmup_updates =
        get_or<std::uint64_t>(theory, root + "/theory", "warmup_updates", 0);
  }

  if (document.contains("sweep")) {
    const json& sweep = document.at("sweep");
    expect_keys(sweep, root + "/sweep", {"cells"});
    const json& cells = sweep.contains("cells") ? sweep.at("cells") : json::array();
    if (!cells.is_array()) fail(root + "/sweep/cells", "expected an array");
    int index = 0;
    for (const json& cell : cells) {
      const std::string path = root + "/sweep/cells/" + std::to_string(index++);
      expect_keys(cell, path, {"batch_size", "num_learners", "n"});
      SweepCell parsed;
      parsed.batch_size = get_required<int>(cell, path, "batch_size");
      parsed.num_learners = get_required<int>(cell, path, "num_learners");
      if (cell.contains("n")) parsed.softsync_n = get_required<int>(cell, path, "n");
      config.sweep_cells.push_back(parsed);
    }
  }

  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json document;
  try {
    in >> document;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(document);
}

json to_json(const ExperimentConfig& config) {
  json objective = {{"kind", config.objective.kind},
                    {"dataset_size", config.objective.dataset_size},
                    {"seed", config.objective.seed}};
  if (config.objective.kind == "quadratic") {
    if (!config.objective.diagonal.empty()) {
      objective["diagonal"] = config.objective.diagonal;
    } else {
      objective["matrix"] = config.objective.matrix;
    }
    if (!config.objective.linear.empty()) objective["linear"] = config.objective.linear;
    objective["noise_scale"] = config.objective.noise_scale;
  } else if (config.objective.kind == "logistic") {
    objective["dimension"] = config.objective.dimension;
    objective["feature_scale"] = config.objective.feature_scale;
  } else if (config.objective.kind == "mlp") {
    objective["layers"] = config.objective.layers;
  }

  json protocol = {{"mode", config.protocol.mode == SyncMode::kHardsync ? "hardsync"
                                                                        : "softsync"},
                   {"num_learners", config.protocol.num_learners},
                   {"batch_size", config.protocol.batch_size}};
  if (config.protocol.mode == SyncMode::kSoftsync) {
    protocol["n"] = config.protocol.softsync_n;
  }

  const char* mode = "constant";
  if (config.lr.mode == RateMode::kStalenessInverse) mode = "staleness_inverse";
  if (config.lr.mode == RateMode::kExponentialPenalty) mode = "exponential_penalty";
  json lr = {{"mode", mode}, {"base", config.lr.base}};
  if (config.lr.mode == RateMode::kExponentialPenalty) lr["gamma"] = config.lr.penalty_gamma;
  if (config.momentum != 0.0) lr["momentum"] = config.momentum;
  if (config.lr.decay) {
    lr["decay"] = {{"milestones", config.lr.decay->milestones},
                   {"factor", config.lr.decay->factor}};
  }

  json stop;
  if (config.stop.kind == StopCondition::Kind::kUpdates) {
    stop = {{"updates", config.stop.updates}};
  } else {
    stop = {{"epochs", config.stop.epochs}};
  }

  json document = {{"objective", objective},
                   {"protocol", protocol},
                   {"lr", lr},
                   {"timing",
                    {{"compute", timing_to_json(config.compute_time)},
                     {"comm", timing_to_json(config.comm_time)}}},
                   {"stop", stop},
                   {"seeds", {{"master", config.master_seed}, {"replicates", config.replicates}}},
                   {"loss_sample_interval", config.loss_sample_interval},
                   {"theory",
                    {{"c1", config.theory.c1},
                     {"c2", config.theory.c2},
                     {"c3", config.theory.c3},
                     {"c4", config.theory.c4},
                     {"warmup_updates", config.theory.warmup_updates}}}};
  if (!config.sweep_cells.empty()) {
    json cells = json::array();
    for (const SweepCell& cell : config.sweep_cells) {
      json node = {{"batch_size", cell.batch_size}, {"num_learners", cell.num_learners}};
      if (cell.softsync_n) node["n"] = *cell.softsync_n;
      cells.push_back(node);
    }
    document["sweep"] = {{"cells", cells}};
  }
  return document;
}

std::string config_digest(const ExperimentConfig& config) {
  const std::string canonical = to_json(config).dump();
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char byte : canonical) {
    hash ^= byte;
    hash *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << hash;
  return out.str();
}

}  // namespace asgd
