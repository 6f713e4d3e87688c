#include "asgd/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>

#include "asgd/random.hpp"

namespace asgd {

double TimingModel::sample(std::mt19937_64& rng) const {
  switch (kind) {
    case Kind::kConstant:
      return duration;
    case Kind::kUniformJitter:
      return uniform_range(rng, duration * (1.0 - jitter), duration * (1.0 + jitter));
  }
  return duration;
}

void TimingModel::validate(bool allow_zero) const {
  if (allow_zero ? duration < 0.0 : duration <= 0.0) {
    throw ConfigError(allow_zero ? "duration must be non-negative"
                                 : "duration must be positive");
  }
  if (kind == Kind::kUniformJitter && (jitter < 0.0 || jitter >= 1.0)) {
    throw ConfigError("jitter must lie in [0, 1)");
  }
}

StopCondition StopCondition::after_updates(std::uint64_t updates) {
  return {Kind::kUpdates, updates, 0.0};
}

StopCondition StopCondition::after_epochs(double epochs) {
  return {Kind::kEpochs, 0, epochs};
}

void SimConfig::validate() const {
  protocol.validate();
  asgd::validate(lr);
  if (!objective) throw ConfigError("simulation needs an objective");
  if (learners.empty()) throw ConfigError("simulation needs at least one learner");
  if (static_cast<int>(learners.size()) != protocol.num_learners) {
    throw ConfigError("learner list size " + std::to_string(learners.size()) +
                      " does not match protocol num_learners " +
                      std::to_string(protocol.num_learners));
  }
  std::vector<bool> seen(learners.size(), false);
  for (const LearnerModel& learner : learners) {
    if (learner.id >= learners.size() || seen[learner.id]) {
      throw ConfigError("learner ids must cover 0..num_learners-1 exactly once");
    }
    seen[learner.id] = true;
    learner.compute_time.validate(/*allow_zero=*/false);
    learner.comm_time.validate(/*allow_zero=*/true);
  }
  if (stop.kind == StopCondition::Kind::kUpdates && stop.updates < 1) {
    throw ConfigError("stop condition needs at least one update");
  }
  if (stop.kind == StopCondition::Kind::kEpochs && !(stop.epochs > 0.0)) {
    throw ConfigError("stop condition needs a positive epoch count");
  }
  if (loss_sample_interval < 1) throw ConfigError("loss_sample_interval must be positive");
  if (!initial_theta.empty() &&
      static_cast<int>(initial_theta.size()) != objective->dimension()) {
    throw ConfigError("initial_theta dimension does not match the objective");
  }
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
}

std::vector<int> hardsync_round_batch(std::uint64_t master_seed, std::uint64_t round,
                                      int count, int dataset_size) {
  std::mt19937_64 rng(mix_seed(master_seed, 0xB47C ^ round));
  std::vector<int> indices(count);
  for (int& index : indices) index = uniform_index(rng, dataset_size);
  return indices;
}

std::vector<LearnerModel> homogeneous_learners(int count, TimingModel compute_time,
                                               TimingModel comm_time,
                                               std::uint64_t master_seed) {
  std::vector<LearnerModel> learners(count);
  for (int l = 0; l < count; ++l) {
    learners[l].id = static_cast<LearnerId>(l);
    learners[l].compute_time = compute_time;
    learners[l].comm_time = comm_time;
    learners[l].rng_seed = mix_seed(master_seed, 0x1EA8 + static_cast<std::uint64_t>(l));
  }
  return learners;
}

double time_per_epoch(const RunTrace& trace, int dataset_size) {
  if (trace.samples_processed == 0) throw std::invalid_argument("run processed no samples");
  const double epochs = epoch_of(trace.samples_processed, dataset_size);
  return trace.sim_wallclock / epochs;
}

namespace {

std::vector<double> resolve_initial_theta(const SimConfig& config) {
  if (!config.initial_theta.empty()) return config.initial_theta;
  return initial_weights(config.objective->dimension(), config.master_seed);
}

// Shared bookkeeping for both executors: loss-curve sampling, weight
// history and the stop condition.
class TraceRecorder {
 public:
  TraceRecorder(const SimConfig& config, const std::vector<double>& theta0)
      : config_(config) {
    record_point(0, 0.0, 0, theta0);
  }

  // Returns true when the run should stop.
  bool on_update(const ParameterServer& server, double now) {
    const std::uint64_t updates = server.updates_applied();
    if (config_.record_weight_history) {
      weight_history.push_back(server.weights().values);
    }
    bool stop = false;
    switch (config_.stop.kind) {
      case StopCondition::Kind::kUpdates:
        stop = updates >= config_.stop.updates;
        break;
      case StopCondition::Kind::kEpochs:
        stop = static_cast<double>(server.samples_processed()) >=
               config_.stop.epochs * config_.objective->dataset_size();
        break;
    }
    if (updates % config_.loss_sample_interval == 0 || stop) {
      record_point(updates, now, server.samples_processed(), server.weights().values);
    }
    return stop;
  }

  std::vector<LossPoint> loss_curve;
  std::vector<std::vector<double>> weight_history;

 private:
  void record_point(std::uint64_t updates, double now, std::uint64_t samples,
                    const std::vector<double>& theta) {
    if (!loss_curve.empty() && loss_curve.back().update_index == updates) return;
    LossPoint point;
    point.update_index = updates;
    point.sim_time = now;
    point.loss = full_loss(*config_.objective, theta);
    point.grad_norm_sq = gradient_norm_sq(*config_.objective, theta);
    point.epoch = epoch_of(samples, config_.objective->dataset_size());
    loss_curve.push_back(point);
  }

  const SimConfig& config_;
};

RunTrace finalize(ParameterServer&& server, TraceRecorder&& recorder, double wallclock) {
  RunTrace trace;
  trace.updates_applied = server.updates_applied();
  trace.samples_processed = server.samples_processed();
  trace.final_weights = server.weights().values;
  trace.staleness = server.trace();
  trace.update_log = server.update_log();
  trace.loss_curve = std::move(recorder.loss_curve);
  trace.weight_history = std::move(recorder.weight_history);
  trace.sim_wallclock = wallclock;
  return trace;
}

// ---------------------------------------------------------------------------
// Deterministic engine

struct Request {
  double arrival = 0.0;
  LearnerId learner = 0;
  std::uint64_t seq = 0;  // creation order, breaks remaining ties
  bool is_push = false;
  double service_duration = 0.0;
  GradientMessage gradient;  // push only

  friend bool operator<(const Request& a, const Request& b) {
    if (a.arrival != b.arrival) return a.arrival < b.arrival;
    if (a.learner != b.learner) return a.learner < b.learner;
    return a.seq < b.seq;
  }
};

struct Event {
  enum class Kind { kArrival, kServiceDone };
  double time = 0.0;
  LearnerId learner = 0;
  std::uint64_t seq = 0;
  Kind kind = Kind::kArrival;
  Request request;  // kArrival payload

  friend bool operator>(const Event& a, const Event& b) {
    if (a.time != b.time) return a.time > b.time;
    if (a.learner != b.learner) return a.learner > b.learner;
    return a.seq > b.seq;
  }
};

struct LearnerRuntime {
  LearnerModel model;
  std::mt19937_64 sampling_rng;
  std::mt19937_64 timing_rng;
};

class DeterministicEngine {
 public:
  explicit DeterministicEngine(const SimConfig& config)
      : config_(config),
        theta0_(resolve_initial_theta(config)),
        server_(config.protocol, config.lr, theta0_, config.objective->dataset_size(),
                config.momentum),
        recorder_(config, theta0_),
        contributed_(config.learners.size(), false) {
    learners_.resize(config.learners.size());
    for (const LearnerModel& model : config.learners) {
      LearnerRuntime& runtime = learners_[model.id];
      runtime.model = model;
      runtime.sampling_rng.seed(mix_seed(model.rng_seed, 0x5A17));
      runtime.timing_rng.seed(mix_seed(model.rng_seed, 0x7131));
    }
    if (config.protocol.mode == SyncMode::kHardsync) {
      round_.resize(config.learners.size());
    }
  }

  RunTrace run() {
    for (LearnerRuntime& runtime : learners_) {
      issue_pull(runtime, 0.0);
    }
    while (!done_ && !events_.empty()) {
      const Event event = events_.top();
      events_.pop();
      now_ = event.time;
      if (event.kind == Event::Kind::kArrival) {
        accept(event.request);
      } else {
        complete_service();
      }
      start_next_service();
    }
    if (!done_) {
      throw ConfigError("simulation drained its event queue before the stop condition");
    }
    return finalize(std::move(server_), std::move(recorder_), now_);
  }

 private:
  void schedule_arrival(Request request) {
    const std::uint64_t seq = next_seq_++;
    request.seq = seq;
    Event event;
    event.time = request.arrival;
    event.learner = request.learner;
    event.seq = seq;
    event.kind = Event::Kind::kArrival;
    event.request = std::move(request);
    events_.push(std::move(event));
  }

  void issue_pull(LearnerRuntime& runtime, double at) {
    Request request;
    request.arrival = at;
    request.learner = runtime.model.id;
    request.is_push = false;
    request.service_duration = runtime.model.comm_time.sample(runtime.timing_rng);
    schedule_arrival(std::move(request));
  }

  void accept(const Request& request) {
    const bool deferred = config_.protocol.mode == SyncMode::kHardsync && !request.is_push &&
                          contributed_[request.learner];
    if (deferred) {
      deferred_pulls_.push_back(request);
    } else {
      waiting_.insert(request);
    }
  }

  void start_next_service() {
    if (busy_ || done_ || waiting_.empty()) return;
    auto head = waiting_.begin();
    in_service_ = *head;
    waiting_.erase(head);
    busy_ = true;
    Event event;
    event.time = now_ + in_service_.service_duration;
    event.learner = in_service_.learner;
    event.seq = next_seq_++;
    event.kind = Event::Kind::kServiceDone;
    events_.push(std::move(event));
  }

  void complete_service() {
    busy_ = false;
    if (in_service_.is_push) {
      complete_push(in_service_);
    } else {
      complete_pull(in_service_);
    }
  }

  // The learner receives the weights; it computes the gradient on this
  // snapshot and its push arrives one compute duration later.
  void complete_pull(const Request& request) {
    LearnerRuntime& runtime = learners_[request.learner];
    const VersionedWeights snapshot = server_.pull();

    MinibatchSpec batch;
    if (config_.protocol.mode == SyncMode::kHardsync) {
      batch = hardsync_slice(request.learner);
    } else {
      batch.sample_indices.resize(config_.protocol.batch_size);
      for (int& index : batch.sample_indices) {
        index = uniform_index(runtime.sampling_rng, config_.objective->dataset_size());
      }
    }
    const double compute = runtime.model.compute_time.sample(runtime.timing_rng);
    const double push_comm = runtime.model.comm_time.sample(runtime.timing_rng);

    Request push;
    push.arrival = now_ + compute;
    push.learner = request.learner;
    push.is_push = true;
    push.service_duration = push_comm;
    push.gradient.gradient = minibatch_gradient(*config_.objective, snapshot.values, batch);
    push.gradient.learner_id = request.learner;
    push.gradient.computed_at = snapshot.timestamp;
    schedule_arrival(std::move(push));
  }

  void complete_push(Request& request) {
    const LearnerId learner = request.learner;
    if (config_.protocol.mode == SyncMode::kHardsync) {
      if (contributed_[learner]) {
        throw ProtocolError("learner " + std::to_string(learner) +
                            " pushed twice in one hardsync round");
      }
      round_[learner] = std::move(request.gradient);
      contributed_[learner] = true;
      ++round_count_;
      if (round_count_ == static_cast<int>(learners_.size())) {
        server_.hardsync_update(round_);
        round_count_ = 0;
        std::fill(contributed_.begin(), contributed_.end(), false);
        round_batch_.reset();
        for (Request& pull : deferred_pulls_) waiting_.insert(std::move(pull));
        deferred_pulls_.clear();
        after_update();
      }
    } else {
      if (server_.softsync_receive(std::move(request.gradient))) {
        after_update();
      }
    }
    if (!done_) {
      issue_pull(learners_[learner], now_);
    }
  }

  void after_update() {
    if (recorder_.on_update(server_, now_)) done_ = true;
  }

  MinibatchSpec hardsync_slice(LearnerId learner) {
    const std::uint64_t round = server_.updates_applied();
    if (!round_batch_ || round_batch_->first != round) {
      round_batch_ = {round, hardsync_round_batch(
                                 config_.master_seed, round,
                                 config_.protocol.batch_size * config_.protocol.num_learners,
                                 config_.objective->dataset_size())};
    }
    MinibatchSpec batch;
    const int mu = config_.protocol.batch_size;
    const auto begin = round_batch_->second.begin() + static_cast<std::ptrdiff_t>(learner) * mu;
    batch.sample_indices.assign(begin, begin + mu);
    return batch;
  }

  const SimConfig& config_;
  std::vector<double> theta0_;
  ParameterServer server_;
  TraceRecorder recorder_;

  std::vector<LearnerRuntime> learners_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::set<Request> waiting_;
  std::vector<Request> deferred_pulls_;
  std::vector<bool> contributed_;
  std::vector<GradientMessage> round_;
  int round_count_ = 0;
  std::optional<std::pair<std::uint64_t, std::vector<int>>> round_batch_;

  Request in_service_;
  bool busy_ = false;
  bool done_ = false;
  double now_ = 0.0;
  std::uint64_t next_seq_ = 0;
};

// ---------------------------------------------------------------------------
// Concurrent executor

class SharedServer {
 public:
  SharedServer(const SimConfig& config, const std::vector<double>& theta0)
      : config_(config),
        server_(config.protocol, config.lr, theta0, config.objective->dataset_size(),
                config.momentum),
        recorder_(config, theta0),
        contributed_(config.learners.size(), false),
        started_(std::chrono::steady_clock::now()) {
    if (config.protocol.mode == SyncMode::kHardsync) {
      round_.resize(config.learners.size());
    }
  }

  struct PullResult {
    VersionedWeights weights;
    std::uint64_t round = 0;
  };

  // Blocks under hardsync until the learner's previous contribution has
  // been folded into an update. Returns nothing once the run is over.
  std::optional<PullResult> pull(LearnerId learner) {
    std::unique_lock lock(mutex_);
    if (config_.protocol.mode == SyncMode::kHardsync) {
      round_released_.wait(lock, [&] { return stopped_ || !contributed_[learner]; });
    }
    if (stopped_) return std::nullopt;
    return PullResult{server_.pull(), server_.updates_applied()};
  }

  // Returns false once the run is over (the gradient may be dropped).
  bool push(GradientMessage message) {
    std::unique_lock lock(mutex_);
    if (stopped_) return false;
    if (config_.protocol.mode == SyncMode::kHardsync) {
      const LearnerId learner = message.learner_id;
      round_[learner] = std::move(message);
      contributed_[learner] = true;
      ++round_count_;
      if (round_count_ == static_cast<int>(round_.size())) {
        server_.hardsync_update(round_);
        round_count_ = 0;
        std::fill(contributed_.begin(), contributed_.end(), false);
        after_update();
        round_released_.notify_all();
      }
    } else {
      if (server_.softsync_receive(std::move(message))) {
        after_update();
      }
    }
    return !stopped_;
  }

  RunTrace take_trace() {
    return finalize(std::move(server_), std::move(recorder_), elapsed());
  }

 private:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  }

  void after_update() {
    if (recorder_.on_update(server_, elapsed())) {
      stopped_ = true;
      round_released_.notify_all();
    }
  }

  const SimConfig& config_;
  ParameterServer server_;
  TraceRecorder recorder_;
  std::mutex mutex_;
  std::condition_variable round_released_;
  std::vector<GradientMessage> round_;
  std::vector<bool> contributed_;
  int round_count_ = 0;
  bool stopped_ = false;
  std::chrono::steady_clock::time_point started_;
};

void concurrent_learner(const SimConfig& config, SharedServer& shared,
                        const LearnerModel& model) {
  std::mt19937_64 sampling_rng(mix_seed(model.rng_seed, 0x5A17));
  const int mu = config.protocol.batch_size;
  const int dataset = config.objective->dataset_size();
  while (true) {
    const auto pulled = shared.pull(model.id);
    if (!pulled) return;

    MinibatchSpec batch;
    if (config.protocol.mode == SyncMode::kHardsync) {
      batch.sample_indices.resize(mu);
      const auto round = hardsync_round_batch(config.master_seed, pulled->round,
                                              mu * config.protocol.num_learners, dataset);
      const auto begin = round.begin() + static_cast<std::ptrdiff_t>(model.id) * mu;
      std::copy(begin, begin + mu, batch.sample_indices.begin());
    } else {
      batch.sample_indices.resize(mu);
      for (int& index : batch.sample_indices) index = uniform_index(sampling_rng, dataset);
    }

    GradientMessage message;
    message.gradient = minibatch_gradient(*config.objective, pulled->weights.values, batch);
    message.learner_id = model.id;
    message.computed_at = pulled->weights.timestamp;
    if (!shared.push(std::move(message))) return;
  }
}

}  // namespace

RunTrace run_simulation(const SimConfig& config) {
  config.validate();
  DeterministicEngine engine(config);
  return engine.run();
}

RunTrace run_concurrent(const SimConfig& config) {
  config.validate();
  const std::vector<double> theta0 = resolve_initial_theta(config);
  SharedServer shared(config, theta0);
  {
    std::vector<std::jthread> threads;
    threads.reserve(config.learners.size());
    for (const LearnerModel& model : config.learners) {
      threads.emplace_back(concurrent_learner, std::cref(config), std::ref(shared),
                           std::cref(model));
    }
  }
  return shared.take_trace();
}

std::vector<std::pair<int, double>> measure_speedup(const SimConfig& config,
                                                    const std::vector<int>& lambdas) {
  config.validate();
  auto run_at = [&](int lambda) {
    SimConfig variant = config;
    variant.protocol.num_learners = lambda;
    if (variant.protocol.mode == SyncMode::kSoftsync) {
      variant.protocol.softsync_n = std::min(variant.protocol.softsync_n, lambda);
    }
    variant.learners = homogeneous_learners(lambda, config.learners.front().compute_time,
                                            config.learners.front().comm_time,
                                            config.master_seed);
    const RunTrace trace = run_simulation(variant);
    return time_per_epoch(trace, config.objective->dataset_size());
  };

  const double baseline = run_at(1);
  std::vector<std::pair<int, double>> speedups;
  speedups.reserve(lambdas.size());
  for (int lambda : lambdas) {
    const double at_lambda = lambda == 1 ? baseline : run_at(lambda);
    speedups.emplace_back(lambda, baseline / at_lambda);
  }
  return speedups;
}

}  // namespace asgd
