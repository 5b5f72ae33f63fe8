#include "dcsync/engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace dcsync {

StragglerModel StragglerModel::uniform(double lo_ms, double hi_ms) {
  if (!(lo_ms >= 0.0) || !(hi_ms >= lo_ms)) {
    throw ConfigError("uniform straggler needs 0 <= LO <= HI");
  }
  StragglerModel m;
  m.kind = Kind::uniform;
  m.lo_ms = lo_ms;
  m.hi_ms = hi_ms;
  return m;
}

StragglerModel StragglerModel::slow_worker(WorkerId worker, double fixed_ms) {
  if (worker < 0) throw ConfigError("slow worker id must be non-negative");
  if (!(fixed_ms >= 0.0)) throw ConfigError("straggler delay must be non-negative");
  StragglerModel m;
  m.kind = Kind::slow_worker;
  m.worker = worker;
  m.fixed_ms = fixed_ms;
  return m;
}

std::chrono::duration<double, std::milli> StragglerModel::delay(
    WorkerId w, Iteration iter, std::uint64_t timing_seed) const {
  switch (kind) {
    case Kind::none:
      return {};
    case Kind::slow_worker:
      return std::chrono::duration<double, std::milli>(w == worker ? fixed_ms : 0.0);
    case Kind::uniform: {
      std::seed_seq seq{static_cast<std::uint32_t>(timing_seed),
                        static_cast<std::uint32_t>(timing_seed >> 32),
                        static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(iter),
                        static_cast<std::uint32_t>(iter >> 32)};
      std::mt19937_64 rng(seq);
      return std::chrono::duration<double, std::milli>(
          std::uniform_real_distribution<double>(lo_ms, hi_ms)(rng));
    }
  }
  return {};
}

namespace {

std::string format_ms(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_ms(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("bad straggler number '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  while (true) {
    const auto pos = s.find(sep);
    parts.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) return parts;
    s.remove_prefix(pos + 1);
  }
}

}  // namespace

std::string StragglerModel::name() const {
  switch (kind) {
    case Kind::none:
      return "none";
    case Kind::uniform:
      return "uniform:" + format_ms(lo_ms) + ":" + format_ms(hi_ms);
    case Kind::slow_worker:
      return "slow:" + std::to_string(worker) + ":" + format_ms(fixed_ms);
  }
  return "?";
}

StragglerModel parse_straggler(std::string_view text) {
  const auto parts = split(text, ':');
  if (parts.size() == 1 && parts[0] == "none") return StragglerModel::none();
  if (parts.size() == 3 && parts[0] == "uniform") {
    return StragglerModel::uniform(parse_ms(parts[1]), parse_ms(parts[2]));
  }
  if (parts.size() == 3 && parts[0] == "slow") {
    WorkerId w = -1;
    auto [ptr, ec] = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), w);
    if (ec != std::errc{} || ptr != parts[1].data() + parts[1].size()) {
      throw ConfigError("bad slow worker id '" + std::string(parts[1]) + "'");
    }
    return StragglerModel::slow_worker(w, parse_ms(parts[2]));
  }
  throw ConfigError("unknown straggler model '" + std::string(text) +
                    "' (expected none, uniform:LO:HI or slow:WORKER:MS)");
}

void RunConfig::validate() const {
  if (!dataset) throw ConfigError("run needs a dataset");
  if (workers < 1) throw ConfigError("run needs at least one worker");
  if (static_cast<std::size_t>(workers) > dataset->num_features()) {
    throw ConfigError("more workers than features");
  }
  if (straggler.kind == StragglerModel::Kind::slow_worker && straggler.worker >= workers) {
    throw ConfigError("slow worker id " + std::to_string(straggler.worker) +
                      " is not a worker of this run");
  }
  if (watchdog.count() <= 0) throw ConfigError("watchdog interval must be positive");
  if (!initial_theta.empty() && initial_theta.size() != dataset->num_features()) {
    throw DimensionMismatch("initial theta does not match feature count");
  }
  gd.validate(dataset->num_examples());
}

std::optional<Iteration> stop_rule(const GdConfig& gd, Iteration alpha,
                                   const ParameterDatabase& db) {
  const auto current = db.snapshot_at(alpha);
  const auto previous = db.snapshot_at(alpha - 1);
  const double step = step_norm(current, previous);
  if (!std::isfinite(step)) {
    throw DivergenceError("parameters became non-finite at iteration " +
                          std::to_string(alpha));
  }
  if (step <= gd.tol || alpha >= gd.max_iters) return alpha;
  return std::nullopt;
}

RunResult run_parallel(const RunConfig& cfg) {
  cfg.validate();
  const Dataset& data = *cfg.dataset;
  const int p = cfg.workers;
  const auto partitions = PartitionSet::contiguous(data.num_features(), p);
  InitRule init;
  if (!cfg.initial_theta.empty()) {
    init = [&](std::size_t f) { return cfg.initial_theta[f]; };
  }
  ParameterDatabase db(partitions, cfg.protocol.ring_depth(), init);

  RunResult result;
  if (cfg.record_history) result.history = History{p, {}};
  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&start] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  };
  std::vector<double> frontier_times;

  // Both hooks run at the scheduler's serialization point.
  SchedulerHooks hooks;
  hooks.on_executed = [&](const AccessOp& op) {
    if (result.history) result.history->append(op);
    if (op.kind == OpKind::write) {
      // Frontier as it stood when the write was admitted.
      Iteration before = op.iter - 1;
      const auto chunks = db.sync_state();
      for (PartitionId k = 0; k < p; ++k) {
        if (k != op.partition) before = std::min(before, chunks[k].chunk_iteration);
      }
      result.max_write_lead = std::max(result.max_write_lead, op.iter - before);
    }
  };
  hooks.on_frontier = [&](Iteration alpha, const ParameterDatabase& state) {
    frontier_times.push_back(elapsed_ms());
    return stop_rule(cfg.gd, alpha, state);
  };
  Scheduler scheduler(db, cfg.protocol, cfg.watchdog, std::move(hooks));

  auto worker_loop = [&](WorkerId w) {
    try {
      const std::size_t lo = partitions.begin(w);
      const std::size_t hi = partitions.end(w);
      std::vector<double> theta(data.num_features());
      for (Iteration a = 1;; ++a) {
        for (PartitionId k = 0; k < p; ++k) {
          auto values = scheduler.read(w, k, a);
          if (!values) return;
          std::copy(values->begin(), values->end(),
                    theta.begin() + static_cast<std::ptrdiff_t>(partitions.begin(k)));
        }
        const auto batch = select_batch(cfg.gd, a, data.num_examples());
        const auto chunk = updated_chunk(theta, data, cfg.gd, batch, lo, hi);
        const auto pause = cfg.straggler.delay(w, a, cfg.timing_seed);
        if (pause.count() > 0) std::this_thread::sleep_for(pause);
        if (!scheduler.write(w, a, chunk)) return;
      }
    } catch (...) {
      scheduler.abort(std::current_exception());
    }
  };

  {
    std::vector<std::jthread> threads;
    threads.reserve(p);
    for (WorkerId w = 0; w < p; ++w) threads.emplace_back(worker_loop, w);
  }
  result.wall_ms = elapsed_ms();

  if (auto error = scheduler.failure()) std::rethrow_exception(error);
  const auto stop = scheduler.stop_iteration();
  if (!stop) throw SchedulerFault("run ended without a stop decision");

  result.iterations = *stop;
  result.final_theta = db.snapshot_at(*stop);
  result.final_loss = loss(result.final_theta, data, cfg.gd.lambda);
  if (!std::isfinite(result.final_loss)) {
    throw DivergenceError("final loss is non-finite");
  }
  double prev = 0.0;
  for (double t : frontier_times) {
    result.per_iteration_ms.push_back(t - prev);
    prev = t;
  }
  return result;
}

double trimmed_mean(std::span<const double> values) {
  if (values.size() < 5) throw ConfigError("trimmed mean needs at least 5 values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto kept = std::span(sorted).subspan(2, sorted.size() - 4);
  return std::accumulate(kept.begin(), kept.end(), 0.0) / static_cast<double>(kept.size());
}

TimedRun timed_run(const RunConfig& cfg, int repeats) {
  if (repeats < 5) throw ConfigError("timed runs need at least 5 repeats");
  TimedRun out;
  std::vector<double> walls;
  for (int r = 0; r < repeats; ++r) {
    RunConfig run = cfg;
    run.timing_seed = cfg.timing_seed + static_cast<std::uint64_t>(r);
    out.runs.push_back(run_parallel(run));
    walls.push_back(out.runs.back().wall_ms);
  }
  out.trimmed_mean_ms = trimmed_mean(walls);
  return out;
}

}  // namespace dcsync
