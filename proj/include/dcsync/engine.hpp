#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcsync/history.hpp"
#include "dcsync/model_db.hpp"
#include "dcsync/sync.hpp"
#include "dcsync/workloads.hpp"

namespace dcsync {

// Artificial delay inserted once per worker per iteration, between computing
// the update and requesting the write.
struct StragglerModel {
  enum class Kind : std::uint8_t { none, uniform, slow_worker };

  Kind kind = Kind::none;
  double lo_ms = 0.0;
  double hi_ms = 0.0;
  WorkerId worker = 0;
  double fixed_ms = 0.0;

  static StragglerModel none() { return {}; }
  static StragglerModel uniform(double lo_ms, double hi_ms);
  static StragglerModel slow_worker(WorkerId worker, double fixed_ms);

  // Deterministic in (timing_seed, worker, iter).
  std::chrono::duration<double, std::milli> delay(WorkerId worker, Iteration iter,
                                                  std::uint64_t timing_seed) const;
  // "none", "uniform:LO:HI", "slow:WORKER:MS"; parse_straggler accepts the same.
  std::string name() const;
};

StragglerModel parse_straggler(std::string_view text);

struct RunConfig {
  ProtocolConfig protocol;
  int workers = 1;
  std::shared_ptr<const Dataset> dataset;
  GdConfig gd;
  StragglerModel straggler;
  bool record_history = false;
  std::uint64_t timing_seed = 0;
  std::chrono::milliseconds watchdog{10'000};
  std::vector<double> initial_theta;  // empty: all zeros

  void validate() const;
};

struct RunResult {
  std::vector<double> final_theta;
  Iteration iterations = 0;
  double wall_ms = 0.0;
  std::vector<double> per_iteration_ms;
  std::optional<History> history;
  double final_loss = 0.0;
  // Largest (write iteration - completed frontier) observed at execution.
  Iteration max_write_lead = 0;
};

// Stop decision taken when every write of iteration `alpha` has executed:
// stop at alpha once |theta[alpha] - theta[alpha-1]| <= tol or alpha reaches
// max_iters. Throws DivergenceError on a non-finite step.
std::optional<Iteration> stop_rule(const GdConfig& gd, Iteration alpha,
                                   const ParameterDatabase& db);

// Runs p worker threads against one scheduler and returns the parameters as
// of the stop iteration T.
RunResult run_parallel(const RunConfig& cfg);

// Mean after dropping the 2 smallest and 2 largest values; needs >= 5 values.
double trimmed_mean(std::span<const double> values);

struct TimedRun {
  std::vector<RunResult> runs;
  double trimmed_mean_ms = 0.0;
};

// `repeats` runs (>= 5) with timing seeds timing_seed + r and an unchanged
// workload.
TimedRun timed_run(const RunConfig& cfg, int repeats);

}  // namespace dcsync
