#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dcsync/model_db.hpp"
#include "dcsync/types.hpp"

namespace dcsync {

enum class ProtocolKind : std::uint8_t { bsp, data_centric, bounded_delay, fully_async };

struct ProtocolConfig {
  ProtocolKind kind = ProtocolKind::data_centric;
  Iteration delta = 0;  // only read for bounded_delay

  static ProtocolConfig bsp() { return {ProtocolKind::bsp, 0}; }
  static ProtocolConfig data_centric() { return {ProtocolKind::data_centric, 0}; }
  static ProtocolConfig bounded_delay(Iteration d) {
    if (d < 0) throw ConfigError("delay must be non-negative");
    return {ProtocolKind::bounded_delay, d};
  }
  static ProtocolConfig fully_async() { return {ProtocolKind::fully_async, 0}; }

  // Admissible staleness: 0 for bsp/data_centric, nullopt when unbounded.
  std::optional<Iteration> staleness() const;
  // Versions each chunk must retain: staleness + 2, or unbounded.
  std::optional<std::size_t> ring_depth() const;

  // "bsp", "rcwc", "delay=<d>", "async"; parse_protocol accepts the same.
  std::string name() const;

  friend bool operator==(const ProtocolConfig&, const ProtocolConfig&) = default;
};

ProtocolConfig parse_protocol(std::string_view text);

enum class Admission : std::uint8_t { admit, defer };

// Pure admission predicates over the per-chunk sync metadata. Defer is a
// normal outcome. Under reachable states every predicate is monotone: once
// it admits an operation it keeps admitting it.
Admission admit_read(const ProtocolConfig& protocol,
                     std::span<const ChunkSync> chunks, WorkerId worker,
                     PartitionId partition, Iteration iter);
Admission admit_write(const ProtocolConfig& protocol,
                      std::span<const ChunkSync> chunks, WorkerId worker,
                      Iteration iter);

// Barrier progress of one iteration, derived from chunk metadata.
struct BarrierState {
  Iteration barrier_iteration = 0;
  std::vector<std::vector<bool>> reads_done;  // [reader][partition]
  std::vector<bool> writes_done;              // [partition]

  bool read_barrier_open() const;   // all writes of the iteration done
  bool write_barrier_open() const;  // all p*p reads of the iteration done
};

BarrierState derive_barrier_state(std::span<const ChunkSync> chunks,
                                  Iteration iter);

struct PendingOp {
  OpKind kind = OpKind::read;
  WorkerId worker = 0;
  PartitionId partition = 0;
  Iteration iter = 1;
  // The blocked worker is resumed through its own completion slot, so the
  // worker id doubles as the completion handle.

  friend bool operator==(const PendingOp&, const PendingOp&) = default;
};

std::string to_string(const PendingOp& op);

// Deferred operations in FIFO order of deferral, at most one per worker.
class PendingSet {
 public:
  void defer(const PendingOp& op);

  // Removes and returns, in deferral order, every pending op admissible after
  // `executed`. Only ops touching the affected chunk are re-evaluated, except
  // under BSP whose predicates are global.
  std::vector<PendingOp> on_executed(const ProtocolConfig& protocol,
                                     std::span<const ChunkSync> chunks,
                                     const AccessOp& executed);

  std::vector<PendingOp> drain();
  bool empty() const { return ops_.empty(); }
  std::size_t size() const { return ops_.size(); }
  std::span<const PendingOp> ops() const { return ops_; }

 private:
  std::vector<PendingOp> ops_;
};

class DeadlockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SchedulerHooks {
  // Called for every executed operation, in execution order.
  std::function<void(const AccessOp&)> on_executed;
  // Called each time the completed-write frontier reaches a new iteration.
  // Returning a value stops the run at that iteration. May throw; the
  // exception aborts the run and is reported by failure().
  std::function<std::optional<Iteration>(Iteration, const ParameterDatabase&)>
      on_frontier;
};

// Single serialization point between workers and the parameter database.
// Admission and execution happen atomically under one mutex; deferred ops
// are executed by whichever thread makes them admissible, then their owner
// is woken.
class Scheduler {
 public:
  Scheduler(ParameterDatabase& db, ProtocolConfig protocol,
            std::chrono::milliseconds watchdog, SchedulerHooks hooks = {});

  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  // Blocking. Returns nullopt once the run has stopped or aborted.
  std::optional<std::vector<double>> read(WorkerId worker, PartitionId partition,
                                          Iteration iter);
  bool write(WorkerId worker, Iteration iter, std::span<const double> values);

  // Aborts the run from outside the scheduler (e.g. a failing worker).
  void abort(std::exception_ptr error);

  std::optional<Iteration> stop_iteration() const;
  std::exception_ptr failure() const;
  const ProtocolConfig& protocol() const { return protocol_; }

 private:
  struct Slot {
    std::condition_variable cv;
    bool done = false;
    std::vector<double> values;
  };

  // Both expect mu_ held.
  AccessOp execute(const PendingOp& op, std::span<const double> write_values,
                   std::vector<double>* read_out);
  void settle(const AccessOp& first);
  void after_executed(const AccessOp& op);
  void halt(std::exception_ptr error);
  bool halted() const { return stop_.has_value() || error_ != nullptr; }
  std::optional<std::vector<double>> submit(const PendingOp& op,
                                            std::span<const double> values);

  ParameterDatabase& db_;
  ProtocolConfig protocol_;
  std::chrono::milliseconds watchdog_;
  SchedulerHooks hooks_;

  mutable std::mutex mu_;
  PendingSet pending_;
  std::vector<Slot> slots_;
  // Writes handed to the scheduler while deferred, keyed by worker.
  std::vector<std::vector<double>> deferred_writes_;
  Iteration frontier_ = 0;
  std::optional<Iteration> stop_;
  std::exception_ptr error_;
  std::chrono::steady_clock::time_point last_progress_;
};

}  // namespace dcsync
