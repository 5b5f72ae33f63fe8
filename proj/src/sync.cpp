#include "dcsync/sync.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <sstream>

namespace dcsync {

std::optional<Iteration> ProtocolConfig::staleness() const {
  switch (kind) {
    case ProtocolKind::bsp:
    case ProtocolKind::data_centric:
      return 0;
    case ProtocolKind::bounded_delay:
      return delta;
    case ProtocolKind::fully_async:
      return std::nullopt;
  }
  return std::nullopt;
}

std::optional<std::size_t> ProtocolConfig::ring_depth() const {
  auto s = staleness();
  if (!s) return std::nullopt;
  return static_cast<std::size_t>(*s) + 2;
}

std::string ProtocolConfig::name() const {
  switch (kind) {
    case ProtocolKind::bsp:
      return "bsp";
    case ProtocolKind::data_centric:
      return "rcwc";
    case ProtocolKind::bounded_delay:
      return "delay=" + std::to_string(delta);
    case ProtocolKind::fully_async:
      return "async";
  }
  return "?";
}

ProtocolConfig parse_protocol(std::string_view text) {
  if (text == "bsp") return ProtocolConfig::bsp();
  if (text == "rcwc") return ProtocolConfig::data_centric();
  if (text == "async") return ProtocolConfig::fully_async();
  constexpr std::string_view prefix = "delay=";
  if (text.starts_with(prefix)) {
    auto digits = text.substr(prefix.size());
    Iteration d = -1;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
    if (ec == std::errc{} && ptr == digits.data() + digits.size() && d >= 0) {
      return ProtocolConfig::bounded_delay(d);
    }
  }
  throw ConfigError("unknown protocol '" + std::string(text) +
                    "' (expected bsp, rcwc, delay=<d> or async)");
}

namespace {

Iteration min_read_iteration(const ChunkSync& chunk) {
  return *std::min_element(chunk.read_iterations.begin(),
                           chunk.read_iterations.end());
}

Admission admit_if(bool ok) { return ok ? Admission::admit : Admission::defer; }

}  // namespace

// The delay-free rules are written with >= rather than ==; in every reachable
// state the two coincide, and >= keeps bounded_delay(0) identical to
// data_centric everywhere.
Admission admit_read(const ProtocolConfig& protocol,
                     std::span<const ChunkSync> chunks, WorkerId /*worker*/,
                     PartitionId partition, Iteration iter) {
  switch (protocol.kind) {
    case ProtocolKind::bsp:
      return admit_if(std::all_of(chunks.begin(), chunks.end(), [&](const auto& c) {
        return c.chunk_iteration >= iter - 1;
      }));
    case ProtocolKind::data_centric:
      return admit_if(chunks[partition].chunk_iteration >= iter - 1);
    case ProtocolKind::bounded_delay:
      return admit_if(chunks[partition].chunk_iteration >= iter - protocol.delta - 1);
    case ProtocolKind::fully_async:
      return Admission::admit;
  }
  return Admission::defer;
}

Admission admit_write(const ProtocolConfig& protocol,
                      std::span<const ChunkSync> chunks, WorkerId worker,
                      Iteration iter) {
  switch (protocol.kind) {
    case ProtocolKind::bsp:
      return admit_if(std::all_of(chunks.begin(), chunks.end(), [&](const auto& c) {
        return min_read_iteration(c) >= iter;
      }));
    case ProtocolKind::data_centric:
      return admit_if(min_read_iteration(chunks[worker]) >= iter);
    case ProtocolKind::bounded_delay:
      return admit_if(min_read_iteration(chunks[worker]) >= iter - protocol.delta);
    case ProtocolKind::fully_async:
      return Admission::admit;
  }
  return Admission::defer;
}

bool BarrierState::read_barrier_open() const {
  return std::all_of(writes_done.begin(), writes_done.end(), [](bool b) { return b; });
}

bool BarrierState::write_barrier_open() const {
  return std::all_of(reads_done.begin(), reads_done.end(), [](const auto& row) {
    return std::all_of(row.begin(), row.end(), [](bool b) { return b; });
  });
}

BarrierState derive_barrier_state(std::span<const ChunkSync> chunks,
                                  Iteration iter) {
  const auto p = chunks.size();
  BarrierState state;
  state.barrier_iteration = iter;
  state.reads_done.assign(p, std::vector<bool>(p, false));
  state.writes_done.assign(p, false);
  for (std::size_t j = 0; j < p; ++j) {
    state.writes_done[j] = chunks[j].chunk_iteration >= iter;
    for (std::size_t k = 0; k < p; ++k) {
      state.reads_done[k][j] = chunks[j].read_iterations[k] >= iter;
    }
  }
  return state;
}

std::string to_string(const PendingOp& op) {
  return std::string(op.kind == OpKind::read ? "r" : "w") +
         std::to_string(op.worker) + "[p" + std::to_string(op.partition) + "][" +
         std::to_string(op.iter) + "]";
}

void PendingSet::defer(const PendingOp& op) {
  for (const auto& existing : ops_) {
    if (existing.worker == op.worker) {
      throw SchedulerFault("worker " + std::to_string(op.worker) +
                           " already has a pending operation");
    }
  }
  ops_.push_back(op);
}

std::vector<PendingOp> PendingSet::on_executed(const ProtocolConfig& protocol,
                                               std::span<const ChunkSync> chunks,
                                               const AccessOp& executed) {
  const bool global = protocol.kind == ProtocolKind::bsp;
  auto touches = [&](const PendingOp& op) {
    if (global) return true;
    // A write changes who may read that chunk; a read changes whether the
    // chunk's owner may write.
    if (executed.kind == OpKind::write) {
      return op.kind == OpKind::read && op.partition == executed.partition;
    }
    return op.kind == OpKind::write && op.partition == executed.partition;
  };

  std::vector<PendingOp> ready;
  std::vector<PendingOp> still;
  still.reserve(ops_.size());
  for (const auto& op : ops_) {
    const bool admissible =
        touches(op) &&
        (op.kind == OpKind::read
             ? admit_read(protocol, chunks, op.worker, op.partition, op.iter)
             : admit_write(protocol, chunks, op.worker, op.iter)) == Admission::admit;
    (admissible ? ready : still).push_back(op);
  }
  ops_ = std::move(still);
  return ready;
}

std::vector<PendingOp> PendingSet::drain() {
  return std::exchange(ops_, {});
}

Scheduler::Scheduler(ParameterDatabase& db, ProtocolConfig protocol,
                     std::chrono::milliseconds watchdog, SchedulerHooks hooks)
    : db_(db),
      protocol_(protocol),
      watchdog_(watchdog),
      hooks_(std::move(hooks)),
      slots_(db.num_workers()),
      deferred_writes_(db.num_workers()),
      frontier_(db.frontier()),
      last_progress_(std::chrono::steady_clock::now()) {}

std::optional<std::vector<double>> Scheduler::read(WorkerId worker,
                                                   PartitionId partition,
                                                   Iteration iter) {
  return submit({OpKind::read, worker, partition, iter}, {});
}

bool Scheduler::write(WorkerId worker, Iteration iter,
                      std::span<const double> values) {
  return submit({OpKind::write, worker, worker, iter}, values).has_value();
}

void Scheduler::abort(std::exception_ptr error) {
  std::lock_guard lk(mu_);
  halt(error);
}

std::optional<Iteration> Scheduler::stop_iteration() const {
  std::lock_guard lk(mu_);
  return stop_;
}

std::exception_ptr Scheduler::failure() const {
  std::lock_guard lk(mu_);
  return error_;
}

std::optional<std::vector<double>> Scheduler::submit(const PendingOp& op,
                                                     std::span<const double> values) {
  std::unique_lock lk(mu_);
  if (halted()) return std::nullopt;
  if (op.worker < 0 || op.worker >= db_.num_workers()) {
    throw SchedulerFault("worker id out of range");
  }

  try {
    const auto chunks = db_.sync_state();
    const Admission admission =
        op.kind == OpKind::read
            ? admit_read(protocol_, chunks, op.worker, op.partition, op.iter)
            : admit_write(protocol_, chunks, op.worker, op.iter);
    if (admission == Admission::admit) {
      std::vector<double> out;
      const AccessOp executed = execute(op, values, &out);
      settle(executed);
      return out;
    }
    pending_.defer(op);
    if (op.kind == OpKind::write) {
      deferred_writes_[op.worker].assign(values.begin(), values.end());
    }
  } catch (...) {
    halt(std::current_exception());
    return std::nullopt;
  }

  auto& slot = slots_[op.worker];
  const auto poll = std::min(watchdog_, std::chrono::milliseconds(100));
  while (true) {
    if (slot.done) {
      slot.done = false;
      return std::move(slot.values);
    }
    if (halted()) return std::nullopt;
    slot.cv.wait_for(lk, poll);
    if (!slot.done && !halted() &&
        std::chrono::steady_clock::now() - last_progress_ > watchdog_) {
      std::ostringstream dump;
      dump << "no operation executed for " << watchdog_.count()
           << " ms under protocol " << protocol_.name() << "; pending:";
      for (const auto& p : pending_.ops()) dump << ' ' << to_string(p);
      dump << "; chunk iterations:";
      for (const auto& c : db_.sync_state()) dump << ' ' << c.chunk_iteration;
      halt(std::make_exception_ptr(DeadlockError(dump.str())));
    }
  }
}

AccessOp Scheduler::execute(const PendingOp& op, std::span<const double> write_values,
                            std::vector<double>* read_out) {
  last_progress_ = std::chrono::steady_clock::now();
  if (op.kind == OpKind::read) {
    auto result = db_.execute_read(op.worker, op.partition, op.iter);
    *read_out = std::move(result.values);
    return result.op;
  }
  return db_.execute_write(op.worker, op.partition, op.iter, write_values);
}

void Scheduler::settle(const AccessOp& first) {
  std::deque<AccessOp> work{first};
  while (!work.empty()) {
    const AccessOp op = work.front();
    work.pop_front();
    after_executed(op);
    if (halted()) continue;
    for (const auto& woken : pending_.on_executed(protocol_, db_.sync_state(), op)) {
      auto& slot = slots_[woken.worker];
      const AccessOp executed =
          woken.kind == OpKind::read
              ? execute(woken, {}, &slot.values)
              : execute(woken, deferred_writes_[woken.worker], nullptr);
      slot.done = true;
      slot.cv.notify_one();
      work.push_back(executed);
    }
  }
}

void Scheduler::after_executed(const AccessOp& op) {
  if (hooks_.on_executed) hooks_.on_executed(op);
  if (op.kind != OpKind::write || halted()) return;
  const Iteration reached = db_.frontier();
  while (frontier_ < reached && !halted()) {
    ++frontier_;
    if (hooks_.on_frontier) {
      if (auto stop = hooks_.on_frontier(frontier_, db_)) {
        stop_ = *stop;
        halt(nullptr);
        return;
      }
    }
    // Unbounded rings only need the frontier's predecessor for the stop rule.
    if (!protocol_.ring_depth()) db_.prune_versions_below(frontier_ - 1);
  }
}

void Scheduler::halt(std::exception_ptr error) {
  if (error && !error_) error_ = error;
  if (!stop_ && !error_) return;
  pending_.drain();
  for (auto& slot : slots_) slot.cv.notify_all();
}

}  // namespace dcsync
