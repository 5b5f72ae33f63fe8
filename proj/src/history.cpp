#include "dcsync/history.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string_view>
#include <tuple>

namespace dcsync {

std::string describe(const Verdict& v) {
  if (v.valid) return "valid";
  const auto& w = *v.witness;
  return "invalid: " + w.constraint + ": " + to_string(w.first) +
         " must precede " + to_string(w.second);
}

void validate(const History& h) {
  if (h.num_workers < 1) throw MalformedHistory("history needs at least one worker");
  const int p = h.num_workers;
  std::set<std::tuple<OpKind, WorkerId, PartitionId, Iteration>> seen;
  // Highest written iteration per worker; a later read of that iteration
  // would break the worker's program order.
  std::vector<Iteration> written(p, 0);
  SeqNo prev = -1;
  for (const auto& op : h.ops) {
    const std::string where = "op " + to_string(op);
    if (op.seq <= prev) throw MalformedHistory(where + ": seq does not increase");
    prev = op.seq;
    if (op.worker < 0 || op.worker >= p || op.partition < 0 || op.partition >= p) {
      throw MalformedHistory(where + ": id out of range");
    }
    if (op.iter < 1) throw MalformedHistory(where + ": iteration must be >= 1");
    if (!seen.emplace(op.kind, op.worker, op.partition, op.iter).second) {
      throw MalformedHistory(where + ": duplicate operation");
    }
    if (op.kind == OpKind::write) {
      if (op.worker != op.partition) {
        throw MalformedHistory(where + ": write to a foreign partition");
      }
      if (op.iter <= written[op.worker]) {
        throw MalformedHistory(where + ": writes out of iteration order");
      }
      written[op.worker] = op.iter;
    } else if (op.iter <= written[op.worker]) {
      throw MalformedHistory(where + ": read after the worker's own write");
    }
  }
}

namespace {

// Per (partition, iteration) lookups over a validated history.
class OpIndex {
 public:
  explicit OpIndex(const History& h) : p_(h.num_workers) {
    for (const auto& op : h.ops) max_iter_ = std::max(max_iter_, op.iter);
    const auto cells = static_cast<std::size_t>(p_) * (max_iter_ + 2);
    write_.resize(cells);
    last_read_.resize(cells);
    last_any_.resize(cells);
    iter_last_write_.resize(max_iter_ + 2);
    iter_last_read_.resize(max_iter_ + 2);
    for (const auto& op : h.ops) {
      auto& slot = op.kind == OpKind::write ? write_[cell(op.partition, op.iter)]
                                            : last_read_[cell(op.partition, op.iter)];
      slot = op;
      last_any_[cell(op.partition, op.iter)] = op;
      (op.kind == OpKind::write ? iter_last_write_ : iter_last_read_)[op.iter] = op;
    }
    // before_[k][a]: latest op on partition k with iteration < a.
    before_.resize(cells);
    for (PartitionId k = 0; k < p_; ++k) {
      std::optional<AccessOp> best;
      for (Iteration a = 1; a <= max_iter_ + 1; ++a) {
        const auto& prev = last_any_[cell(k, a - 1)];
        if (prev && (!best || prev->seq > best->seq)) best = prev;
        before_[cell(k, a)] = best;
      }
    }
  }

  const std::optional<AccessOp>& write(PartitionId k, Iteration a) const {
    return in_range(a) ? write_[cell(k, a)] : none_;
  }
  const std::optional<AccessOp>& last_read(PartitionId k, Iteration a) const {
    return in_range(a) ? last_read_[cell(k, a)] : none_;
  }
  const std::optional<AccessOp>& latest_before(PartitionId k, Iteration a) const {
    return in_range(a) ? before_[cell(k, a)] : none_;
  }
  const std::optional<AccessOp>& last_write_of(Iteration a) const {
    return in_range(a) ? iter_last_write_[a] : none_;
  }
  const std::optional<AccessOp>& last_read_of(Iteration a) const {
    return in_range(a) ? iter_last_read_[a] : none_;
  }

 private:
  bool in_range(Iteration a) const { return a >= 0 && a <= max_iter_ + 1; }
  std::size_t cell(PartitionId k, Iteration a) const {
    return static_cast<std::size_t>(k) * (max_iter_ + 2) + a;
  }

  int p_;
  Iteration max_iter_ = 0;
  std::vector<std::optional<AccessOp>> write_, last_read_, last_any_, before_;
  std::vector<std::optional<AccessOp>> iter_last_write_, iter_last_read_;
  std::optional<AccessOp> none_;
};

bool after(const std::optional<AccessOp>& required, const AccessOp& op) {
  return required && required->seq > op.seq;
}

}  // namespace

Verdict check_sequential(const History& h) {
  validate(h);
  const OpIndex index(h);
  for (const auto& op : h.ops) {
    if (const auto& prior = index.latest_before(op.partition, op.iter); after(prior, op)) {
      return Verdict::violated("iterations interleave on a partition", *prior, op);
    }
    if (op.kind == OpKind::write) {
      if (const auto& r = index.last_read(op.partition, op.iter); after(r, op)) {
        return Verdict::violated("reads precede write within an iteration", *r, op);
      }
    }
  }
  return Verdict::ok();
}

Verdict check_rcwc(const History& h, Iteration delta) {
  if (delta < 0) throw std::invalid_argument("delta must be non-negative");
  validate(h);
  const OpIndex index(h);
  for (const auto& op : h.ops) {
    if (op.kind == OpKind::read) {
      const auto& w = index.write(op.partition, op.iter - 1 - delta);
      if (after(w, op)) return Verdict::violated("read constraint", *w, op);
    } else {
      const auto& r = index.last_read(op.partition, op.iter - delta);
      if (after(r, op)) return Verdict::violated("write constraint", *r, op);
    }
  }
  return Verdict::ok();
}

Verdict check_bsp(const History& h) {
  validate(h);
  const OpIndex index(h);
  for (const auto& op : h.ops) {
    if (op.kind == OpKind::read) {
      const auto& w = index.last_write_of(op.iter - 1);
      if (after(w, op)) return Verdict::violated("read barrier", *w, op);
    } else {
      const auto& r = index.last_read_of(op.iter);
      if (after(r, op)) return Verdict::violated("write barrier", *r, op);
    }
  }
  return Verdict::ok();
}

std::uint64_t enumerate_interleavings(int num_workers, int iters,
                                      const std::function<void(const History&)>& visit) {
  if (num_workers < 1 || iters < 1) {
    throw ConfigError("interleaving enumeration needs at least one worker and iteration");
  }
  if (num_workers > 3 || iters > 2) {
    throw ConfigError("refusing to enumerate interleavings beyond 3 workers x 2 iterations");
  }
  const int p = num_workers;
  std::vector<std::vector<AccessOp>> programs(p);
  for (WorkerId w = 0; w < p; ++w) {
    for (Iteration a = 1; a <= iters; ++a) {
      for (PartitionId k = 0; k < p; ++k) programs[w].push_back({0, OpKind::read, w, k, a});
      programs[w].push_back({0, OpKind::write, w, w, a});
    }
  }
  const std::size_t total = static_cast<std::size_t>(p) * (p + 1) * iters;
  History h{p, {}};
  h.ops.reserve(total);
  std::vector<std::size_t> cursor(p, 0);
  std::uint64_t count = 0;

  auto step = [&](auto&& self) -> void {
    if (h.ops.size() == total) {
      ++count;
      visit(h);
      return;
    }
    for (WorkerId w = 0; w < p; ++w) {
      if (cursor[w] == programs[w].size()) continue;
      AccessOp op = programs[w][cursor[w]++];
      op.seq = static_cast<SeqNo>(h.ops.size());
      h.ops.push_back(op);
      self(self);
      h.ops.pop_back();
      --cursor[w];
    }
  };
  step(step);
  return count;
}

namespace {

template <typename T>
T parse_number(std::string_view token, std::size_t line, const char* field) {
  T value{};
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw HistoryParseError(line, std::string("bad ") + field + " '" +
                                      std::string(token) + "'");
  }
  return value;
}

}  // namespace

History read_history(std::istream& in, std::optional<int> num_workers) {
  History h;
  std::string text;
  std::size_t line = 0;
  int max_id = -1;
  SeqNo prev = -1;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;

    std::vector<std::string_view> tokens;
    std::string_view rest(text);
    while (!rest.empty()) {
      const auto start = rest.find_first_not_of(' ');
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      const auto stop = rest.find(' ');
      tokens.push_back(rest.substr(0, stop));
      rest.remove_prefix(stop == std::string_view::npos ? rest.size() : stop);
    }
    if (tokens.size() != 5) {
      throw HistoryParseError(line, "expected 5 fields, got " + std::to_string(tokens.size()));
    }
    AccessOp op;
    op.seq = parse_number<SeqNo>(tokens[0], line, "seq");
    if (tokens[1] == "R") {
      op.kind = OpKind::read;
    } else if (tokens[1] == "W") {
      op.kind = OpKind::write;
    } else {
      throw HistoryParseError(line, "kind must be R or W");
    }
    op.worker = parse_number<WorkerId>(tokens[2], line, "worker");
    op.partition = parse_number<PartitionId>(tokens[3], line, "partition");
    op.iter = parse_number<Iteration>(tokens[4], line, "iteration");
    if (op.seq <= prev) throw HistoryParseError(line, "seq must strictly increase");
    if (op.worker < 0 || op.partition < 0) throw HistoryParseError(line, "negative id");
    prev = op.seq;
    max_id = std::max({max_id, op.worker, op.partition});
    h.ops.push_back(op);
  }
  h.num_workers = num_workers.value_or(max_id + 1);
  return h;
}

void write_history(std::ostream& out, const History& h) {
  for (const auto& op : h.ops) {
    out << op.seq << ' ' << (op.kind == OpKind::read ? 'R' : 'W') << ' ' << op.worker
        << ' ' << op.partition << ' ' << op.iter << '\n';
  }
}

History load_history(const std::filesystem::path& path, std::optional<int> num_workers) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open history file " + path.string());
  return read_history(in, num_workers);
}

void save_history(const std::filesystem::path& path, const History& h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write history file " + path.string());
  write_history(out, h);
  if (!out) throw std::runtime_error("failed writing history file " + path.string());
}

}  // namespace dcsync
