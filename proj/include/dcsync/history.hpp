#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcsync/types.hpp"

namespace dcsync {

// Totally ordered record of executed operations over p workers / partitions.
struct History {
  int num_workers = 0;
  std::vector<AccessOp> ops;  // strictly increasing seq

  void append(const AccessOp& op) { ops.push_back(op); }
  friend bool operator==(const History&, const History&) = default;
};

// `first` is required to precede `second` but the history orders them the
// other way round.
struct Witness {
  std::string constraint;
  AccessOp first;
  AccessOp second;
};

struct Verdict {
  bool valid = true;
  std::optional<Witness> witness;  // present iff !valid

  static Verdict ok() { return {}; }
  static Verdict violated(std::string constraint, const AccessOp& first,
                          const AccessOp& second) {
    return {false, Witness{std::move(constraint), first, second}};
  }
  explicit operator bool() const { return valid; }
};

std::string describe(const Verdict& v);

class MalformedHistory : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Throws MalformedHistory when ids are out of range, seq does not strictly
// increase, a write targets a foreign partition, an op repeats, or a worker
// issues a read of iteration a after its own write of iteration a.
void validate(const History& h);

// Per-partition sequential semantics: on every partition, operations of
// different iterations do not interleave, iterations appear in increasing
// order, and within an iteration all reads precede the write.
Verdict check_sequential(const History& h);

// Read/write constraints with admissible delay `delta` (0 = strict):
//   w_j[p_j][a-1-delta] < r_i[p_j][a]   and   r_j[p_i][a-delta] < w_i[p_i][a].
// Only operations present in the history impose obligations.
Verdict check_rcwc(const History& h, Iteration delta);

// Global read and write barriers:
//   w_k[p_k][a] < r_i[p_j][a+1]   and   r_k[p_j][a] < w_i[p_i][a].
Verdict check_bsp(const History& h);

// Visits every total order of the p workers' programs (per worker and
// iteration: reads of partitions 0..p-1 in order, then the write). Refuses
// p > 3 or iters > 2. Returns the number of histories visited.
std::uint64_t enumerate_interleavings(int num_workers, int iters,
                                      const std::function<void(const History&)>& visit);

class HistoryParseError : public std::runtime_error {
 public:
  HistoryParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Text form: one op per line, "<seq> <R|W> <worker> <partition> <iter>".
// num_workers defaults to one more than the largest id seen.
History read_history(std::istream& in, std::optional<int> num_workers = std::nullopt);
void write_history(std::ostream& out, const History& h);
History load_history(const std::filesystem::path& path,
                     std::optional<int> num_workers = std::nullopt);
void save_history(const std::filesystem::path& path, const History& h);

}  // namespace dcsync
