#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dcsync {

using WorkerId = int;
using PartitionId = int;
using Iteration = std::int64_t;
using SeqNo = std::int64_t;

enum class OpKind : std::uint8_t { read, write };

// One executed read or write. Writes always target the writer's own partition.
struct AccessOp {
  SeqNo seq = 0;
  OpKind kind = OpKind::read;
  WorkerId worker = 0;
  PartitionId partition = 0;
  Iteration iter = 1;

  friend bool operator==(const AccessOp&, const AccessOp&) = default;
};

// Human-readable form, e.g. "r1[p0][2]@7".
std::string to_string(const AccessOp& op);

// Raised on invalid configuration (bad worker counts, partition layouts, flags).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when the scheduler violates a model-db precondition. Always a bug.
class SchedulerFault : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dcsync
