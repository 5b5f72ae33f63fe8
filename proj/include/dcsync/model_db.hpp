#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dcsync/types.hpp"

namespace dcsync {

// Disjoint, covering assignment of m features to p contiguous blocks.
// Partition k is owned and written by worker k.
class PartitionSet {
 public:
  // Balanced contiguous blocks: sizes differ by at most one, larger blocks
  // first. Throws ConfigError unless 1 <= p <= m.
  static PartitionSet contiguous(std::size_t num_features, int num_partitions);

  std::size_t num_features() const { return offsets_.back(); }
  int num_partitions() const { return static_cast<int>(offsets_.size()) - 1; }

  std::size_t begin(PartitionId k) const { return offsets_.at(k); }
  std::size_t end(PartitionId k) const { return offsets_.at(k + 1); }
  std::size_t size(PartitionId k) const { return end(k) - begin(k); }

  PartitionId partition_of(std::size_t feature) const;

  friend bool operator==(const PartitionSet&, const PartitionSet&) = default;

 private:
  explicit PartitionSet(std::vector<std::size_t> offsets)
      : offsets_(std::move(offsets)) {}

  std::vector<std::size_t> offsets_;
};

// Synchronization metadata of one chunk. read_iterations[k] is the highest
// iteration at which worker k's read of this chunk executed; the per-chunk
// bit vector of the delay-free protocol is read_iterations[k] >= iteration.
struct ChunkSync {
  Iteration chunk_iteration = 0;
  std::vector<Iteration> read_iterations;
};

struct Version {
  Iteration iter = 0;
  std::vector<double> values;
};

// Newest-last buffer of chunk versions with strictly increasing iterations.
// A bounded ring evicts the oldest entry once capacity is exceeded.
class VersionRing {
 public:
  explicit VersionRing(std::optional<std::size_t> capacity)
      : capacity_(capacity) {}

  void push(Iteration iter, std::vector<double> values);
  // Drops versions older than `iter`, always keeping the newest one.
  void prune_below(Iteration iter);

  const std::vector<double>* find(Iteration iter) const;
  const Version& newest() const { return versions_.back(); }
  const Version& oldest() const { return versions_.front(); }
  std::size_t size() const { return versions_.size(); }
  std::optional<std::size_t> capacity() const { return capacity_; }

 private:
  std::optional<std::size_t> capacity_;
  std::deque<Version> versions_;
};

class VersionUnavailable : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct ReadResult {
  std::vector<double> values;
  AccessOp op;
};

using InitRule = std::function<double(std::size_t feature)>;

// In-memory parameter store. Not thread-safe: every mutation is expected to
// come from the scheduler's serialization point.
class ParameterDatabase {
 public:
  // ring_depth = nullopt keeps every version until prune_versions_below().
  ParameterDatabase(PartitionSet partitions,
                    std::optional<std::size_t> ring_depth = 2,
                    const InitRule& init = {});

  static ParameterDatabase create(std::size_t num_features, int num_workers,
                                  const InitRule& init = {},
                                  std::optional<std::size_t> ring_depth = 2);

  ReadResult execute_read(WorkerId worker, PartitionId partition, Iteration iter);
  // Writes are only legal on the worker's own partition.
  AccessOp execute_write(WorkerId worker, PartitionId partition, Iteration iter,
                         std::span<const double> new_values);
  AccessOp execute_write(WorkerId worker, Iteration iter,
                         std::span<const double> new_values) {
    return execute_write(worker, worker, iter, new_values);
  }

  // Full parameter vector as of iteration `iter`. Throws VersionUnavailable
  // when any chunk no longer (or not yet) holds that version.
  std::vector<double> snapshot_at(Iteration iter) const;
  std::vector<double> live_values() const;

  // Smallest chunk iteration: every write up to it has executed.
  Iteration frontier() const;
  void prune_versions_below(Iteration iter);

  const PartitionSet& partitions() const { return partitions_; }
  int num_workers() const { return partitions_.num_partitions(); }
  std::span<const ChunkSync> sync_state() const { return sync_; }
  const VersionRing& versions(PartitionId k) const { return rings_.at(k); }
  std::span<const double> values(PartitionId k) const {
    return rings_.at(k).newest().values;
  }
  SeqNo next_sequence() const { return next_seq_; }

 private:
  void check_worker(WorkerId w) const;

  PartitionSet partitions_;
  std::vector<ChunkSync> sync_;
  std::vector<VersionRing> rings_;
  SeqNo next_seq_ = 0;
};

}  // namespace dcsync
