#include "dcsync/model_db.hpp"

#include <algorithm>
#include <string>

namespace dcsync {

std::string to_string(const AccessOp& op) {
  std::string s = op.kind == OpKind::read ? "r" : "w";
  s += std::to_string(op.worker) + "[p" + std::to_string(op.partition) + "][" +
       std::to_string(op.iter) + "]@" + std::to_string(op.seq);
  return s;
}

PartitionSet PartitionSet::contiguous(std::size_t num_features,
                                      int num_partitions) {
  if (num_partitions <= 0) {
    throw ConfigError("number of partitions must be positive");
  }
  const auto p = static_cast<std::size_t>(num_partitions);
  if (p > num_features) {
    throw ConfigError("number of partitions (" + std::to_string(p) +
                      ") exceeds number of features (" +
                      std::to_string(num_features) + ")");
  }
  const std::size_t base = num_features / p;
  const std::size_t extra = num_features % p;
  std::vector<std::size_t> offsets(p + 1, 0);
  for (std::size_t k = 0; k < p; ++k) {
    offsets[k + 1] = offsets[k] + base + (k < extra ? 1 : 0);
  }
  return PartitionSet(std::move(offsets));
}

PartitionId PartitionSet::partition_of(std::size_t feature) const {
  if (feature >= num_features()) {
    throw std::out_of_range("feature index out of range");
  }
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), feature);
  return static_cast<PartitionId>(it - offsets_.begin()) - 1;
}

void VersionRing::push(Iteration iter, std::vector<double> values) {
  if (!versions_.empty() && iter <= versions_.back().iter) {
    throw SchedulerFault("version iterations must strictly increase");
  }
  versions_.push_back({iter, std::move(values)});
  if (capacity_ && versions_.size() > *capacity_) versions_.pop_front();
}

void VersionRing::prune_below(Iteration iter) {
  while (versions_.size() > 1 && versions_.front().iter < iter) {
    versions_.pop_front();
  }
}

const std::vector<double>* VersionRing::find(Iteration iter) const {
  for (const auto& v : versions_) {
    if (v.iter == iter) return &v.values;
  }
  return nullptr;
}

ParameterDatabase::ParameterDatabase(PartitionSet partitions,
                                     std::optional<std::size_t> ring_depth,
                                     const InitRule& init)
    : partitions_(std::move(partitions)) {
  if (ring_depth && *ring_depth == 0) {
    throw ConfigError("version ring depth must be at least 1");
  }
  const int p = partitions_.num_partitions();
  sync_.assign(p, ChunkSync{0, std::vector<Iteration>(p, 0)});
  rings_.reserve(p);
  for (PartitionId k = 0; k < p; ++k) {
    std::vector<double> values(partitions_.size(k), 0.0);
    if (init) {
      for (std::size_t f = 0; f < values.size(); ++f) {
        values[f] = init(partitions_.begin(k) + f);
      }
    }
    rings_.emplace_back(ring_depth);
    rings_.back().push(0, std::move(values));
  }
}

ParameterDatabase ParameterDatabase::create(std::size_t num_features,
                                            int num_workers,
                                            const InitRule& init,
                                            std::optional<std::size_t> ring_depth) {
  return ParameterDatabase(PartitionSet::contiguous(num_features, num_workers),
                           ring_depth, init);
}

void ParameterDatabase::check_worker(WorkerId w) const {
  if (w < 0 || w >= num_workers()) {
    throw SchedulerFault("worker id " + std::to_string(w) + " out of range");
  }
}

ReadResult ParameterDatabase::execute_read(WorkerId worker,
                                           PartitionId partition,
                                           Iteration iter) {
  check_worker(worker);
  check_worker(partition);
  auto& recorded = sync_[partition].read_iterations[worker];
  if (iter < recorded) {
    throw SchedulerFault("read iteration went backwards for worker " +
                         std::to_string(worker) + " on partition " +
                         std::to_string(partition));
  }
  recorded = iter;
  AccessOp op{next_seq_++, OpKind::read, worker, partition, iter};
  return {rings_[partition].newest().values, op};
}

AccessOp ParameterDatabase::execute_write(WorkerId worker,
                                          PartitionId partition, Iteration iter,
                                          std::span<const double> new_values) {
  check_worker(worker);
  if (partition != worker) {
    throw SchedulerFault("worker " + std::to_string(worker) +
                         " attempted to write foreign partition " +
                         std::to_string(partition));
  }
  auto& sync = sync_[worker];
  if (new_values.size() != partitions_.size(worker)) {
    throw SchedulerFault("write size does not match chunk size");
  }
  if (iter != sync.chunk_iteration + 1) {
    throw SchedulerFault("write of iteration " + std::to_string(iter) +
                         " on chunk at iteration " +
                         std::to_string(sync.chunk_iteration));
  }
  sync.chunk_iteration = iter;
  rings_[worker].push(iter, {new_values.begin(), new_values.end()});
  return {next_seq_++, OpKind::write, worker, worker, iter};
}

std::vector<double> ParameterDatabase::snapshot_at(Iteration iter) const {
  std::vector<double> out;
  out.reserve(partitions_.num_features());
  for (PartitionId k = 0; k < num_workers(); ++k) {
    const auto* v = rings_[k].find(iter);
    if (v == nullptr) {
      throw VersionUnavailable("version " + std::to_string(iter) +
                               " unavailable for partition " + std::to_string(k));
    }
    out.insert(out.end(), v->begin(), v->end());
  }
  return out;
}

std::vector<double> ParameterDatabase::live_values() const {
  std::vector<double> out;
  out.reserve(partitions_.num_features());
  for (const auto& ring : rings_) {
    const auto& v = ring.newest().values;
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

Iteration ParameterDatabase::frontier() const {
  Iteration f = sync_.front().chunk_iteration;
  for (const auto& s : sync_) f = std::min(f, s.chunk_iteration);
  return f;
}

void ParameterDatabase::prune_versions_below(Iteration iter) {
  for (auto& ring : rings_) ring.prune_below(iter);
}

}  // namespace dcsync
