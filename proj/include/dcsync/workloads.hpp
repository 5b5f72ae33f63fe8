#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcsync/model_db.hpp"
#include "dcsync/types.hpp"

namespace dcsync {

struct Entry {
  std::size_t index = 0;
  double value = 0.0;
  friend bool operator==(const Entry&, const Entry&) = default;
};

// Immutable sparse design matrix (CSR) plus regression targets.
class Dataset {
 public:
  Dataset() = default;
  // Validates: n >= 1, m >= 1, indices strictly ascending within a row and < m.
  Dataset(std::size_t num_features, const std::vector<std::vector<Entry>>& rows,
          std::vector<double> targets);

  std::size_t num_examples() const { return targets_.size(); }
  std::size_t num_features() const { return num_features_; }
  std::span<const Entry> row(std::size_t j) const {
    return std::span(entries_).subspan(offsets_[j], offsets_[j + 1] - offsets_[j]);
  }
  double target(std::size_t j) const { return targets_[j]; }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t num_features_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<Entry> entries_;
  std::vector<double> targets_;
};

enum class Algorithm : std::uint8_t { batch, sgd, minibatch };

struct GdConfig {
  Algorithm algorithm = Algorithm::batch;
  std::size_t batch_size = 1;  // minibatch only
  std::optional<double> eta;   // unset: 1e-3 / n
  double lambda = 0.0;
  Iteration max_iters = 100;
  double tol = 1e-8;
  std::uint64_t sample_seed = 0;

  double learning_rate(std::size_t num_examples) const {
    return eta.value_or(1e-3 / static_cast<double>(num_examples));
  }
  void validate(std::size_t num_examples) const;
};

std::string to_string(Algorithm a);

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// x . theta, accumulated in ascending feature order.
double dot(std::span<const Entry> row, std::span<const double> theta);

// sum_j (x_j . theta - y_j)^2 + lambda * |theta|^2, examples ascending.
double loss(std::span<const double> theta, const Dataset& d, double lambda);
double loss(std::span<const double> theta, const Dataset& d, double lambda,
            std::span<const std::size_t> batch);

// Gradient components [begin, end) of the batch objective:
//   g_i = sum_{j in batch} 2 (x_j . theta - y_j) x_ji + 2 lambda theta_i.
// Each component accumulates over the batch in the given (ascending) order,
// so the result does not depend on how features are split into ranges.
void gradient_range(std::span<const double> theta, const Dataset& d, double lambda,
                    std::span<const std::size_t> batch, std::size_t begin,
                    std::size_t end, std::span<double> out);
std::vector<double> gradient(std::span<const double> theta, const Dataset& d,
                             double lambda, std::span<const std::size_t> batch);

// theta_i - eta * g_i for i in [begin, end): the update a worker applies to
// its own chunk.
std::vector<double> updated_chunk(std::span<const double> theta, const Dataset& d,
                                  const GdConfig& cfg,
                                  std::span<const std::size_t> batch,
                                  std::size_t begin, std::size_t end);

// Example indices used in iteration `iter`, ascending. A pure function of
// (cfg.algorithm, cfg.batch_size, cfg.sample_seed, iter, n): every worker in
// the same iteration sees the same examples.
std::vector<std::size_t> select_batch(const GdConfig& cfg, Iteration iter, std::size_t n);

// |a - b|_2, accumulated in index order.
double step_norm(std::span<const double> a, std::span<const double> b);

struct SequentialResult {
  std::vector<double> theta;
  Iteration iterations = 0;
  double initial_loss = 0.0;
  std::vector<double> loss_trace;  // loss after iterations 1..T
};

// Single-threaded fixed-point loop: read all partitions, update each one from
// the same snapshot, stop once |theta[a] - theta[a-1]| <= tol or a = max_iters.
SequentialResult sequential_run(const Dataset& d, const GdConfig& cfg,
                                const PartitionSet& partitions,
                                std::span<const double> initial = {});

struct SyntheticData {
  Dataset dataset;
  std::vector<double> theta_star;
};

// Dense N(0,1) features, theta* ~ U[-1,1], y = x . theta* + N(0, noise_sd^2).
SyntheticData gen_synthetic(std::size_t n, std::size_t m, double noise_sd,
                            std::uint64_t seed);

class DatasetParseError : public std::runtime_error {
 public:
  DatasetParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// "<target> <idx>:<val> ..." per line, 1-based ascending indices, optional
// "#features <m>" header; other '#' lines are comments.
Dataset read_sparse(std::istream& in);
void write_sparse(std::ostream& out, const Dataset& d);
Dataset load_sparse(const std::filesystem::path& path);
void save_sparse(const std::filesystem::path& path, const Dataset& d);

}  // namespace dcsync
