#include "dcsync/workloads.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <ranges>
#include <string_view>

namespace dcsync {

Dataset::Dataset(std::size_t num_features, const std::vector<std::vector<Entry>>& rows,
                 std::vector<double> targets)
    : num_features_(num_features), targets_(std::move(targets)) {
  if (num_features_ == 0) throw ConfigError("dataset needs at least one feature");
  if (rows.empty()) throw ConfigError("dataset needs at least one example");
  if (rows.size() != targets_.size()) {
    throw DimensionMismatch("row count does not match target count");
  }
  offsets_.reserve(rows.size() + 1);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (std::size_t e = 0; e < rows[j].size(); ++e) {
      const auto idx = rows[j][e].index;
      if (idx >= num_features_) {
        throw ConfigError("row " + std::to_string(j) + ": feature index out of range");
      }
      if (e > 0 && idx <= rows[j][e - 1].index) {
        throw ConfigError("row " + std::to_string(j) + ": indices not strictly ascending");
      }
      entries_.push_back(rows[j][e]);
    }
    offsets_.push_back(entries_.size());
  }
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::batch:
      return "batch";
    case Algorithm::sgd:
      return "sgd";
    case Algorithm::minibatch:
      return "minibatch";
  }
  return "?";
}

void GdConfig::validate(std::size_t num_examples) const {
  if (eta && !(*eta > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (max_iters < 1) throw ConfigError("max_iters must be positive");
  if (!(tol >= 0.0)) throw ConfigError("tol must be non-negative");
  if (algorithm == Algorithm::minibatch &&
      (batch_size < 1 || batch_size > num_examples)) {
    throw ConfigError("mini-batch size must be in [1, " + std::to_string(num_examples) + "]");
  }
}

double dot(std::span<const Entry> row, std::span<const double> theta) {
  double acc = 0.0;
  for (const auto& e : row) acc += e.value * theta[e.index];
  return acc;
}

namespace {

void check_theta(std::span<const double> theta, const Dataset& d) {
  if (theta.size() != d.num_features()) {
    throw DimensionMismatch("theta has " + std::to_string(theta.size()) +
                            " components, dataset has " +
                            std::to_string(d.num_features()) + " features");
  }
}

void check_batch(std::span<const std::size_t> batch, const Dataset& d) {
  if (batch.empty()) throw ConfigError("batch must not be empty");
  for (auto j : batch) {
    if (j >= d.num_examples()) throw ConfigError("batch index out of range");
  }
}

double regularizer(std::span<const double> theta, double lambda) {
  if (lambda == 0.0) return 0.0;
  double sq = 0.0;
  for (double t : theta) sq += t * t;
  return lambda * sq;
}

}  // namespace

double loss(std::span<const double> theta, const Dataset& d, double lambda) {
  check_theta(theta, d);
  double acc = 0.0;
  for (std::size_t j = 0; j < d.num_examples(); ++j) {
    const double r = dot(d.row(j), theta) - d.target(j);
    acc += r * r;
  }
  return acc + regularizer(theta, lambda);
}

double loss(std::span<const double> theta, const Dataset& d, double lambda,
            std::span<const std::size_t> batch) {
  check_theta(theta, d);
  check_batch(batch, d);
  double acc = 0.0;
  for (auto j : batch) {
    const double r = dot(d.row(j), theta) - d.target(j);
    acc += r * r;
  }
  return acc + regularizer(theta, lambda);
}

void gradient_range(std::span<const double> theta, const Dataset& d, double lambda,
                    std::span<const std::size_t> batch, std::size_t begin,
                    std::size_t end, std::span<double> out) {
  check_theta(theta, d);
  check_batch(batch, d);
  if (begin > end || end > d.num_features() || out.size() != end - begin) {
    throw DimensionMismatch("gradient range does not match output size");
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (auto j : batch) {
    const auto row = d.row(j);
    const double scale = 2.0 * (dot(row, theta) - d.target(j));
    auto it = std::lower_bound(row.begin(), row.end(), begin,
                               [](const Entry& e, std::size_t i) { return e.index < i; });
    for (; it != row.end() && it->index < end; ++it) {
      out[it->index - begin] += scale * it->value;
    }
  }
  if (lambda != 0.0) {
    for (std::size_t i = begin; i < end; ++i) out[i - begin] += 2.0 * lambda * theta[i];
  }
}

std::vector<double> gradient(std::span<const double> theta, const Dataset& d,
                             double lambda, std::span<const std::size_t> batch) {
  std::vector<double> g(d.num_features());
  gradient_range(theta, d, lambda, batch, 0, d.num_features(), g);
  return g;
}

std::vector<double> updated_chunk(std::span<const double> theta, const Dataset& d,
                                  const GdConfig& cfg,
                                  std::span<const std::size_t> batch,
                                  std::size_t begin, std::size_t end) {
  std::vector<double> g(end - begin);
  gradient_range(theta, d, cfg.lambda, batch, begin, end, g);
  const double eta = cfg.learning_rate(d.num_examples());
  for (std::size_t i = begin; i < end; ++i) g[i - begin] = theta[i] - eta * g[i - begin];
  return g;
}

std::vector<std::size_t> select_batch(const GdConfig& cfg, Iteration iter, std::size_t n) {
  if (cfg.algorithm == Algorithm::batch) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  const auto seed = cfg.sample_seed;
  const auto it = static_cast<std::uint64_t>(iter);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(it), static_cast<std::uint32_t>(it >> 32)};
  std::mt19937_64 rng(seq);
  if (cfg.algorithm == Algorithm::sgd) {
    return {std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)};
  }
  const std::size_t b = std::min(cfg.batch_size, n);
  std::vector<std::size_t> picked;
  picked.reserve(b);
  // Selection sampling keeps the population order, so the batch is ascending.
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::sample(all.begin(), all.end(), std::back_inserter(picked), b, rng);
  return picked;
}

double step_norm(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("step_norm: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

SequentialResult sequential_run(const Dataset& d, const GdConfig& cfg,
                                const PartitionSet& partitions,
                                std::span<const double> initial) {
  cfg.validate(d.num_examples());
  if (partitions.num_features() != d.num_features()) {
    throw DimensionMismatch("partition set does not cover the dataset's features");
  }
  SequentialResult result;
  result.theta.assign(d.num_features(), 0.0);
  if (!initial.empty()) {
    check_theta(initial, d);
    result.theta.assign(initial.begin(), initial.end());
  }
  result.initial_loss = loss(result.theta, d, cfg.lambda);

  std::vector<double> next(result.theta.size());
  for (Iteration a = 1;; ++a) {
    const auto batch = select_batch(cfg, a, d.num_examples());
    for (PartitionId k = 0; k < partitions.num_partitions(); ++k) {
      const auto chunk =
          updated_chunk(result.theta, d, cfg, batch, partitions.begin(k), partitions.end(k));
      std::copy(chunk.begin(), chunk.end(),
                next.begin() + static_cast<std::ptrdiff_t>(partitions.begin(k)));
    }
    const double step = step_norm(next, result.theta);
    std::swap(result.theta, next);
    const double current = loss(result.theta, d, cfg.lambda);
    if (!std::isfinite(current)) {
      throw DivergenceError("loss became non-finite at iteration " + std::to_string(a));
    }
    result.loss_trace.push_back(current);
    if (step <= cfg.tol || a >= cfg.max_iters) {
      result.iterations = a;
      return result;
    }
  }
}

SyntheticData gen_synthetic(std::size_t n, std::size_t m, double noise_sd,
                            std::uint64_t seed) {
  if (n == 0 || m == 0) throw ConfigError("synthetic data needs n >= 1 and m >= 1");
  if (!(noise_sd >= 0.0)) throw ConfigError("noise must be non-negative");
  auto engine = [seed](std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32), stream};
    return std::mt19937_64(seq);
  };
  auto theta_rng = engine(0);
  auto feature_rng = engine(1);
  auto noise_rng = engine(2);

  SyntheticData out;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  out.theta_star.resize(m);
  for (auto& t : out.theta_star) t = unit(theta_rng);

  std::normal_distribution<double> standard(0.0, 1.0);
  std::vector<std::vector<Entry>> rows(n);
  std::vector<double> targets(n);
  for (std::size_t j = 0; j < n; ++j) {
    rows[j].resize(m);
    for (std::size_t i = 0; i < m; ++i) rows[j][i] = {i, standard(feature_rng)};
    targets[j] = dot(rows[j], out.theta_star);
    if (noise_sd > 0.0) targets[j] += noise_sd * standard(noise_rng);
  }
  out.dataset = Dataset(m, rows, std::move(targets));
  return out;
}

namespace {

double parse_double(std::string_view token, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw DatasetParseError(line, "bad number '" + std::string(token) + "'");
  }
  return v;
}

std::size_t parse_index(std::string_view token, std::size_t line) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size() || v == 0) {
    throw DatasetParseError(line, "bad feature index '" + std::string(token) + "'");
  }
  return v;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto start = s.find_first_not_of(" \t");
    if (start == std::string_view::npos) break;
    s.remove_prefix(start);
    const auto stop = s.find_first_of(" \t");
    out.push_back(s.substr(0, stop));
    if (stop == std::string_view::npos) break;
    s.remove_prefix(stop);
  }
  return out;
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

}  // namespace

Dataset read_sparse(std::istream& in) {
  std::optional<std::size_t> declared;
  std::size_t max_index = 0;
  std::vector<std::vector<Entry>> rows;
  std::vector<double> targets;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    const auto tokens = split_ws(text);
    if (tokens.empty()) continue;
    if (tokens[0].starts_with('#')) {
      if (tokens[0] == "#features") {
        if (tokens.size() != 2) throw DatasetParseError(line, "expected '#features <m>'");
        if (declared || !rows.empty()) {
          throw DatasetParseError(line, "'#features' must come before the first example");
        }
        declared = parse_index(tokens[1], line);
      }
      continue;
    }
    targets.push_back(parse_double(tokens[0], line));
    std::vector<Entry> row;
    row.reserve(tokens.size() - 1);
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto colon = tokens[t].find(':');
      if (colon == std::string_view::npos) {
        throw DatasetParseError(line, "expected <idx>:<val>, got '" + std::string(tokens[t]) + "'");
      }
      const std::size_t idx = parse_index(tokens[t].substr(0, colon), line);
      const double val = parse_double(tokens[t].substr(colon + 1), line);
      if (!row.empty() && idx - 1 <= row.back().index) {
        throw DatasetParseError(line, "feature indices must be strictly ascending");
      }
      if (declared && idx > *declared) {
        throw DatasetParseError(line, "feature index " + std::to_string(idx) +
                                          " exceeds declared feature count");
      }
      max_index = std::max(max_index, idx);
      row.push_back({idx - 1, val});
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DatasetParseError(line, "no examples");
  const std::size_t m = declared.value_or(max_index);
  if (m == 0) throw DatasetParseError(line, "cannot infer feature count");
  return Dataset(m, rows, std::move(targets));
}

void write_sparse(std::ostream& out, const Dataset& d) {
  std::string buf = "#features " + std::to_string(d.num_features()) + "\n";
  for (std::size_t j = 0; j < d.num_examples(); ++j) {
    append_double(buf, d.target(j));
    for (const auto& e : d.row(j)) {
      buf += ' ';
      buf += std::to_string(e.index + 1);
      buf += ':';
      append_double(buf, e.value);
    }
    buf += '\n';
    out << buf;
    buf.clear();
  }
}

Dataset load_sparse(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  return read_sparse(in);
}

void save_sparse(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  write_sparse(out, d);
  if (!out) throw std::runtime_error("failed writing dataset " + path.string());
}

}  // namespace dcsync
