#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "dcsync/workloads.hpp"
#include "oracles.hpp"

namespace dcsync {
namespace {

Dataset single_row() { return Dataset(2, {{{0, 1.0}}}, {2.0}); }

std::vector<std::size_t> all_of(std::size_t n) {
  std::vector<std::size_t> b(n);
  for (std::size_t j = 0; j < n; ++j) b[j] = j;
  return b;
}

double relative_error(const std::vector<double>& got, const std::vector<double>& want) {
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    diff += (got[i] - want[i]) * (got[i] - want[i]);
    norm += want[i] * want[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

TEST(DatasetTest, RejectsInvalidShapes) {
  EXPECT_THROW(Dataset(0, {{}}, {1.0}), ConfigError);
  EXPECT_THROW(Dataset(2, {}, {}), ConfigError);
  EXPECT_THROW(Dataset(2, {{{2, 1.0}}}, {1.0}), ConfigError);
  EXPECT_THROW(Dataset(3, {{{1, 1.0}, {1, 2.0}}}, {1.0}), ConfigError);
  EXPECT_THROW(Dataset(3, {{{1, 1.0}, {0, 2.0}}}, {1.0}), ConfigError);
  EXPECT_THROW(Dataset(3, {{}, {}}, {1.0}), DimensionMismatch);
}

TEST(LossTest, HandExamples) {
  EXPECT_EQ(loss(std::vector<double>{0, 0}, Dataset(2, {{{0, 3.0}}, {{1, 1.0}}}, {0, 0}), 0.0),
            0.0);
  EXPECT_EQ(loss(std::vector<double>{0, 0}, single_row(), 0.0), 4.0);
  // Regularizer: (1 - 2)^2 + 0.5 * (1 + 9) = 6.
  EXPECT_EQ(loss(std::vector<double>{1, 3}, single_row(), 0.5), 6.0);
  EXPECT_THROW(loss(std::vector<double>{0}, single_row(), 0.0), DimensionMismatch);
}

TEST(LossTest, MatchesScalarLoopOracle) {
  std::mt19937_64 rng(5);
  const auto d = testing::random_dataset(rng, 5, 3);
  const std::vector<double> theta{0.3, -1.2, 0.7};
  const double want = testing::naive_loss(theta, d, 0.25, all_of(5));
  EXPECT_NEAR(loss(theta, d, 0.25), want, 1e-12 * std::abs(want));
}

TEST(GradientTest, HandExample) {
  const auto g = gradient(std::vector<double>{0, 0}, single_row(), 0.0, all_of(1));
  EXPECT_EQ(g, (std::vector<double>{-4.0, 0.0}));
  const auto fd = testing::finite_difference_gradient({0, 0}, single_row(), 0.0, all_of(1));
  EXPECT_LE(relative_error(g, fd), 1e-6);
}

TEST(GradientTest, VanishesAtNoiselessSolution) {
  const auto syn = gen_synthetic(40, 6, 0.0, 9);
  const auto g = gradient(syn.theta_star, syn.dataset, 0.0, all_of(40));
  for (double c : g) EXPECT_NEAR(c, 0.0, 1e-12);
}

TEST(GradientTest, EmptyOrBadBatchRejected) {
  EXPECT_THROW(gradient(std::vector<double>{0, 0}, single_row(), 0.0, {}), ConfigError);
  const std::vector<std::size_t> bad{3};
  EXPECT_THROW(gradient(std::vector<double>{0, 0}, single_row(), 0.0, bad), ConfigError);
}

TEST(GradientPropertyTest, MatchesFiniteDifferencesForAllModes) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> dim(1, 12);
  std::normal_distribution<double> normal(0.0, 1.0);
  int instances = 0;
  for (double lambda : {0.0, 0.1}) {
    for (Algorithm alg : {Algorithm::batch, Algorithm::sgd, Algorithm::minibatch}) {
      for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = dim(rng), m = dim(rng);
        const auto d = testing::random_dataset(rng, n, m, 0.7);
        std::vector<double> theta(m);
        for (auto& t : theta) t = normal(rng);
        GdConfig cfg;
        cfg.algorithm = alg;
        cfg.batch_size = 1 + trial % n;
        cfg.sample_seed = trial;
        const auto batch = select_batch(cfg, 1 + trial, n);
        const auto g = gradient(theta, d, lambda, batch);
        const auto fd = testing::finite_difference_gradient(theta, d, lambda, batch);
        ASSERT_LE(relative_error(g, fd), 1e-6) << "lambda=" << lambda << " trial " << trial;
        ++instances;
      }
    }
  }
  EXPECT_EQ(instances, 120);
}

TEST(GradientPropertyTest, RepeatedCallsAreBitIdentical) {
  std::mt19937_64 rng(8);
  const auto d = testing::random_dataset(rng, 30, 9);
  const std::vector<double> theta(9, 0.37);
  const auto a = gradient(theta, d, 0.1, all_of(30));
  const auto b = gradient(theta, d, 0.1, all_of(30));
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
  const double la = loss(theta, d, 0.1), lb = loss(theta, d, 0.1);
  EXPECT_EQ(std::memcmp(&la, &lb, sizeof la), 0);
}

TEST(GradientPropertyTest, RangesAgreeWithFullGradientBitExactly) {
  std::mt19937_64 rng(10);
  const auto d = testing::random_dataset(rng, 25, 11, 0.5);
  const std::vector<double> theta(11, -0.2);
  const auto full = gradient(theta, d, 0.3, all_of(25));
  std::vector<double> part(4);
  gradient_range(theta, d, 0.3, all_of(25), 3, 7, part);
  EXPECT_EQ(std::memcmp(part.data(), full.data() + 3, 4 * sizeof(double)), 0);
}

TEST(SelectBatchTest, Modes) {
  GdConfig cfg;
  EXPECT_EQ(select_batch(cfg, 1, 5), (std::vector<std::size_t>{0, 1, 2, 3, 4}));

  cfg.algorithm = Algorithm::sgd;
  cfg.sample_seed = 42;
  const auto a = select_batch(cfg, 7, 1000);
  EXPECT_EQ(a.size(), 1u);
  EXPECT_EQ(select_batch(cfg, 7, 1000), a);

  cfg.algorithm = Algorithm::minibatch;
  cfg.batch_size = 100;
  const auto mb = select_batch(cfg, 3, 16087);
  ASSERT_EQ(mb.size(), 100u);
  EXPECT_EQ(std::set<std::size_t>(mb.begin(), mb.end()).size(), 100u);
  EXPECT_TRUE(std::is_sorted(mb.begin(), mb.end()));
  EXPECT_LT(mb.back(), 16087u);
  EXPECT_EQ(select_batch(cfg, 3, 16087), mb);
  EXPECT_NE(select_batch(cfg, 4, 16087), mb);
}

TEST(GdConfigTest, Validation) {
  GdConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.learning_rate(500), 2e-6);
  cfg.eta = 0.0;
  EXPECT_THROW(cfg.validate(10), ConfigError);
  cfg = {};
  cfg.algorithm = Algorithm::minibatch;
  cfg.batch_size = 11;
  EXPECT_THROW(cfg.validate(10), ConfigError);
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(10), ConfigError);
  cfg.batch_size = 10;
  EXPECT_NO_THROW(cfg.validate(10));
  cfg.lambda = -1;
  EXPECT_THROW(cfg.validate(10), ConfigError);
}

TEST(SequentialRunTest, OneHandStep) {
  GdConfig cfg;
  cfg.eta = 0.1;
  cfg.max_iters = 1;
  cfg.tol = 0.0;
  for (int p : {1, 2}) {
    const auto r = sequential_run(single_row(), cfg, PartitionSet::contiguous(2, p));
    EXPECT_EQ(r.iterations, 1);
    EXPECT_DOUBLE_EQ(r.theta[0], 0.4);
    EXPECT_EQ(r.theta[1], 0.0);
    EXPECT_EQ(r.initial_loss, 4.0);
  }
}

TEST(SequentialRunTest, HugeToleranceStopsAtOne) {
  GdConfig cfg;
  cfg.eta = 0.01;
  cfg.tol = 1e300;
  const auto syn = gen_synthetic(20, 4, 0.0, 1);
  EXPECT_EQ(sequential_run(syn.dataset, cfg, PartitionSet::contiguous(4, 2)).iterations, 1);
  cfg.tol = 0.0;
  cfg.max_iters = 37;
  EXPECT_EQ(sequential_run(syn.dataset, cfg, PartitionSet::contiguous(4, 2)).iterations, 37);
}

TEST(SequentialRunTest, NoiselessLossStrictlyDecreases) {
  const auto syn = gen_synthetic(50, 8, 0.0, 3);
  GdConfig cfg;
  cfg.eta = 1e-3;
  cfg.max_iters = 200;
  cfg.tol = 0.0;
  const auto r = sequential_run(syn.dataset, cfg, PartitionSet::contiguous(8, 4));
  ASSERT_EQ(r.loss_trace.size(), 200u);
  EXPECT_LT(r.loss_trace.front(), r.initial_loss);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i)
    ASSERT_LT(r.loss_trace[i], r.loss_trace[i - 1]) << "iteration " << i + 1;
}

TEST(SequentialRunTest, PartitioningDoesNotChangeTheResult) {
  std::mt19937_64 rng(4);
  const auto d = testing::random_dataset(rng, 30, 10, 0.6);
  GdConfig cfg;
  cfg.eta = 1e-3;
  cfg.max_iters = 40;
  cfg.tol = 0.0;
  const auto one = sequential_run(d, cfg, PartitionSet::contiguous(10, 1));
  for (int p : {2, 3, 7, 10}) {
    const auto r = sequential_run(d, cfg, PartitionSet::contiguous(10, p));
    ASSERT_EQ(std::memcmp(r.theta.data(), one.theta.data(), 10 * sizeof(double)), 0);
  }
}

TEST(SequentialRunTest, DivergenceReported) {
  const auto syn = gen_synthetic(50, 8, 0.0, 3);
  GdConfig cfg;
  cfg.eta = 10.0;
  cfg.max_iters = 10000;
  cfg.tol = 0.0;
  EXPECT_THROW(sequential_run(syn.dataset, cfg, PartitionSet::contiguous(8, 2)),
               DivergenceError);
}

TEST(SyntheticTest, ShapeDeterminismAndExactModel) {
  const auto big = gen_synthetic(5000, 960, 1.0, 11);
  EXPECT_EQ(big.dataset.num_examples(), 5000u);
  EXPECT_EQ(big.dataset.num_features(), 960u);
  EXPECT_EQ(big.theta_star.size(), 960u);

  const auto a = gen_synthetic(30, 5, 0.0, 2);
  const auto b = gen_synthetic(30, 5, 0.0, 2);
  EXPECT_EQ(a.dataset, b.dataset);
  EXPECT_EQ(a.theta_star, b.theta_star);
  EXPECT_NE(gen_synthetic(30, 5, 0.0, 3).dataset, a.dataset);
  EXPECT_EQ(loss(a.theta_star, a.dataset, 0.0), 0.0);
  for (double t : a.theta_star) {
    EXPECT_GE(t, -1.0);
    EXPECT_LE(t, 1.0);
  }
}

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return read_sparse(in);
}

std::size_t error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const DatasetParseError& e) {
    return e.line();
  }
  return 0;
}

TEST(SparseFormatTest, SingleLine) {
  const auto d = parse("2.0 1:1.0\n");
  EXPECT_EQ(d.num_examples(), 1u);
  EXPECT_EQ(d.num_features(), 1u);
  EXPECT_EQ(d.target(0), 2.0);
  ASSERT_EQ(d.row(0).size(), 1u);
  EXPECT_EQ(d.row(0)[0], (Entry{0, 1.0}));
}

TEST(SparseFormatTest, HeaderDeclaresFeatures) {
  const auto d = parse("#features 10\n# comment\n1 2:0.5\n-1\n");
  EXPECT_EQ(d.num_features(), 10u);
  EXPECT_EQ(d.num_examples(), 2u);
  EXPECT_TRUE(d.row(1).empty());
}

TEST(SparseFormatTest, ErrorsNameTheLine) {
  EXPECT_EQ(error_line("1 1:1\n2 2:1 1:1\n"), 2u);
  EXPECT_EQ(error_line("1 1:1\n1 0:1\n"), 2u);
  EXPECT_EQ(error_line("1 1:1\nx 1:1\n"), 2u);
  EXPECT_EQ(error_line("1 1:1\n1 1-1\n"), 2u);
  EXPECT_EQ(error_line("#features 2\n1 3:1\n"), 2u);
  EXPECT_EQ(error_line("1 1:abc\n"), 1u);
  EXPECT_THROW(parse(""), DatasetParseError);
}

TEST(SparseFormatTest, ThreeLineFileLoss) {
  // theta = (1, -1, 2): residuals 1*1 - 1 = 0, 2*(-1) + 0.5*2 - 3 = -4, -1 - 0 = -1.
  const auto path = std::filesystem::temp_directory_path() / "dcsync_three_lines.txt";
  {
    std::ofstream f(path);
    f << "1 1:1\n3 2:2 3:0.5\n0 1:-1\n";
  }
  const auto d = load_sparse(path);
  std::filesystem::remove(path);
  const std::vector<double> theta{1, -1, 2};
  EXPECT_EQ(loss(theta, d, 0.0), 17.0);
  EXPECT_EQ(loss(theta, d, 0.0), testing::naive_loss(theta, d, 0.0, all_of(3)));
}

TEST(SparseFormatTest, LargeDimensions) {
  const auto path = std::filesystem::temp_directory_path() / "dcsync_large.txt";
  {
    std::ofstream f(path);
    for (std::size_t j = 0; j < 16087; ++j) {
      const std::size_t idx = j == 16086 ? 150360 : 1 + (j * 7919) % 150000;
      f << (j % 3) << ' ' << idx << ":1\n";
    }
  }
  const auto d = load_sparse(path);
  std::filesystem::remove(path);
  EXPECT_EQ(d.num_examples(), 16087u);
  EXPECT_EQ(d.num_features(), 150360u);
}

TEST(SparseFormatTest, RoundTripIsExact) {
  const auto syn = gen_synthetic(20, 7, 0.3, 5);
  std::stringstream buf;
  write_sparse(buf, syn.dataset);
  const std::string first = buf.str();
  EXPECT_EQ(read_sparse(buf), syn.dataset);
  std::stringstream again;
  write_sparse(again, syn.dataset);
  EXPECT_EQ(again.str(), first);
}

}  // namespace
}  // namespace dcsync
