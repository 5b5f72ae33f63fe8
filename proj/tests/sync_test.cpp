#include <gtest/gtest.h>

#include <future>
#include <random>
#include <thread>

#include "dcsync/history.hpp"
#include "dcsync/sync.hpp"
#include "oracles.hpp"

namespace dcsync {
namespace {

std::vector<ChunkSync> state(std::vector<Iteration> chunk_iters,
                             std::vector<std::vector<Iteration>> reads) {
  std::vector<ChunkSync> out;
  for (std::size_t k = 0; k < chunk_iters.size(); ++k) out.push_back({chunk_iters[k], reads[k]});
  return out;
}

constexpr auto admit = Admission::admit;
constexpr auto defer = Admission::defer;

TEST(AdmitReadTest, DataCentricNeedsPreviousWrite) {
  auto s = state({1, 1}, {{1, 1}, {1, 1}});
  EXPECT_EQ(admit_read(ProtocolConfig::data_centric(), s, 0, 1, 2), admit);
  auto fresh = state({0, 0}, {{0, 0}, {0, 0}});
  EXPECT_EQ(admit_read(ProtocolConfig::data_centric(), fresh, 0, 1, 2), defer);
  EXPECT_EQ(admit_read(ProtocolConfig::data_centric(), fresh, 0, 1, 1), admit);
}

TEST(AdmitReadTest, BoundedDelayToleratesStaleChunks) {
  auto fresh = state({0, 0}, {{0, 0}, {0, 0}});
  EXPECT_EQ(admit_read(ProtocolConfig::bounded_delay(1), fresh, 0, 1, 2), admit);
  EXPECT_EQ(admit_read(ProtocolConfig::bounded_delay(1), fresh, 0, 1, 3), defer);
}

TEST(AdmitReadTest, BspNeedsEveryChunk) {
  auto s = state({1, 0}, {{1, 1}, {1, 1}});
  EXPECT_EQ(admit_read(ProtocolConfig::bsp(), s, 0, 0, 2), defer);
  EXPECT_EQ(admit_read(ProtocolConfig::data_centric(), s, 0, 0, 2), admit);
}

TEST(AdmitTest, FullyAsyncAdmitsEverything) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = state({0, 0, 0}, {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}});
    const Iteration iter = 1 + trial % 17;
    EXPECT_EQ(admit_read(ProtocolConfig::fully_async(), s, 1, 2, iter), admit);
    EXPECT_EQ(admit_write(ProtocolConfig::fully_async(), s, 1, iter), admit);
  }
}

TEST(AdmitWriteTest, DataCentricNeedsAllReaders) {
  auto all_read = state({0, 0, 0}, {{0, 0, 0}, {1, 1, 1}, {0, 0, 0}});
  EXPECT_EQ(admit_write(ProtocolConfig::data_centric(), all_read, 1, 1), admit);
  auto missing = state({0, 0, 0}, {{0, 0, 0}, {1, 0, 1}, {0, 0, 0}});
  EXPECT_EQ(admit_write(ProtocolConfig::data_centric(), missing, 1, 1), defer);
}

TEST(AdmitWriteTest, BoundedDelayUsesSlowestReader) {
  auto s = state({2, 2, 2}, {{3, 3, 3}, {3, 2, 3}, {3, 3, 3}});
  EXPECT_EQ(admit_write(ProtocolConfig::bounded_delay(1), s, 1, 3), admit);
  EXPECT_EQ(admit_write(ProtocolConfig::data_centric(), s, 1, 3), defer);
}

TEST(AdmitWriteTest, BspNeedsAllReadsOfTheIteration) {
  auto s = state({0, 0}, {{1, 1}, {1, 0}});
  EXPECT_EQ(admit_write(ProtocolConfig::bsp(), s, 0, 1), defer);
  EXPECT_EQ(admit_write(ProtocolConfig::data_centric(), s, 0, 1), admit);
}

std::vector<ChunkSync> random_state(std::mt19937_64& rng, int p) {
  std::uniform_int_distribution<Iteration> it(0, 5);
  std::vector<ChunkSync> s(p);
  for (auto& c : s) {
    c.chunk_iteration = it(rng);
    c.read_iterations.resize(p);
    for (auto& r : c.read_iterations) r = it(rng);
  }
  return s;
}

TEST(AdmitPropertyTest, SubsumptionOnRandomStates) {
  std::mt19937_64 rng(20240601);
  for (int trial = 0; trial < 20000; ++trial) {
    const int p = 1 + trial % 5;
    const auto s = random_state(rng, p);
    const WorkerId w = static_cast<WorkerId>(rng() % p);
    const PartitionId k = static_cast<PartitionId>(rng() % p);
    const Iteration iter = 1 + static_cast<Iteration>(rng() % 6);

    const bool bsp_r = admit_read(ProtocolConfig::bsp(), s, w, k, iter) == admit;
    const bool dc_r = admit_read(ProtocolConfig::data_centric(), s, w, k, iter) == admit;
    const bool bsp_w = admit_write(ProtocolConfig::bsp(), s, w, iter) == admit;
    const bool dc_w = admit_write(ProtocolConfig::data_centric(), s, w, iter) == admit;
    if (bsp_r) EXPECT_TRUE(dc_r);
    if (bsp_w) EXPECT_TRUE(dc_w);
    bool prev_r = dc_r;
    bool prev_w = dc_w;
    for (Iteration d = 0; d <= 4; ++d) {
      const auto bd = ProtocolConfig::bounded_delay(d);
      const bool r = admit_read(bd, s, w, k, iter) == admit;
      const bool wr = admit_write(bd, s, w, iter) == admit;
      if (d == 0) {
        EXPECT_EQ(r, dc_r);
        EXPECT_EQ(wr, dc_w);
      }
      if (prev_r) EXPECT_TRUE(r);
      if (prev_w) EXPECT_TRUE(wr);
      prev_r = r;
      prev_w = wr;
    }
  }
}

TEST(BarrierStateTest, DerivedFromChunkMetadata) {
  auto s = state({1, 0}, {{1, 1}, {1, 0}});
  auto b = derive_barrier_state(s, 1);
  EXPECT_EQ(b.barrier_iteration, 1);
  EXPECT_FALSE(b.read_barrier_open());
  EXPECT_FALSE(b.write_barrier_open());
  EXPECT_TRUE(b.reads_done[0][1]);
  EXPECT_FALSE(b.reads_done[1][1]);
  auto done = derive_barrier_state(state({1, 1}, {{1, 1}, {1, 1}}), 1);
  EXPECT_TRUE(done.read_barrier_open());
  EXPECT_TRUE(done.write_barrier_open());
}

TEST(ProtocolConfigTest, NamesRoundTrip) {
  for (auto cfg : {ProtocolConfig::bsp(), ProtocolConfig::data_centric(),
                   ProtocolConfig::bounded_delay(3), ProtocolConfig::fully_async()}) {
    EXPECT_EQ(parse_protocol(cfg.name()), cfg);
  }
  EXPECT_EQ(ProtocolConfig::bounded_delay(2).ring_depth(), 4u);
  EXPECT_EQ(ProtocolConfig::data_centric().ring_depth(), 2u);
  EXPECT_FALSE(ProtocolConfig::fully_async().ring_depth().has_value());
  EXPECT_THROW(parse_protocol("delay=-1"), ConfigError);
  EXPECT_THROW(parse_protocol("delay="), ConfigError);
  EXPECT_THROW(parse_protocol("2pl"), ConfigError);
}

TEST(PendingSetTest, WriteWakesDeferredRead) {
  auto db = ParameterDatabase::create(4, 2);
  const auto dc = ProtocolConfig::data_centric();
  for (WorkerId w = 0; w < 2; ++w)
    for (PartitionId k = 0; k < 2; ++k) db.execute_read(w, k, 1);
  db.execute_write(0, 1, std::vector<double>{1, 1});

  PendingSet pending;
  ASSERT_EQ(admit_read(dc, db.sync_state(), 0, 1, 2), defer);
  pending.defer({OpKind::read, 0, 1, 2});
  db.execute_read(0, 0, 2);  // unrelated chunk, so nothing wakes
  EXPECT_TRUE(pending.on_executed(dc, db.sync_state(), {7, OpKind::read, 0, 0, 2}).empty());
  const auto w = db.execute_write(1, 1, std::vector<double>{2, 2});
  const auto woken = pending.on_executed(dc, db.sync_state(), w);
  ASSERT_EQ(woken.size(), 1u);
  EXPECT_EQ(woken[0], (PendingOp{OpKind::read, 0, 1, 2}));
  EXPECT_TRUE(pending.empty());
}

TEST(PendingSetTest, LastBspReadWakesAllWritesInFifoOrder) {
  const int p = 3;
  auto db = ParameterDatabase::create(6, p);
  const auto bsp = ProtocolConfig::bsp();
  PendingSet pending;
  std::vector<AccessOp> reads;
  for (WorkerId w = 0; w < p; ++w)
    for (PartitionId k = 0; k < p; ++k)
      if (!(w == 2 && k == 2)) db.execute_read(w, k, 1);
  for (WorkerId w : {2, 0, 1}) {
    ASSERT_EQ(admit_write(bsp, db.sync_state(), w, 1), defer);
    pending.defer({OpKind::write, w, w, 1});
  }
  const auto last = db.execute_read(2, 2, 1).op;
  const auto woken = pending.on_executed(bsp, db.sync_state(), last);
  ASSERT_EQ(woken.size(), 3u);
  EXPECT_EQ(woken[0].worker, 2);
  EXPECT_EQ(woken[1].worker, 0);
  EXPECT_EQ(woken[2].worker, 1);
}

TEST(PendingSetTest, EmptySetAndDuplicates) {
  PendingSet pending;
  auto db = ParameterDatabase::create(2, 2);
  EXPECT_TRUE(pending.on_executed(ProtocolConfig::bsp(), db.sync_state(),
                                  {0, OpKind::read, 0, 0, 1})
                  .empty());
  pending.defer({OpKind::read, 1, 0, 3});
  EXPECT_THROW(pending.defer({OpKind::write, 1, 1, 3}), SchedulerFault);
}

// Randomized single-threaded schedules: every protocol makes progress, reads
// under delay-free protocols observe exactly the previous iteration, admission
// is never revoked, and each history satisfies its protocol's constraints.
TEST(SimulationPropertyTest, ProgressFreshReadsAndCheckableHistories) {
  const std::vector<ProtocolConfig> protocols{
      ProtocolConfig::bsp(), ProtocolConfig::data_centric(), ProtocolConfig::bounded_delay(1),
      ProtocolConfig::bounded_delay(2), ProtocolConfig::fully_async()};
  std::uint64_t seed = 1;
  for (int run = 0; run < 1000; ++run) {
    const auto& protocol = protocols[run % protocols.size()];
    const int p = 2 + run % 7;
    const auto out = testing::simulate(protocol, p, 20, seed++);
    ASSERT_FALSE(out.deadlocked) << protocol.name() << " p=" << p;
    ASSERT_FALSE(out.stale_read) << protocol.name() << " p=" << p;
    ASSERT_FALSE(out.admission_revoked) << protocol.name() << " p=" << p;
    ASSERT_EQ(out.history.ops.size(), static_cast<std::size_t>(p * (p + 1) * 20));
    switch (protocol.kind) {
      case ProtocolKind::bsp:
        ASSERT_TRUE(check_bsp(out.history).valid);
        ASSERT_TRUE(check_sequential(out.history).valid);
        break;
      case ProtocolKind::data_centric:
        ASSERT_TRUE(check_rcwc(out.history, 0).valid);
        ASSERT_TRUE(check_sequential(out.history).valid);
        break;
      case ProtocolKind::bounded_delay:
        ASSERT_TRUE(check_rcwc(out.history, protocol.delta).valid);
        break;
      case ProtocolKind::fully_async:
        break;
    }
  }
}

TEST(SchedulerTest, DeferredReadIsWokenByAnotherThread) {
  auto db = ParameterDatabase::create(2, 2);
  Scheduler sched(db, ProtocolConfig::data_centric(), std::chrono::seconds(5));
  for (WorkerId w = 0; w < 2; ++w)
    for (PartitionId k = 0; k < 2; ++k) ASSERT_TRUE(sched.read(w, k, 1).has_value());
  ASSERT_TRUE(sched.write(0, 1, std::vector<double>{4.0}));

  auto reader = std::async(std::launch::async, [&] { return sched.read(0, 1, 2); });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  ASSERT_TRUE(sched.write(1, 1, std::vector<double>{7.0}));
  const auto values = reader.get();
  ASSERT_TRUE(values.has_value());
  EXPECT_EQ(*values, std::vector<double>{7.0});
}

TEST(SchedulerTest, StopReleasesBlockedWorkers) {
  auto db = ParameterDatabase::create(2, 2);
  SchedulerHooks hooks;
  hooks.on_frontier = [](Iteration a, const ParameterDatabase&) -> std::optional<Iteration> {
    return a;
  };
  Scheduler sched(db, ProtocolConfig::data_centric(), std::chrono::seconds(5), hooks);
  for (WorkerId w = 0; w < 2; ++w)
    for (PartitionId k = 0; k < 2; ++k) ASSERT_TRUE(sched.read(w, k, 1).has_value());
  ASSERT_TRUE(sched.write(0, 1, std::vector<double>{1.0}));
  auto blocked = std::async(std::launch::async, [&] { return sched.read(1, 0, 3); });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  ASSERT_TRUE(sched.write(1, 1, std::vector<double>{1.0}));
  EXPECT_FALSE(blocked.get().has_value());
  EXPECT_EQ(sched.stop_iteration(), 1);
  EXPECT_FALSE(sched.read(0, 0, 2).has_value());
  EXPECT_EQ(sched.failure(), nullptr);
}

TEST(SchedulerTest, WatchdogAbortsWithPendingDump) {
  auto db = ParameterDatabase::create(2, 2);
  Scheduler sched(db, ProtocolConfig::data_centric(), std::chrono::milliseconds(150));
  EXPECT_FALSE(sched.read(0, 1, 5).has_value());
  auto error = sched.failure();
  ASSERT_NE(error, nullptr);
  try {
    std::rethrow_exception(error);
  } catch (const DeadlockError& e) {
    EXPECT_NE(std::string(e.what()).find("r0[p1][5]"), std::string::npos) << e.what();
  }
}

TEST(SchedulerTest, RecordsEveryOperationInExecutionOrder) {
  auto db = ParameterDatabase::create(4, 2);
  History h{2, {}};
  SchedulerHooks hooks;
  hooks.on_executed = [&](const AccessOp& op) { h.append(op); };
  Scheduler sched(db, ProtocolConfig::data_centric(), std::chrono::seconds(5), hooks);
  std::vector<std::jthread> workers;
  for (WorkerId w = 0; w < 2; ++w) {
    workers.emplace_back([&, w] {
      for (Iteration a = 1; a <= 10; ++a) {
        for (PartitionId k = 0; k < 2; ++k) ASSERT_TRUE(sched.read(w, k, a));
        ASSERT_TRUE(sched.write(w, a, std::vector<double>(2, 1.0 * a)));
      }
    });
  }
  workers.clear();
  ASSERT_EQ(h.ops.size(), 60u);
  for (std::size_t i = 0; i < h.ops.size(); ++i) EXPECT_EQ(h.ops[i].seq, static_cast<SeqNo>(i));
  EXPECT_TRUE(check_rcwc(h, 0).valid);
}

}  // namespace
}  // namespace dcsync
