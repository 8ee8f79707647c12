#include <gtest/gtest.h>

#include "karl/scheduler.hpp"
#include "support.hpp"

using namespace karl;
using namespace karl::test;

namespace {

// Reference placement written straight from the rule.
std::optional<int> placement_oracle(const std::vector<WorkerView>& ws, const std::string& inst,
                                    const std::set<int>& failed, bool prefer_cached) {
  bool all_failed = std::all_of(ws.begin(), ws.end(), [&](const WorkerView& w) { return failed.contains(w.id); });
  std::vector<WorkerView> eligible;
  for (const auto& w : ws)
    if (w.available && (all_failed || !failed.contains(w.id))) eligible.push_back(w);
  if (eligible.empty()) return std::nullopt;
  std::sort(eligible.begin(), eligible.end(), [](auto& a, auto& b) { return a.id < b.id; });
  for (const auto& w : eligible)
    if (w.warming == inst) return w.id;
  if (prefer_cached)
    for (const auto& w : eligible)
      if (w.cached) return w.id;
  return eligible[0].id;
}

class HangingWorker final : public Worker {
 public:
  HangingWorker(int id, ManualClock& clock) : Worker(id, 1 << 20), clock_(clock) {}
  AttemptResult run(Job, Duration timeout) override {
    AttemptResult r;
    r.started = clock_.now_ms();
    clock_.advance(timeout);
    r.finished = clock_.now_ms();
    r.status = AttemptResult::Status::timed_out;
    r.error = "hung";
    ++runs;
    return r;
  }
  WorkerState state() const override { return WorkerState::idle; }
  std::atomic<int> runs{0};

 private:
  ManualClock& clock_;
};

struct Rig {
  ManualClock clock{0};
  DataStore store;
  sim::FakeInternet internet{clock};
  sim::FakeInternetTransport transport{internet};
  AuditLog audit;
  Broker broker{store, transport, audit, clock};
  PackageCatalog catalog;
  ModuleHost host{broker, audit, catalog, clock};
  DataflowGraph g;
  std::atomic<int> runs{0};

  Rig() {
    add(g, module("m", ports({"in"}), ports({"out"})));
    add(g, module("slow", ports({"in"}), ports({"out"})));
    add(g, module("bad", ports({"in"}), ports({"out"})));
    add(g, module("tick", ports({"in"}), ports({"out"}), {}, Schedule::interval(Duration(100))));
    add(g, module("tock", ports({"in"}), ports({"out"}), {}, Schedule::interval(Duration(30))));
    host.set_graph(g, 1);
    host.register_program("builtin:m", [this](const ProgramSpec&) {
      return std::make_unique<FunctionProgram>([this](ModuleApi& api) {
        ++runs;
        api.push("out", "x");
      });
    });
    host.register_program("builtin:slow", [this](const ProgramSpec&) {
      return std::make_unique<FunctionProgram>([this](ModuleApi& api) {
        api.clock().sleep_for(Duration(800));
        ++runs;
        api.push("out", "x");
      });
    });
    host.register_program("builtin:bad", [](const ProgramSpec&) {
      return std::make_unique<FunctionProgram>([](ModuleApi&) { throw std::runtime_error("broken"); });
    });
  }

  std::shared_ptr<SandboxWorker> sandbox(int id) {
    return std::make_shared<SandboxWorker>(id, broker, clock, 1 << 20);
  }
};

}  // namespace

TEST(Placement, TimeoutsGrowGeometrically) {
  PlacementPolicy p;
  EXPECT_EQ(p.timeout_for(1), Duration(1000));
  EXPECT_EQ(p.timeout_for(2), Duration(2000));
  EXPECT_EQ(p.timeout_for(4), Duration(8000));
  p.base_timeout = Duration(150);
  p.timeout_multiplier = 1.5;
  EXPECT_EQ(p.timeout_for(3), Duration(338));
}

TEST(Placement, PolicyJson) {
  PlacementPolicy p;
  p.max_attempts = 7;
  auto back = PlacementPolicy::from_json(p.to_json());
  EXPECT_EQ(back.max_attempts, 7);
  EXPECT_THROW(PlacementPolicy::from_json({{"timeout_multiplier", 1.0}}), Error);
  EXPECT_THROW(PlacementPolicy::from_json({{"max_attempts", 0}}), Error);
}

TEST(Placement, MatchesOracleExhaustively) {
  // Three workers, each: available?, warming none/inst/other, cached?
  std::size_t checked = 0;
  for (int code = 0; code < 12 * 12 * 12; ++code) {
    std::vector<WorkerView> ws;
    int c = code;
    for (int id = 1; id <= 3; ++id) {
      int k = c % 12;
      c /= 12;
      WorkerView w;
      w.id = id;
      w.available = k & 1;
      w.cached = (k >> 1) & 1;
      int warm = k >> 2;
      if (warm == 1) w.warming = "m";
      if (warm == 2) w.warming = "other";
      ws.push_back(w);
    }
    for (int mask = 0; mask < 8; ++mask) {
      std::set<int> failed;
      for (int id = 1; id <= 3; ++id)
        if (mask & (1 << (id - 1))) failed.insert(id);
      for (bool pc : {false, true}) {
        ASSERT_EQ(choose_worker(ws, "m", failed, pc), placement_oracle(ws, "m", failed, pc));
        std::reverse(ws.begin(), ws.end());
        ASSERT_EQ(choose_worker(ws, "m", failed, pc), placement_oracle(ws, "m", failed, pc));
        std::reverse(ws.begin(), ws.end());
        ++checked;
      }
    }
  }
  EXPECT_EQ(checked, 12u * 12 * 12 * 8 * 2);
}

TEST(Scheduler, RunsQueuedTriggersInOrder) {
  Rig rig;
  Scheduler s(rig.host);
  s.add_worker(rig.sandbox(1));
  s.set_paused(true);
  EXPECT_EQ(s.enqueue(Trigger::manual("m")), 0u);
  EXPECT_EQ(s.enqueue(Trigger::manual("slow")), 1u);
  EXPECT_EQ(s.enqueue(Trigger::manual("m")), 2u);
  EXPECT_EQ(s.queue_depth(), 3u);
  EXPECT_EQ(s.queued()[1].instance_id, "slow");
  s.set_paused(false);
  s.drain();
  auto done = s.completions();
  ASSERT_EQ(done.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(done[i].trigger_seq, i + 1);
    EXPECT_EQ(done[i].outcome, Completion::Outcome::completed);
  }
  EXPECT_EQ(rig.runs.load(), 3);
  EXPECT_THROW(s.enqueue(Trigger::manual("nope")), Error);
}

TEST(Scheduler, FailuresAreAuditedNotRetried) {
  Rig rig;
  Scheduler s(rig.host);
  s.add_worker(rig.sandbox(1));
  s.add_worker(rig.sandbox(2));
  s.enqueue(Trigger::manual("bad"));
  s.drain();
  ASSERT_EQ(s.attempts().size(), 1u);
  EXPECT_EQ(s.completions().at(0).outcome, Completion::Outcome::failed);
  auto f = rig.audit.query({AuditRecord::Kind::failure});
  ASSERT_EQ(f.size(), 1u);
  EXPECT_NE(f[0].detail.find("broken"), std::string::npos);
}

TEST(Scheduler, TimedOutAttemptMovesToAnotherWorkerWithLongerTimeout) {
  Rig rig;
  Scheduler s(rig.host);
  auto hang = std::make_shared<HangingWorker>(1, rig.clock);
  s.add_worker(hang);
  s.add_worker(rig.sandbox(2));
  s.enqueue(Trigger::manual("m"));
  s.drain();
  auto a = s.attempts();
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].worker, 1);
  EXPECT_EQ(a[0].timeout_ms, 1000);
  EXPECT_EQ(a[0].status, AttemptResult::Status::timed_out);
  EXPECT_EQ(a[1].worker, 2);
  EXPECT_EQ(a[1].timeout_ms, 2000);
  EXPECT_EQ(a[1].status, AttemptResult::Status::completed);
  auto c = s.completions();
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].attempts, 2);
  EXPECT_EQ(c[0].worker, 2);
  EXPECT_EQ(s.metrics()["attempts"]["m"]["2"], 1);
}

TEST(Scheduler, ExhaustedAfterMaxAttempts) {
  Rig rig;
  PlacementPolicy p;
  p.max_attempts = 4;
  Scheduler s(rig.host, p);
  s.add_worker(std::make_shared<HangingWorker>(1, rig.clock));
  s.add_worker(std::make_shared<HangingWorker>(2, rig.clock));
  s.enqueue(Trigger::manual("m"));
  s.drain();
  auto a = s.attempts();
  ASSERT_EQ(a.size(), 4u);
  std::vector<Millis> timeouts;
  std::vector<int> workers;
  for (const auto& r : a) {
    timeouts.push_back(r.timeout_ms);
    workers.push_back(r.worker);
  }
  EXPECT_EQ(timeouts, (std::vector<Millis>{1000, 2000, 4000, 8000}));
  EXPECT_EQ(workers[0], 1);
  EXPECT_EQ(workers[1], 2);
  auto c = s.completions();
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].outcome, Completion::Outcome::exhausted);
  EXPECT_EQ(rig.audit.query({AuditRecord::Kind::exhausted}).size(), 1u);
  EXPECT_EQ(rig.clock.now_ms(), 15000);
  EXPECT_EQ(s.metrics()["exhausted"], 1);
}

TEST(Scheduler, InstanceTimeoutCapsTheAttempt) {
  Rig rig;
  rig.g.modules["m"].config["timeout_ms"] = "300";
  rig.host.set_graph(rig.g, 2);
  Scheduler s(rig.host);
  s.add_worker(std::make_shared<HangingWorker>(1, rig.clock));
  s.add_worker(rig.sandbox(2));
  s.enqueue(Trigger::manual("m"));
  s.drain();
  EXPECT_EQ(s.attempts().at(0).timeout_ms, 300);
}

TEST(Scheduler, SlowInitIsWarmedAndResumed) {
  Rig rig;
  Scheduler s(rig.host);
  s.add_worker(rig.sandbox(1));
  s.enqueue(Trigger::manual("slow"));
  s.drain();
  auto& w = s.worker(1);
  for (int i = 0; i < 2000 && !w.warm_ready(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  ASSERT_EQ(w.warming(), "slow");
  auto t0 = rig.clock.now_ms();
  s.enqueue(Trigger::manual("slow"));
  s.drain();
  auto a = s.attempts();
  ASSERT_EQ(a.size(), 2u);
  EXPECT_FALSE(a[0].warm);
  EXPECT_TRUE(a[1].warm);
  EXPECT_EQ(a[1].finished - a[1].started, 0);
  EXPECT_GE(t0, 1600);
  EXPECT_EQ(rig.store.size("slow.out"), 2u);
  EXPECT_GE(s.metrics()["warm_resumes"].get<int>(), 1);
}

TEST(Scheduler, GraphChangeDropsWarmInstances) {
  Rig rig;
  Scheduler s(rig.host);
  s.add_worker(rig.sandbox(1));
  s.enqueue(Trigger::manual("slow"));
  s.drain();
  auto& w = s.worker(1);
  for (int i = 0; i < 2000 && !w.warm_ready(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  s.invalidate_warm();
  EXPECT_FALSE(w.warming());
  s.enqueue(Trigger::manual("slow"));
  s.drain();
  EXPECT_FALSE(s.attempts().at(1).warm);
}

TEST(Scheduler, FastModulesAreNotWarmed) {
  Rig rig;
  Scheduler s(rig.host);
  s.add_worker(rig.sandbox(1));
  s.enqueue(Trigger::manual("m"));
  s.drain();
  EXPECT_FALSE(s.worker(1).warming());
}

TEST(Scheduler, IntervalTicks) {
  Rig rig;
  Scheduler s(rig.host);
  EXPECT_TRUE(s.tick_intervals(0).empty());
  EXPECT_EQ(s.next_due("tick"), 100);
  EXPECT_EQ(s.next_due("tock"), 30);
  EXPECT_EQ(s.next_due("m"), std::nullopt);
  auto t = s.tick_intervals(30);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0], Trigger::interval("tock"));
  EXPECT_TRUE(s.tick_intervals(59).empty());
  t = s.tick_intervals(250);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].instance_id, "tick");
  EXPECT_EQ(t[1].instance_id, "tock");
  // Missed periods collapse into one tick.
  EXPECT_EQ(s.next_due("tick"), 300);
  EXPECT_EQ(s.next_due("tock"), 270);
}

TEST(Scheduler, IntervalArithmeticMatchesModel) {
  Rig rig;
  Scheduler s(rig.host);
  std::mt19937_64 rng(8);
  Millis now = 0, due = 30;
  s.tick_intervals(0);
  int ticks = 0;
  for (int i = 0; i < 300; ++i) {
    now += static_cast<Millis>(rng() % 70);
    bool fired = false;
    for (const auto& t : s.tick_intervals(now)) fired |= t.instance_id == "tock";
    bool want = now >= due;
    if (want)
      while (due <= now) due += 30;
    ASSERT_EQ(fired, want) << "at " << now;
    ASSERT_EQ(s.next_due("tock"), due);
    ticks += fired;
  }
  EXPECT_GT(ticks, 100);
}

TEST(Scheduler, CachedPackagesPreferred) {
  Rig rig;
  auto pkg = make_package(rig.g.modules["m"].manifest, {{"blob", std::string(4096, 'p')}});
  rig.catalog.add(pkg);
  rig.g.modules["m"].manifest = pkg.manifest;
  rig.host.set_graph(rig.g, 2);
  Scheduler s(rig.host);
  s.add_worker(rig.sandbox(1));
  s.add_worker(rig.sandbox(2));
  // Seed worker 2's cache first.
  rig.host.ensure_cached(s.worker(2), pkg.manifest);
  auto sent = rig.host.tracker().bytes_sent();
  s.enqueue(Trigger::manual("m"));
  s.drain();
  auto a = s.attempts();
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].worker, 2);
  EXPECT_EQ(a[0].cache, CacheResult::hit);
  EXPECT_EQ(rig.host.tracker().bytes_sent(), sent);
  auto m = s.metrics();
  EXPECT_EQ(m["cache"]["hits"], 1);
  EXPECT_EQ(m["workers"].size(), 2u);
}
