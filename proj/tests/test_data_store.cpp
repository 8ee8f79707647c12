#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "karl/data_store.hpp"
#include "support.hpp"

using namespace karl;
using namespace karl::test;

namespace {

std::optional<Errc> code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST(DataStore, IdsAreDenseFromOne) {
  DataStore s;
  EXPECT_EQ(s.push("cam.motion", 10, "a"), 1u);
  EXPECT_EQ(s.push("cam.motion", 20, "b"), 2u);
  EXPECT_EQ(s.push("other", 5, "x"), 1u);
  EXPECT_EQ(s.size("cam.motion"), 2u);
  EXPECT_EQ(s.last_id("cam.motion"), 2u);
  EXPECT_EQ(s.read_event("cam.motion", 2).payload, "b");
  EXPECT_EQ(s.size("none"), 0u);
}

TEST(DataStore, RangeReadsAreInclusive) {
  DataStore s;
  for (Millis t : {10, 20, 20, 30, 40}) s.push("t", t, std::to_string(t));
  auto r = s.read("t", 20, 30);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].id, 2u);
  EXPECT_EQ(r[2].payload, "30");
  EXPECT_TRUE(s.read("t", 41, 100).empty());
  EXPECT_EQ(s.read("t", 0, 1000).size(), 5u);
  EXPECT_EQ(code_of([&] { s.read("t", 5, 4); }), Errc::InvalidArgument);
}

TEST(DataStore, MatchesLinearScanOnRandomData) {
  std::mt19937_64 rng(5);
  DataStore s;
  std::vector<Entry> mirror;
  Millis t = 0;
  for (int i = 0; i < 500; ++i) {
    Millis proposed = t + static_cast<Millis>(rng() % 7) - 2;
    auto id = s.push("t", proposed, std::to_string(i));
    t = std::max(t, proposed);
    mirror.push_back({id, t, std::to_string(i)});
  }
  for (int q = 0; q < 200; ++q) {
    Millis lo = static_cast<Millis>(rng() % 800), hi = lo + static_cast<Millis>(rng() % 100);
    std::vector<Entry> want;
    for (const auto& e : mirror)
      if (e.timestamp >= lo && e.timestamp <= hi) want.push_back(e);
    ASSERT_EQ(s.read("t", lo, hi), want);
  }
}

TEST(DataStore, OlderTimestampsAreClamped) {
  DataStore s;
  s.push("t", 100, "a");
  s.push("t", 50, "b");
  EXPECT_EQ(s.read_event("t", 2).timestamp, 100);
}

TEST(DataStore, LastN) {
  DataStore s;
  for (int i = 0; i < 5; ++i) s.push("t", i, std::to_string(i));
  auto r = s.read_last_n("t", 2);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].payload, "3");
  EXPECT_EQ(r[1].payload, "4");
  EXPECT_EQ(s.read_last_n("t", 10).size(), 5u);
  EXPECT_TRUE(s.read_last_n("t", 0).empty());
}

TEST(DataStore, Errors) {
  DataStore s;
  EXPECT_EQ(code_of([&] { s.read("x", 0, 1); }), Errc::UnknownTag);
  EXPECT_EQ(code_of([&] { s.read_last_n("x", 1); }), Errc::UnknownTag);
  s.declare("x");
  EXPECT_TRUE(s.read("x", 0, 1).empty());
  EXPECT_EQ(code_of([&] { s.read_event("x", 1); }), Errc::UnknownEntry);
  EXPECT_EQ(code_of([&] { s.read_event("x", 0); }), Errc::UnknownEntry);
}

TEST(DataStore, QuotaRejectsWithStorageFull) {
  DataStoreOptions o;
  o.default_quota = 3;
  o.quotas["big"] = 5;
  DataStore s(o);
  for (int i = 0; i < 3; ++i) s.push("t", i, "x");
  try {
    s.push("t", 9, "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::StorageFull);
    EXPECT_EQ(e.detail(), "t");
  }
  EXPECT_EQ(s.size("t"), 3u);
  for (int i = 0; i < 5; ++i) s.push("big", i, "x");
  EXPECT_EQ(code_of([&] { s.push("big", 9, "x"); }), Errc::StorageFull);
}

TEST(DataStore, FileNamesRoundTrip) {
  for (std::string tag : {"camera.motion", "#light.state", "a/b c", "x%y", "caf\xC3\xA9"}) {
    auto name = DataStore::file_name_for(tag);
    EXPECT_EQ(name.find('/'), std::string::npos);
    EXPECT_EQ(DataStore::tag_for_file_name(name), tag);
  }
  EXPECT_EQ(DataStore::file_name_for("#light.state"), "%23light.state.log");
}

TEST(DataStore, RecoversFromDisk) {
  TempDir dir;
  DataStoreOptions o;
  o.directory = dir.path();
  {
    DataStore s(o);
    s.push("#light.state", 10, std::string("\0\x01\x02", 3));
    s.push("#light.state", 20, "two");
    s.push("cam.motion", 30, std::string(100000, 'z'));
    s.declare("empty");
  }
  DataStore s(o);
  EXPECT_EQ(s.size("#light.state"), 2u);
  EXPECT_EQ(s.read_event("#light.state", 1).payload, std::string("\0\x01\x02", 3));
  EXPECT_EQ(s.read_event("cam.motion", 1).payload.size(), 100000u);
  EXPECT_TRUE(s.has_tag("empty"));
  EXPECT_EQ(s.push("#light.state", 5, "three"), 3u);
  EXPECT_EQ(s.read_event("#light.state", 3).timestamp, 20);
}

TEST(DataStore, TornTailIsCutOff) {
  TempDir dir;
  DataStoreOptions o;
  o.directory = dir.path();
  {
    DataStore s(o);
    s.push("t", 1, "first");
    s.push("t", 2, "second");
  }
  auto path = dir.path() / DataStore::file_name_for("t");
  auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full - 3);
  {
    DataStore s(o);
    EXPECT_EQ(s.size("t"), 1u);
    EXPECT_EQ(s.push("t", 3, "again"), 2u);
  }
  DataStore s(o);
  ASSERT_EQ(s.size("t"), 2u);
  EXPECT_EQ(s.read_event("t", 2).payload, "again");
}

TEST(DataStore, ConcurrentWritersKeepIdsDense) {
  DataStore s;
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 500; ++i) {
        s.push("shared", i, std::to_string(t));
        s.push("own" + std::to_string(t), i, "x");
        s.read_last_n("shared", 3);
      }
    });
  for (auto& t : threads) t.join();
  auto all = s.read("shared", 0, 1000);
  ASSERT_EQ(all.size(), 4000u);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].id, i + 1);
    if (i) EXPECT_GE(all[i].timestamp, all[i - 1].timestamp);
  }
  EXPECT_EQ(s.change_counter(), 8000u);
}

TEST(DataStore, WaitForChange) {
  DataStore s;
  SystemClock clock;
  auto seen = s.change_counter();
  EXPECT_FALSE(s.wait_for_change(seen, clock, Duration(20)));
  std::thread writer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    s.push("t", 1, "x");
  });
  EXPECT_TRUE(s.wait_for_change(seen, clock, Duration(5000)));
  writer.join();
}
