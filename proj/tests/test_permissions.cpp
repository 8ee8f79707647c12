#include <gtest/gtest.h>

#include <deque>

#include "karl/permission.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace karl;
using namespace karl::test;

namespace {

std::vector<std::string> texts(const DataflowGraph& g) {
  std::vector<std::string> out;
  for (const auto& p : extract_permissions(g)) out.push_back(p.text());
  return out;
}

const std::string A = "speaker.speech_command" + kArrow + "speech_to_intent" + kArrow + "weather" + kArrow + "weather.com";
const std::string B = "camera.motion" + kArrow + "person_detection" + kArrow + "statistics" + kArrow + "statistics.com";
const std::string C = "speaker.speech_command" + kArrow + "speech_to_intent" + kArrow + "light_switch" + kArrow + "#light.state";
const std::string D = "firmware.com" + kArrow + "firmware" + kArrow + "#camera.firmware";
const std::string E = "camera.motion" + kArrow + "person_detection (+ occupancy_sensor.at_home)" + kArrow +
                      "boolean" + kArrow + "statistics" + kArrow + "statistics.com";

}  // namespace

TEST(Permissions, FleetYieldsExactlyFour) {
  auto t = texts(fleet_graph());
  std::vector<std::string> want{A, B, C, D};
  std::sort(want.begin(), want.end());
  EXPECT_EQ(t, want);
}

TEST(Permissions, WithoutTheLinkThereIsNoLightPermission) {
  auto& c = reference_catalog();
  DataflowGraph g;
  for (const auto* name : {"light", "speaker", "camera"}) g = register_fragment(g, sim::fragment(name, c));
  auto t = texts(g);
  EXPECT_EQ(std::count(t.begin(), t.end(), C), 0);
  EXPECT_EQ(t.size(), 3u);
}

TEST(Permissions, DirectionAndSinkKinds) {
  for (const auto& p : extract_permissions(fleet_graph())) {
    if (p.text() == D) {
      EXPECT_EQ(p.direction, Direction::ingestion);
      EXPECT_FALSE(p.sink_is_domain);
      EXPECT_EQ(p.source, "firmware.com");
    } else if (p.text() == C) {
      EXPECT_EQ(p.direction, Direction::exfiltration);
      EXPECT_FALSE(p.sink_is_domain);
      ASSERT_EQ(p.routes.size(), 1u);
      EXPECT_EQ(p.routes[0].back().dst, device_input("light", "state"));
    } else {
      EXPECT_TRUE(p.sink_is_domain);
    }
  }
}

TEST(Permissions, OccupancyJoinIsAnnotated) {
  auto t = texts(occupancy_graph());
  EXPECT_NE(std::find(t.begin(), t.end(), E), t.end());
  const std::string O = "occupancy_sensor.at_home (+ person_detection.training_data)" + kArrow + "boolean" +
                        kArrow + "statistics" + kArrow + "statistics.com";
  EXPECT_NE(std::find(t.begin(), t.end(), O), t.end());
}

TEST(Permissions, PrioFansOutToThreeDomains) {
  auto g = register_fragment({}, sim::fragment("camera_prio", reference_catalog()));
  std::size_t n = 0;
  for (const auto& t : texts(g)) n += t.find("prio") != std::string::npos;
  EXPECT_EQ(n, 3u);
}

TEST(Permissions, RenderedFormSeparators) {
  PipelinePermission p;
  p.source = "s.o";
  p.chain = {"x", "y"};
  p.side_inputs = {{}, {"a.b", "c.d"}};
  p.sink = "z.com";
  EXPECT_EQ(render_permission(p), "s.o" + kArrow + "x (+ a.b, c.d)" + kArrow + "y" + kArrow + "z.com");
  EXPECT_EQ(kArrow, " \xE2\x86\x92 ");
}

TEST(Permissions, OutputSortedAndDeterministic) {
  auto g = occupancy_graph();
  auto a = texts(g), b = texts(g);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
}

TEST(Permissions, MatchesOracleOnFleet) {
  EXPECT_EQ(texts(fleet_graph()), permission_oracle(fleet_graph()));
  EXPECT_EQ(texts(occupancy_graph()), permission_oracle(occupancy_graph()));
}

TEST(Permissions, FuzzMatchesBruteForceOracle) {
  std::mt19937_64 rng(20240);
  std::size_t nonempty = 0;
  for (int i = 0; i < 200; ++i) {
    auto g = random_graph(rng);
    auto got = texts(g);
    nonempty += !got.empty();
    ASSERT_EQ(got, permission_oracle(g)) << "graph " << i << ": " << to_json(g).dump();
  }
  EXPECT_GT(nonempty, 100u);
}

TEST(Permissions, EveryRouteIsAPathInTheGraph) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    auto g = random_graph(rng);
    for (const auto& p : extract_permissions(g)) {
      ASSERT_FALSE(p.routes.empty());
      for (const auto& r : p.routes) {
        for (const auto& e : r) EXPECT_TRUE(g.edges.contains(e));
        for (std::size_t k = 1; k < r.size(); ++k) EXPECT_EQ(r[k - 1].dst.owner, r[k].src.owner);
      }
    }
  }
}
