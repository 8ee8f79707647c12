#include <gtest/gtest.h>

#include "karl/enforcement.hpp"
#include "support.hpp"

using namespace karl;
using namespace karl::test;

namespace {

const std::string A = "speaker.speech_command" + kArrow + "speech_to_intent" + kArrow + "weather" + kArrow + "weather.com";
const std::string B = "camera.motion" + kArrow + "person_detection" + kArrow + "statistics" + kArrow + "statistics.com";
const std::string C = "speaker.speech_command" + kArrow + "speech_to_intent" + kArrow + "light_switch" + kArrow + "#light.state";
const std::string D = "firmware.com" + kArrow + "firmware" + kArrow + "#camera.firmware";

UserDecisions allow_all_but(const DataflowGraph& g, std::set<std::string> denied) {
  UserDecisions d;
  for (const auto& p : extract_permissions(g)) d[p.text()] = !denied.contains(p.text());
  return d;
}

std::vector<std::string> base_texts(const DataflowGraph& g) {
  std::vector<std::string> out;
  for (const auto& p : extract_permissions(g)) out.push_back(p.text());
  return out;
}

bool contains(const std::vector<std::string>& xs, const std::string& x) {
  return std::find(xs.begin(), xs.end(), x) != xs.end();
}

}  // namespace

TEST(Enforce, AllowedEverythingLeavesGraphAlone) {
  auto g = fleet_graph();
  auto eg = enforce(g, allow_all_but(g, {}), {});
  EXPECT_TRUE(eg.overlay().empty());
  EXPECT_TRUE(eg.sacrificed().empty());
  EXPECT_EQ(to_json(eg.graph()), to_json(g));
  EXPECT_EQ(eg.effective_permission_texts(), base_texts(g));
}

TEST(Enforce, DenyingDeviceSinkRemovesTheLastEdge) {
  auto g = fleet_graph();
  auto eg = enforce(g, allow_all_but(g, {C}), {});
  ASSERT_EQ(eg.overlay().size(), 1u);
  const auto& m = eg.overlay()[0];
  EXPECT_EQ(m.kind, Modification::Kind::RemoveEdge);
  EXPECT_EQ(m.edge.src, module_output("light_switch", "state"));
  EXPECT_EQ(m.edge.dst, device_input("light", "state"));
  auto texts = eg.effective_permission_texts();
  EXPECT_EQ(texts.size(), 3u);
  EXPECT_FALSE(contains(texts, C));
  for (const auto& t : {A, B, D}) EXPECT_TRUE(contains(texts, t)) << t;
}

TEST(Enforce, DenyingDomainSinkRevokesTheGrant) {
  auto g = fleet_graph();
  auto eg = enforce(g, allow_all_but(g, {A}), {});
  ASSERT_EQ(eg.overlay().size(), 1u);
  EXPECT_EQ(eg.overlay()[0].kind, Modification::Kind::RevokeNetwork);
  EXPECT_EQ(eg.overlay()[0].module, "weather");
  EXPECT_EQ(eg.overlay()[0].domain, "weather.com");
  EXPECT_FALSE(eg.graph().modules.at("weather").network_grant.contains("weather.com"));
  EXPECT_EQ(eg.graph().edges, g.edges);
}

TEST(Enforce, MissingDecisionCountsAsDenied) {
  auto g = fleet_graph();
  UserDecisions d{{A, true}, {C, true}, {D, true}};
  auto eg = enforce(g, d, {});
  EXPECT_FALSE(contains(eg.effective_permission_texts(), B));
  for (const auto& pd : eg.decisions())
    if (pd.permission.text() == B) EXPECT_EQ(pd.verdict, Verdict::denied_by_user);
}

TEST(Enforce, ExitPolicyConflictOverridesAllow) {
  auto g = fleet_graph();
  auto eg = enforce(g, allow_all_but(g, {}), {{"person_detection.image", parse_policy("boolean | prio")}});
  ASSERT_EQ(eg.conflicts().size(), 1u);
  bool seen = false;
  for (const auto& pd : eg.decisions()) {
    if (pd.permission.text() != B) {
      EXPECT_EQ(pd.verdict, Verdict::allowed);
      continue;
    }
    seen = true;
    EXPECT_EQ(pd.verdict, Verdict::denied_by_exit_policy);
    EXPECT_EQ(pd.policy_tag, "person_detection.image");
  }
  EXPECT_TRUE(seen);
  EXPECT_FALSE(contains(eg.effective_permission_texts(), B));
}

TEST(Enforce, OccupancyDenialSacrificesTheJoinedPath) {
  auto g = occupancy_graph();
  auto texts = base_texts(g);
  ASSERT_EQ(texts.size(), 3u);
  std::string e, o;
  for (const auto& t : texts) {
    if (t.rfind("camera.motion", 0) == 0) e = t;
    if (t.rfind("occupancy_sensor.at_home", 0) == 0) o = t;
  }
  ASSERT_FALSE(e.empty());
  ASSERT_FALSE(o.empty());
  auto eg = enforce(g, allow_all_but(g, {o}), {});
  bool revoked = false;
  for (const auto& m : eg.overlay())
    revoked |= m.kind == Modification::Kind::RevokeNetwork && m.module == "statistics" && m.domain == "statistics.com";
  EXPECT_TRUE(revoked);
  ASSERT_EQ(eg.sacrificed().size(), 1u);
  EXPECT_EQ(eg.sacrificed()[0].permission, e);
  EXPECT_EQ(eg.sacrificed()[0].reason.rfind("IrreconcilableOverlap", 0), 0u);
  auto after = eg.effective_permission_texts();
  EXPECT_FALSE(contains(after, e));
  EXPECT_FALSE(contains(after, o));
}

TEST(Enforce, SharedSuffixIsDuplicatedWhenItCanStayClean) {
  DataflowGraph g;
  add(g, device("mic", ports({"audio"})));
  add(g, device("cam", ports({"image"})));
  add(g, module("a", ports({"x"}), ports({"out"})));
  add(g, module("b", ports({"x"}), ports({"out"})));
  add(g, module("c", ports({"y"}), ports({"out"}), {"net.com"}));
  wire(g, device_output("mic", "audio"), module_input("a", "x"));
  wire(g, device_output("cam", "image"), module_input("b", "x"));
  wire(g, module_output("a", "out"), module_input("c", "y"));
  wire(g, module_output("b", "out"), module_input("c", "y"));
  const std::string keep = "mic.audio" + kArrow + "a" + kArrow + "c" + kArrow + "net.com";
  const std::string drop = "cam.image" + kArrow + "b" + kArrow + "c" + kArrow + "net.com";
  ASSERT_EQ(base_texts(g), (std::vector<std::string>{drop, keep}));

  auto eg = enforce(g, {{keep, true}, {drop, false}}, {});
  EXPECT_TRUE(eg.sacrificed().empty());
  EXPECT_EQ(eg.effective_permission_texts(), std::vector<std::string>{keep});
  const Modification* dup = nullptr;
  for (const auto& m : eg.overlay())
    if (m.kind == Modification::Kind::DuplicateSubpath) dup = &m;
  ASSERT_NE(dup, nullptr);
  ASSERT_EQ(dup->clones.size(), 1u);
  EXPECT_EQ(dup->originals, std::vector<std::string>{"c"});
  EXPECT_EQ(eg.original_of(dup->clones[0]), "c");
  EXPECT_TRUE(eg.graph().modules.at(dup->clones[0]).network_grant.contains("net.com"));
  EXPECT_FALSE(eg.graph().modules.at("c").network_grant.contains("net.com"));
  auto j = eg.to_json();
  EXPECT_EQ(j["overlay"].size(), eg.overlay().size());
  EXPECT_EQ(j["decisions"].size(), 2u);
}

TEST(Enforce, SoundOnRandomGraphs) {
  std::mt19937_64 rng(777);
  int nontrivial = 0;
  for (int round = 0; round < 300; ++round) {
    auto g = random_graph(rng);
    auto perms = extract_permissions(g);
    if (perms.empty()) continue;
    UserDecisions d;
    std::set<std::string> denied, allowed;
    for (const auto& p : perms) {
      bool ok = rng() % 2 == 0;
      d[p.text()] = ok;
      (ok ? allowed : denied).insert(p.text());
    }
    auto eg = enforce(g, d, {});
    auto after = eg.effective_permission_texts();
    std::set<std::string> sacrificed;
    for (const auto& s : eg.sacrificed()) sacrificed.insert(s.permission);
    for (const auto& t : after) ASSERT_FALSE(denied.contains(t)) << "denied flow survives: " << t;
    for (const auto& t : allowed)
      ASSERT_TRUE(contains(after, t) || sacrificed.contains(t)) << "allowed flow lost silently: " << t;
    for (const auto& m : eg.overlay()) {
      if (m.kind == Modification::Kind::RevokeNetwork)
        ASSERT_TRUE(g.modules.at(m.module).network_grant.contains(m.domain));
      if (m.kind == Modification::Kind::RemoveEdge) ASSERT_TRUE(g.edges.contains(m.edge));
    }
    // Originals never gain edges or grants.
    for (const auto& [id, mod] : g.modules)
      for (const auto& dom : eg.graph().modules.at(id).network_grant) ASSERT_TRUE(mod.network_grant.contains(dom));
    for (const auto& e : eg.graph().edges) {
      bool clone_edge = eg.original_of(e.src.owner) != e.src.owner || eg.original_of(e.dst.owner) != e.dst.owner;
      if (!clone_edge) ASSERT_TRUE(g.edges.contains(e));
    }
    nontrivial += !denied.empty() && !allowed.empty();
    validate(eg.graph());
  }
  EXPECT_GT(nontrivial, 30);
}

TEST(Enforce, Deterministic) {
  auto g = occupancy_graph();
  auto d = allow_all_but(g, {});
  d.begin()->second = false;
  EXPECT_EQ(enforce(g, d, {}).to_json().dump(), enforce(g, d, {}).to_json().dump());
}
