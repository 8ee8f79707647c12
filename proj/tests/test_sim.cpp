#include <gtest/gtest.h>

#include "karl/graph_json.hpp"
#include "karl/host.hpp"
#include "support.hpp"

using namespace karl;
using namespace karl::test;

namespace {

class RecordingLink final : public sim::DeviceLink {
 public:
  void push(const std::string& port, const Bytes& payload) override { pushed.push_back({port, payload}); }
  std::vector<Entry> poll(const std::string& port, std::uint64_t after) override {
    std::vector<Entry> out;
    for (const auto& e : inbox[port])
      if (e.id > after) out.push_back(e);
    return out;
  }
  std::vector<std::pair<std::string, Bytes>> pushed;
  std::map<std::string, std::vector<Entry>> inbox;
};

}  // namespace

TEST(Payloads, LabelsAndSizes) {
  auto img = sim::image_payload("person:2", 5, 1000);
  EXPECT_EQ(img.size(), 1000u);
  EXPECT_EQ(img.rfind("KARLPNG:person:2\n", 0), 0u);
  EXPECT_EQ(sim::payload_label(img), "person:2");
  EXPECT_EQ(sim::image_payload("x", 5, 1000), sim::image_payload("x", 5, 1000));
  EXPECT_NE(sim::image_payload("x", 5, 1000), sim::image_payload("x", 6, 1000));
  auto wav = sim::speech_payload("turn on the light", 1);
  EXPECT_EQ(wav.size(), 172000u);
  EXPECT_EQ(sim::payload_label(wav), "turn on the light");
  EXPECT_EQ(sim::image_payload("x", 1).size(), 156000u);
}

TEST(Payloads, Intents) {
  auto on = sim::intent_for("turn on the light");
  ASSERT_TRUE(on);
  EXPECT_EQ(on->first, "light_intent");
  EXPECT_EQ(Json::parse(on->second)["state"], "on");
  EXPECT_EQ(sim::intent_for("what is the weather")->first, "weather_intent");
  EXPECT_FALSE(sim::intent_for("sing a song"));
}

TEST(ReferenceModules, ManifestsAndPackages) {
  const auto& names = sim::reference_module_names();
  EXPECT_EQ(names.back(), "prio");
  PackageCatalog cat;
  sim::CatalogOptions opts;
  opts.package_bytes["statistics"] = 50000;
  sim::install_reference_packages(cat, opts);
  for (const auto& n : names) {
    auto m = cat.manifest(n);
    ASSERT_TRUE(m) << n;
    EXPECT_EQ(m->name, n);
    EXPECT_FALSE(m->package.hash.empty());
    auto blob = cat.blob(m->package.hash);
    ASSERT_NE(blob, nullptr);
    EXPECT_EQ(sha256_hex(*blob), m->package.hash);
    EXPECT_NO_THROW(sim::reference_program(n));
  }
  EXPECT_GE(cat.manifest("statistics")->package.size_bytes, 50000u);
  EXPECT_THROW(sim::reference_manifest("nope"), Error);
  EXPECT_EQ(sim::reference_manifest("weather").domains, std::vector<std::string>{"weather.com"});
}

TEST(Fleet, FragmentsValidateAndRoundTrip) {
  auto& cat = reference_catalog();
  for (const auto& name : sim::fragment_names()) {
    auto f = sim::fragment(name, cat);
    EXPECT_NO_THROW(validate(f)) << name;
    EXPECT_EQ(f.devices.size(), 1u) << name;
    EXPECT_EQ(graph_from_json(to_json(f)), f) << name;
  }
  EXPECT_THROW(sim::fragment("toaster", cat), Error);
  auto cam = sim::fragment("camera", cat);
  ASSERT_TRUE(cam.devices.at("camera").app);
  EXPECT_EQ(cam.modules.at("firmware").schedule.kind, Schedule::Kind::interval);
}

TEST(FakeInternet, CountsAndSubdomains) {
  ManualClock clock(42);
  sim::FakeInternet net(clock);
  sim::FakeInternetTransport t(net);
  EXPECT_EQ(Json::parse(t.send("weather.com", {"GET", "/forecast", {}}).body)["forecast"], "sunny");
  EXPECT_EQ(t.send("firmware.com", {}).body.rfind("KARLFW:", 0), 0u);
  t.send("a.statistics.com", {"POST", "/share", "abc"});
  t.send("statistics.com", {"POST", "/upload", "abcd"});
  EXPECT_EQ(net.count("statistics.com"), 1u);
  EXPECT_EQ(net.count_under("statistics.com"), 2u);
  EXPECT_EQ(net.count_under("tatistics.com"), 0u);
  auto log = net.requests();
  ASSERT_EQ(log.size(), 4u);
  EXPECT_EQ(log[3].body_bytes, 4u);
  EXPECT_EQ(log[3].timestamp, 42);
  EXPECT_TRUE(net.serves("x.weather.com"));
  EXPECT_FALSE(net.serves("evil.com"));
  try {
    t.send("evil.com", {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Transport);
  }
  net.clear();
  EXPECT_TRUE(net.requests().empty());
}

TEST(FakeInternet, ServedOverLoopback) {
  SystemClock clock;
  sim::FakeInternet net(clock);
  sim::FakeInternetServer server(net);
  int port = server.start();
  ASSERT_GT(port, 0);
  sim::LoopbackTransport t("127.0.0.1", port);
  auto r = t.send("weather.com", {"GET", "/forecast", {}});
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(Json::parse(r.body)["temp_c"], 21);
  t.send("b.statistics.com", {"POST", "/share", std::string(5000, 'z')});
  EXPECT_EQ(net.count_under("statistics.com"), 1u);
  EXPECT_EQ(net.requests().back().body_bytes, 5000u);
  EXPECT_THROW(t.send("evil.com", {}), Error);
  server.stop();
  sim::LoopbackTransport dead("127.0.0.1", port);
  EXPECT_THROW(dead.send("weather.com", {}), Error);
}

TEST(SimDevice, EmitsOnItsPeriod) {
  RecordingLink link;
  auto cam = sim::camera_device(Duration(100), [](std::uint64_t n) { return n % 2 ? "empty" : "person:1"; });
  EXPECT_EQ(cam.step(link, 0), 1u);
  EXPECT_EQ(cam.step(link, 99), 0u);
  EXPECT_EQ(cam.step(link, 100), 1u);
  EXPECT_EQ(cam.step(link, 350), 1u);
  ASSERT_EQ(link.pushed.size(), 3u);
  EXPECT_EQ(link.pushed[0].first, "motion");
  EXPECT_EQ(sim::payload_label(link.pushed[0].second), "person:1");
  EXPECT_EQ(sim::payload_label(link.pushed[1].second), "empty");
  EXPECT_EQ(cam.emitted(), 3u);
}

TEST(SimDevice, AppliesPolledInputs) {
  RecordingLink link;
  auto light = sim::light_device();
  EXPECT_EQ(light.poll(link), 0u);
  link.inbox["state"] = {{1, 10, "1"}, {2, 20, "0"}};
  EXPECT_EQ(light.poll(link), 2u);
  EXPECT_EQ(light.state().at("state"), "0");
  EXPECT_EQ(light.poll(link), 0u);
  link.inbox["state"].push_back({3, 30, "1"});
  EXPECT_EQ(light.poll(link), 1u);
  EXPECT_EQ(light.state().at("state"), "1");
}

namespace {

// Runs one reference program against a hand-built context.
struct StubRig {
  ManualClock clock{0};
  DataStore store;
  sim::FakeInternet net{clock};
  sim::FakeInternetTransport transport{net};
  AuditLog audit;
  Broker broker{store, transport, audit, clock};
  PackageCatalog catalog;
  ModuleHost host{broker, audit, catalog, clock};

  explicit StubRig(const DataflowGraph& g) {
    sim::register_reference_programs(host);
    host.set_graph(g, 1);
  }

  void run(const Trigger& t) {
    auto job = host.prepare(t);
    GatedApi api(broker, clock);
    api.bind(job.ctx);
    job.factory({job.instance, {}})->run(api);
  }
};

}  // namespace

TEST(ReferenceModules, SpeechToLightPipeline) {
  auto g = fleet_graph();
  StubRig rig(g);
  auto ids = rig.broker.publish(route_for_output(g, "speaker", "speech_command"),
                                sim::speech_payload("turn on the light", 1, 200));
  rig.run(Trigger::event("speech_to_intent", "speech_to_intent.speech", ids.at("speech_to_intent.speech")));
  ASSERT_EQ(rig.store.size("light_switch.light_intent"), 1u);
  rig.run(Trigger::event("light_switch", "light_switch.light_intent", 1));
  EXPECT_EQ(rig.store.read_last_n("#light.state", 1).at(0).payload, "1");
}

TEST(ReferenceModules, PersonDetectionFeedsStatistics) {
  auto g = fleet_graph();
  StubRig rig(g);
  auto ids = rig.broker.publish(route_for_output(g, "camera", "motion"), sim::image_payload("person:3", 1, 300));
  rig.run(Trigger::event("person_detection", "person_detection.image", ids.at("person_detection.image")));
  EXPECT_EQ(Json::parse(rig.store.read_last_n("person_detection.count", 1).at(0).payload)["people"], 3);
  ASSERT_EQ(rig.store.size("statistics.data"), 1u);
  rig.run(Trigger::event("statistics", "statistics.data", 1));
  EXPECT_EQ(rig.net.count("statistics.com"), 1u);
  EXPECT_EQ(rig.net.requests().at(0).body_bytes, 300u);

  ids = rig.broker.publish(route_for_output(g, "camera", "motion"), sim::image_payload("empty", 2, 300));
  rig.run(Trigger::event("person_detection", "person_detection.image", ids.at("person_detection.image")));
  EXPECT_EQ(rig.store.size("statistics.data"), 1u);
}

TEST(ReferenceModules, BooleanGatesOnCondition) {
  auto g = occupancy_graph();
  StubRig rig(g);
  auto at_home = route_for_output(g, "occupancy_sensor", "at_home");
  auto motion = route_for_output(g, "camera", "motion");
  auto detect_and_gate = [&] {
    auto ids = rig.broker.publish(motion, sim::image_payload("person:1", 1, 100));
    rig.run(Trigger::event("person_detection", "person_detection.image", ids.at("person_detection.image")));
    rig.run(Trigger::event("boolean", "boolean.input", rig.store.last_id("boolean.input")));
    return rig.store.size("statistics.data");
  };
  rig.broker.publish(at_home, "1");
  EXPECT_EQ(detect_and_gate(), 0u);
  rig.broker.publish(at_home, "0");
  EXPECT_EQ(detect_and_gate(), 1u);
}
