#include "karl/scenario.hpp"

#include <fstream>
#include <sstream>

#include "karl/hub.hpp"
#include "karl/hub_http.hpp"
#include "karl/sim.hpp"

namespace karl {

bool ScenarioReport::ok() const { return failures() == 0; }

std::size_t ScenarioReport::failures() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += !s.ok;
  return n;
}

Json ScenarioReport::to_json() const {
  Json st = Json::array();
  for (const auto& s : steps)
    st.push_back({{"index", s.index}, {"op", s.op}, {"ok", s.ok}, {"detail", s.detail}});
  return {{"name", name}, {"ok", ok()}, {"failures", failures()}, {"steps", st},
          {"simulated_ms", simulated_ms}, {"graph", final_graph}, {"permissions", permissions}};
}

std::string ScenarioReport::text() const {
  std::ostringstream out;
  for (const auto& s : steps)
    out << (s.ok ? "ok   " : "FAIL ") << s.index << ' ' << s.op
        << (s.detail.empty() ? "" : ": " + s.detail) << '\n';
  out << (name.empty() ? "scenario" : name) << ": " << steps.size() - failures() << '/'
      << steps.size() << " steps ok\n";
  return out.str();
}

namespace {

struct Mark {
  std::size_t requests = 0;
  std::size_t audit = 0;
  Millis time = 0;
};

struct Runner {
  Hub& hub;
  ManualClock& clock;
  std::map<std::string, std::string> tokens;
  std::map<std::string, Mark> marks;
  std::optional<ChangeResult> last_change;
  std::string last_registration;
  std::uint64_t payload_seq = 0;

  Bytes payload(const Json& p) {
    ++payload_seq;
    if (p.is_string()) return p.get<std::string>();
    if (p.contains("image"))
      return sim::image_payload(p["image"], payload_seq, p.value("size", std::size_t{156000}));
    if (p.contains("speech"))
      return sim::speech_payload(p["speech"], payload_seq, p.value("size", std::size_t{172000}));
    if (p.contains("bit")) return p["bit"].get<bool>() ? "1" : "0";
    if (p.contains("json")) return p["json"].dump();
    if (p.contains("text")) return p["text"].get<std::string>();
    throw Error(Errc::ValidationFailure, "unknown payload form " + p.dump());
  }

  std::string token_for(const std::string& device) {
    auto it = tokens.find(device);
    if (it == tokens.end())
      throw Error(Errc::UnknownDevice, "scenario never registered '" + device + "'", device);
    return it->second;
  }

  static bool compare(const Json& spec, std::size_t actual, std::string& detail) {
    detail = "observed " + std::to_string(actual);
    if (spec.is_number()) return actual == spec.get<std::size_t>();
    if (!spec.is_object()) throw Error(Errc::InvalidArgument, "count spec must be a number or {eq, ge, le}");
    if (spec.contains("eq") && actual != spec["eq"].get<std::size_t>()) return false;
    if (spec.contains("ge") && actual < spec["ge"].get<std::size_t>()) return false;
    if (spec.contains("le") && actual > spec["le"].get<std::size_t>()) return false;
    return true;
  }

  Mark since(const Json& spec) {
    if (!spec.contains("since")) return {};
    auto it = marks.find(spec["since"]);
    if (it == marks.end()) throw Error(Errc::InvalidArgument, "no mark '" + spec["since"].dump() + "'");
    return it->second;
  }

  void push(const std::string& device, const std::string& port, Bytes data) {
    hub.device_push(device, token_for(device), port, std::move(data));
  }

  std::string run(const Json& step, bool& ok) {
    const auto op = step.at("op").get<std::string>();
    if (op == "register") {
      DataflowGraph frag = step["fragment"].is_string()
                               ? sim::fragment(step["fragment"], hub.catalog())
                               : graph_from_json(step["fragment"], hub.catalog().resolver());
      auto r = hub.register_fragment(frag);
      tokens[r.device_id] = r.token;
      last_registration = r.id;
      return r.id + " " + r.device_id + ", " + std::to_string(r.permissions.size()) + " to review";
    }
    if (op == "link") {
      Registration r;
      if (step.contains("name")) {
        auto name = step["name"].get<std::string>();
        if (name == "speech_light")
          r = hub.propose_link(sim::speech_light_link());
        else if (name == "occupancy")
          r = hub.propose_link(sim::occupancy_link());
        else
          throw Error(Errc::InvalidArgument, "unknown link '" + name + "'");
      } else {
        r = hub.propose_link(step.at("edge"));
      }
      last_registration = r.id;
      return r.id + ", " + std::to_string(r.permissions.size()) + " to review";
    }
    if (op == "decide" || op == "approve") {
      std::string id = step.value("registration", std::string("last"));
      if (id == "last") id = last_registration;
      auto reg = hub.registration(id);
      DecisionRequest d;
      d.reject = step.value("reject", false);
      if (!d.reject) {
        std::optional<bool> fallback;
        if (op == "approve") fallback = true;
        if (step.contains("default")) fallback = step["default"].get<bool>();
        auto apply = [&](const char* key, bool allow) {
          if (!step.contains(key)) return;
          if (step[key] == "all") {
            for (const auto& t : reg.permissions) d.decisions[t] = allow;
            return;
          }
          for (const auto& idx : step[key]) {
            if (idx.is_string()) {
              d.decisions[idx.get<std::string>()] = allow;
            } else {
              auto i = idx.get<std::size_t>();
              if (i < 1 || i > reg.permissions.size())
                throw Error(Errc::InvalidArgument, "permission index " + std::to_string(i) + " out of range");
              d.decisions[reg.permissions[i - 1]] = allow;
            }
          }
        };
        apply("allow", true);
        apply("deny", false);
        if (fallback)
          for (const auto& t : reg.permissions) d.decisions.try_emplace(t, *fallback);
      }
      last_change = hub.decide(id, d);
      return "version " + std::to_string(last_change->version) + ", " +
             std::to_string(last_change->conflicts.size()) + " conflicts, " +
             std::to_string(last_change->sacrificed.size()) + " sacrificed";
    }
    if (op == "policy") {
      last_change = hub.set_policy(step.at("tag"), step.at("expr"));
      return std::to_string(last_change->conflicts.size()) + " conflicts";
    }
    if (op == "revise") {
      UserDecisions d;
      for (const auto& t : step.value("allow", Json::array())) d[t] = true;
      for (const auto& t : step.value("deny", Json::array())) d[t] = false;
      if (step.contains("deny_source") || step.contains("allow_source")) {
        for (const auto& p : extract_permissions(hub.effective()->base())) {
          if (p.source == step.value("deny_source", std::string("\x01"))) d[p.text()] = false;
          if (p.source == step.value("allow_source", std::string("\x01"))) d[p.text()] = true;
        }
      }
      if (d.empty()) throw Error(Errc::InvalidArgument, "revise names no permission");
      last_change = hub.revise(d);
      return std::to_string(d.size()) + " revised, " + std::to_string(last_change->sacrificed.size()) +
             " sacrificed";
    }
    if (op == "push") {
      push(step.at("device"), step.at("port"), payload(step.at("payload")));
      if (step.value("drain", true)) hub.scheduler().drain();
      return {};
    }
    if (op == "emit") {
      const auto count = step.at("count").get<std::size_t>();
      const Duration period{step.value("period_ms", Millis{1000})};
      std::vector<Json> payloads;
      if (step.contains("payloads"))
        payloads = step["payloads"].get<std::vector<Json>>();
      else
        payloads.push_back(step.at("payload"));
      for (std::size_t i = 0; i < count; ++i) {
        push(step.at("device"), step.at("port"), payload(payloads[i % payloads.size()]));
        hub.scheduler().drain();
        clock.advance(period);
        hub.tick();
        hub.scheduler().drain();
      }
      return std::to_string(count) + " events";
    }
    if (op == "advance") {
      clock.advance(Duration{step.at("ms").get<Millis>()});
      return {};
    }
    if (op == "tick") {
      auto n = hub.tick();
      hub.scheduler().drain();
      return std::to_string(n) + " ticks";
    }
    if (op == "spawn") {
      std::optional<std::string> app;
      if (step.contains("app")) app = step["app"].get<std::string>();
      hub.spawn(step.at("instance"), app, step.value("user", std::string("scenario")));
      hub.scheduler().drain();
      return {};
    }
    if (op == "drain") {
      hub.scheduler().drain();
      return {};
    }
    if (op == "mark") {
      Mark m;
      if (auto* net = hub.internet()) m.requests = net->requests().size();
      m.audit = hub.audit_log().size();
      m.time = clock.now_ms();
      marks[step.at("name")] = m;
      return {};
    }
    if (op == "expect") return expect(step, ok);
    throw Error(Errc::ValidationFailure, "unknown scenario op '" + op + "'");
  }

  std::string expect(const Json& step, bool& ok) {
    std::string detail;
    if (step.contains("requests")) {
      const auto& spec = step["requests"];
      auto* net = hub.internet();
      if (!net) throw Error(Errc::InvalidArgument, "scenario hub has no fake internet");
      auto all = net->requests();
      auto from = since(spec).requests;
      auto domain = spec.value("domain", std::string());
      std::size_t n = 0;
      for (std::size_t i = from; i < all.size(); ++i) {
        const auto& d = all[i].domain;
        n += domain.empty() || d == domain ||
             (d.size() > domain.size() && d.ends_with("." + domain));
      }
      ok = compare(spec, n, detail);
      return "requests to " + (domain.empty() ? std::string("any domain") : domain) + ", " + detail;
    }
    if (step.contains("audit")) {
      const auto& spec = step["audit"];
      auto from = since(spec).audit;
      std::size_t n = 0;
      for (const auto& r : hub.audit({})) {
        if (r.seq <= from) continue;
        if (spec.contains("kind") && to_string(r.kind) != spec["kind"].get<std::string>()) continue;
        if (spec.contains("domain") && r.domain != spec["domain"].get<std::string>()) continue;
        if (spec.contains("instance") && r.instance != spec["instance"].get<std::string>()) continue;
        if (spec.contains("detail_prefix") && !r.detail.starts_with(spec["detail_prefix"].get<std::string>()))
          continue;
        ++n;
      }
      ok = compare(spec, n, detail);
      return "audit records, " + detail;
    }
    if (step.contains("permissions")) {
      std::vector<std::string> texts;
      for (const auto& p : hub.permissions_json()) texts.push_back(p["text"]);
      auto want = step["permissions"].get<std::vector<std::string>>();
      ok = texts == want;
      return std::to_string(texts.size()) + " permissions" + (ok ? "" : ", mismatch");
    }
    if (step.contains("permission_count")) {
      auto n = hub.permissions_json().size();
      ok = compare(step["permission_count"], n, detail);
      return "permissions, " + detail;
    }
    if (step.contains("verdict")) {
      const auto& spec = step["verdict"];
      std::size_t matched = 0;
      ok = true;
      for (const auto& p : hub.permissions_json()) {
        const std::string text = p["text"];
        bool hit = spec.contains("text") ? text == spec["text"].get<std::string>()
                                         : text.starts_with(spec.value("source", std::string()) + " ");
        if (!hit) continue;
        ++matched;
        ok = ok && p["verdict"] == spec["is"];
      }
      ok = ok && matched > 0;
      return std::to_string(matched) + " matched, expected " + spec["is"].get<std::string>();
    }
    if (step.contains("conflicts") || step.contains("sacrificed")) {
      if (!last_change) throw Error(Errc::InvalidArgument, "no change to inspect");
      std::size_t n = step.contains("conflicts") ? last_change->conflicts.size()
                                                 : last_change->sacrificed.size();
      ok = compare(step.contains("conflicts") ? step["conflicts"] : step["sacrificed"], n, detail);
      return std::string(step.contains("conflicts") ? "conflicts, " : "sacrificed, ") + detail;
    }
    if (step.contains("last")) {
      const auto& spec = step["last"];
      const std::string tag = spec.at("tag");
      auto entries = hub.store().has_tag(tag) ? hub.store().read_last_n(tag, 1) : std::vector<Entry>{};
      std::string got = entries.empty() ? std::string("<none>") : entries.back().payload;
      ok = !entries.empty() && got == spec.at("payload").get<std::string>();
      return tag + " = " + (got.size() > 64 ? got.substr(0, 64) + "..." : got);
    }
    if (step.contains("count")) {
      const auto& spec = step["count"];
      auto n = hub.store().size(spec.at("tag").get<std::string>());
      ok = compare(spec, n, detail);
      return spec["tag"].get<std::string>() + " entries, " + detail;
    }
    throw Error(Errc::ValidationFailure, "expect step names nothing to check");
  }
};

}  // namespace

ScenarioReport run_scenario(const Json& scenario, const std::optional<std::filesystem::path>& data_dir) {
  if (!scenario.is_object() || !scenario.contains("steps") || !scenario["steps"].is_array())
    throw Error(Errc::ValidationFailure, "scenario needs a \"steps\" array");
  HubConfig config =
      scenario.contains("hub") ? HubConfig::from_json(scenario["hub"]) : HubConfig{};
  config.internet = "fake";
  config.seed = scenario.value("seed", std::uint64_t{1});
  if (data_dir) config.data_dir = data_dir;
  const Millis start = scenario.value("start_ms", Millis{1'000'000});
  ManualClock clock(start);
  Hub hub(config, clock);
  Runner runner{hub, clock, {}, {}, {}, {}, 0};

  ScenarioReport report;
  report.name = scenario.value("name", std::string());
  std::size_t i = 0;
  for (const auto& step : scenario["steps"]) {
    StepResult r;
    r.index = ++i;
    r.op = step.value("op", std::string("?"));
    const auto expected_error = step.value("expect_error", std::string());
    try {
      r.detail = runner.run(step, r.ok);
      if (!expected_error.empty()) {
        r.ok = false;
        r.detail = "expected " + expected_error + ", step succeeded";
      }
    } catch (const Error& e) {
      if (!expected_error.empty() && expected_error == to_string(e.code())) {
        r.detail = std::string(to_string(e.code())) + " as expected";
      } else {
        r.ok = false;
        r.detail = std::string(to_string(e.code())) + ": " + e.what();
      }
    } catch (const Json::exception& e) {
      r.ok = false;
      r.detail = std::string("malformed step: ") + e.what();
    }
    report.steps.push_back(std::move(r));
  }
  hub.scheduler().drain();
  report.final_graph = hub.graph_json();
  report.permissions = hub.permissions_json();
  report.simulated_ms = clock.now_ms() - start;
  return report;
}

ScenarioReport run_scenario_file(const std::filesystem::path& file,
                                 const std::optional<std::filesystem::path>& data_dir) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::ValidationFailure, "cannot read scenario " + file.string());
  auto j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ValidationFailure, file.string() + " is not valid JSON");
  return run_scenario(j, data_dir);
}

}  // namespace karl
