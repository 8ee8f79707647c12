#include "karl/graph_json.hpp"

namespace karl {

namespace {

Json ports_to_json(const std::vector<Port>& ports) {
  Json arr = Json::array();
  for (const auto& p : ports) arr.push_back(to_json(p));
  return arr;
}

std::vector<Port> ports_from_json(const Json& j) {
  std::vector<Port> out;
  if (j.is_null()) return out;
  for (const auto& p : j) {
    if (p.is_string()) {
      out.push_back({p.get<std::string>(), "", ""});
    } else {
      out.push_back({p.at("name").get<std::string>(), p.value("type", ""),
                     p.value("description", "")});
    }
  }
  return out;
}

Json schedule_to_json(const Schedule& s) {
  switch (s.kind) {
    case Schedule::Kind::on_push: return {{"kind", "on_push"}};
    case Schedule::Kind::manual: return {{"kind", "manual"}};
    case Schedule::Kind::interval:
      return {{"kind", "interval"}, {"period_ms", s.period.count()}};
  }
  return {};
}

Schedule schedule_from_json(const Json& j) {
  if (j.is_null()) return Schedule::on_push();
  std::string kind = j.is_string() ? j.get<std::string>() : j.at("kind").get<std::string>();
  if (kind == "on_push") return Schedule::on_push();
  if (kind == "manual") return Schedule::manual();
  if (kind == "interval")
    return Schedule::interval(Duration{j.at("period_ms").get<std::int64_t>()});
  throw Error(Errc::ValidationFailure, "unknown schedule kind '" + kind + "'",
              "InvalidSchedule");
}

Json app_to_json(const AppSpec& a) {
  return {{"bundle", a.bundle},
          {"read", a.read},
          {"push", a.push},
          {"spawn", a.spawn}};
}

AppSpec app_from_json(const Json& j) {
  AppSpec a;
  a.bundle = j.value("bundle", "");
  a.read = j.value("read", std::vector<std::string>{});
  a.push = j.value("push", std::vector<std::string>{});
  a.spawn = j.value("spawn", std::vector<std::string>{});
  return a;
}

}  // namespace

Json to_json(const Port& p) {
  Json j{{"name", p.name}, {"type", p.data_type}};
  if (!p.description.empty()) j["description"] = p.description;
  return j;
}

Json to_json(const ModuleManifest& m) {
  return {{"name", m.name},
          {"entrypoint", m.entrypoint},
          {"inputs", ports_to_json(m.inputs)},
          {"outputs", ports_to_json(m.outputs)},
          {"domains", m.domains},
          {"package", {{"hash", m.package.hash}, {"size", m.package.size_bytes}}}};
}

Json to_json(const ModuleInstance& m) {
  Json grant = Json::array();
  for (const auto& d : m.network_grant) grant.push_back(d);
  Json j{{"manifest", to_json(m.manifest)},
         {"schedule", schedule_to_json(m.schedule)},
         {"network_grant", grant}};
  if (!m.config.empty()) j["config"] = m.config;
  return j;
}

Json to_json(const Edge& e) {
  return {{"src", e.src.tag()}, {"dst", e.dst.tag()}, {"stateful", !e.stateless()}};
}

Json to_json(const DataflowGraph& g) {
  Json devices = Json::object();
  for (const auto& [id, d] : g.devices) {
    Json dj{{"inputs", ports_to_json(d.inputs)},
            {"outputs", ports_to_json(d.outputs)}};
    if (d.app) dj["app"] = app_to_json(*d.app);
    devices[id] = std::move(dj);
  }
  Json modules = Json::object();
  for (const auto& [id, m] : g.modules) modules[id] = to_json(m);
  Json edges = Json::array();
  for (const auto& e : g.edges) edges.push_back(to_json(e));
  return {{"devices", devices}, {"modules", modules}, {"edges", edges}};
}

ModuleManifest manifest_from_json(const Json& j) {
  ModuleManifest m;
  m.name = j.at("name").get<std::string>();
  m.entrypoint = j.value("entrypoint", "");
  m.inputs = ports_from_json(j.value("inputs", Json::array()));
  m.outputs = ports_from_json(j.value("outputs", Json::array()));
  m.domains = j.value("domains", std::vector<std::string>{});
  if (j.contains("package")) {
    m.package.hash = j["package"].value("hash", "");
    m.package.size_bytes = j["package"].value("size", std::uint64_t{0});
  }
  return m;
}

DataflowGraph graph_from_json(const Json& j, const ManifestResolver& resolver) {
  DataflowGraph g;
  try {
    const Json devices = j.value("devices", Json::object());
    const Json modules = j.value("modules", Json::object());
    const Json edges = j.value("edges", Json::array());
    for (const auto& [id, dj] : devices.items()) {
      DeviceDescriptor d;
      d.id = id;
      d.inputs = ports_from_json(dj.value("inputs", Json::array()));
      d.outputs = ports_from_json(dj.value("outputs", Json::array()));
      if (dj.contains("app")) d.app = app_from_json(dj["app"]);
      g.devices.emplace(id, std::move(d));
    }
    for (const auto& [id, mj] : modules.items()) {
      ModuleInstance m;
      m.id = id;
      const Json& man = mj.contains("manifest") ? mj["manifest"] : Json(id);
      if (man.is_string()) {
        std::optional<ModuleManifest> found;
        if (resolver) found = resolver(man.get<std::string>());
        if (!found)
          throw Error(Errc::ValidationFailure,
                      "unknown module manifest '" + man.get<std::string>() + "'",
                      "UnknownManifest");
        m.manifest = *found;
      } else {
        m.manifest = manifest_from_json(man);
      }
      m.schedule = schedule_from_json(mj.value("schedule", Json()));
      if (mj.contains("network_grant")) {
        for (const auto& d : mj["network_grant"]) m.network_grant.insert(d.get<std::string>());
      } else {
        m.network_grant.insert(m.manifest.domains.begin(), m.manifest.domains.end());
      }
      if (mj.contains("config")) {
        for (const auto& [k, v] : mj["config"].items())
          m.config[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
      g.modules.emplace(id, std::move(m));
    }
    for (const auto& ej : edges) {
      Edge e;
      e.src = parse_node_ref(g, ej.at("src").get<std::string>(), true);
      e.dst = parse_node_ref(g, ej.at("dst").get<std::string>(), false);
      e.statefulness = ej.value("stateful", false) ? Statefulness::stateful
                                                   : Statefulness::stateless;
      g.edges.insert(std::move(e));
    }
  } catch (const Json::exception& ex) {
    throw Error(Errc::ValidationFailure,
                std::string("malformed graph document: ") + ex.what(),
                "Malformed");
  } catch (const Error& ex) {
    if (ex.code() == Errc::ValidationFailure) throw;
    throw Error(Errc::ValidationFailure, ex.what(), std::string(to_string(ex.code())));
  }
  return g;
}

}  // namespace karl
