#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "karl/graph.hpp"
#include "karl/package.hpp"
#include "karl/sim.hpp"

namespace karl::test {

inline const std::string kArrow = " \xE2\x86\x92 ";

inline std::vector<Port> ports(std::initializer_list<std::string> names) {
  std::vector<Port> out;
  for (const auto& n : names) out.push_back({n, "", ""});
  return out;
}

inline DeviceDescriptor device(std::string id, std::vector<Port> outputs, std::vector<Port> inputs = {}) {
  DeviceDescriptor d;
  d.id = std::move(id);
  d.outputs = std::move(outputs);
  d.inputs = std::move(inputs);
  return d;
}

inline ModuleInstance module(std::string id, std::vector<Port> inputs, std::vector<Port> outputs,
                             std::vector<std::string> domains = {}, Schedule schedule = {}) {
  ModuleInstance m;
  m.id = id;
  m.manifest.name = id;
  m.manifest.entrypoint = "builtin:" + id;
  m.manifest.inputs = std::move(inputs);
  m.manifest.outputs = std::move(outputs);
  m.manifest.domains = domains;
  m.network_grant.insert(domains.begin(), domains.end());
  m.schedule = schedule;
  return m;
}

inline void add(DataflowGraph& g, DeviceDescriptor d) { g.devices[d.id] = std::move(d); }
inline void add(DataflowGraph& g, ModuleInstance m) { g.modules[m.id] = std::move(m); }
inline void wire(DataflowGraph& g, NodeId src, NodeId dst, bool stateful = false) {
  g.edges.insert({std::move(src), std::move(dst),
                  stateful ? Statefulness::stateful : Statefulness::stateless});
}

/// Catalog with every reference package.
inline PackageCatalog& reference_catalog() {
  static PackageCatalog* catalog = [] {
    auto* c = new PackageCatalog;
    sim::install_reference_packages(*c);
    return c;
  }();
  return *catalog;
}

/// The three-device fleet with the speech-to-light link applied.
inline DataflowGraph fleet_graph() {
  auto& c = reference_catalog();
  DataflowGraph g;
  for (const auto* name : {"light", "speaker", "camera"}) g = register_fragment(g, sim::fragment(name, c));
  auto l = sim::speech_light_link();
  return add_edge(g, l.src, l.dst, l.statefulness);
}

/// Camera with the occupancy join.
inline DataflowGraph occupancy_graph() {
  auto& c = reference_catalog();
  DataflowGraph g;
  g = register_fragment(g, sim::fragment("camera_anonymized", c));
  g = register_fragment(g, sim::fragment("occupancy_sensor", c));
  auto l = sim::occupancy_link();
  return add_edge(g, l.src, l.dst, l.statefulness);
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() / ("karl-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Random small graph for property tests. Stateless module edges only go
/// from lower to higher module index; stateful ones may go backwards.
inline DataflowGraph random_graph(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  DataflowGraph g;
  const int nd = pick(1, 3), nm = pick(1, 5);
  std::vector<NodeId> sources, sinks;
  std::vector<std::pair<NodeId, int>> module_sinks;  // input, owner index
  std::vector<std::pair<NodeId, int>> module_sources;
  for (int i = 0; i < nd; ++i) {
    std::string id = "d" + std::to_string(i);
    std::vector<Port> outs, ins;
    for (int k = 0, n = pick(1, 2); k < n; ++k) outs.push_back({"o" + std::to_string(k), "", ""});
    for (int k = 0, n = pick(0, 2); k < n; ++k) ins.push_back({"i" + std::to_string(k), "", ""});
    for (const auto& p : outs) sources.push_back(device_output(id, p.name));
    for (const auto& p : ins) sinks.push_back(device_input(id, p.name));
    add(g, device(id, outs, ins));
  }
  for (int i = 0; i < nm; ++i) {
    std::string id = "m" + std::to_string(i);
    std::vector<Port> ins, outs;
    for (int k = 0, n = pick(1, 2); k < n; ++k) ins.push_back({"in" + std::to_string(k), "", ""});
    for (int k = 0, n = pick(1, 2); k < n; ++k) outs.push_back({"out" + std::to_string(k), "", ""});
    std::vector<std::string> domains;
    if (pick(0, 2) == 0) domains.push_back("a.example");
    if (pick(0, 3) == 0) domains.push_back("b.example");
    for (const auto& p : ins) module_sinks.push_back({module_input(id, p.name), i});
    for (const auto& p : outs) module_sources.push_back({module_output(id, p.name), i});
    add(g, module(id, ins, outs, domains));
  }
  const int ne = pick(nm, nm * 3);
  for (int e = 0; e < ne; ++e) {
    bool from_device = pick(0, 2) == 0 || module_sources.empty();
    NodeId src;
    int src_idx = -1;
    if (from_device) {
      src = sources[pick(0, static_cast<int>(sources.size()) - 1)];
    } else {
      auto& s = module_sources[pick(0, static_cast<int>(module_sources.size()) - 1)];
      src = s.first;
      src_idx = s.second;
    }
    bool to_device = !sinks.empty() && pick(0, 3) == 0;
    if (to_device) {
      wire(g, src, sinks[pick(0, static_cast<int>(sinks.size()) - 1)], pick(0, 1) == 1);
      continue;
    }
    auto& d = module_sinks[pick(0, static_cast<int>(module_sinks.size()) - 1)];
    if (d.second == src_idx) continue;
    bool stateful = pick(0, 3) == 0;
    if (!stateful && src_idx > d.second) continue;
    wire(g, src, d.first, stateful);
  }
  return g;
}

}  // namespace karl::test
