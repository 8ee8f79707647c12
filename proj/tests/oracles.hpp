#pragma once

#include <algorithm>
#include <deque>
#include <set>
#include <string>
#include <vector>

#include "karl/graph.hpp"

namespace karl::test {

// Breadth-first enumeration of every simple module path, written without
// reference to the extractor.
inline std::vector<std::string> permission_oracle(const DataflowGraph& g) {
  auto sides = [&](const std::string& m, const std::string& entry) {
    std::set<std::string> s;
    for (const auto& e : g.edges)
      if (e.dst.owner == m && e.dst.kind == PortKind::module_input && e.dst.port != entry)
        s.insert(e.src.tag());
    return std::vector<std::string>(s.begin(), s.end());
  };
  auto render = [&](const std::string& source, const std::vector<std::string>& chain,
                    const std::vector<std::string>& entries, const std::string& sink) {
    std::string out = source;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      auto s = sides(chain[i], entries[i]);
      if (!s.empty()) {
        out += " (+ ";
        for (std::size_t k = 0; k < s.size(); ++k) out += (k ? ", " : "") + s[k];
        out += ")";
      }
      out += std::string(" \xE2\x86\x92 ") + chain[i];
    }
    return out + std::string(" \xE2\x86\x92 ") + sink;
  };

  struct Partial {
    std::string source;
    std::vector<std::string> chain, entries;
    NodeId at;
    bool ingestion;
  };
  std::deque<Partial> q;
  std::set<std::string> out;
  for (const auto& e : g.edges)
    if (e.src.kind == PortKind::device_output) q.push_back({e.src.tag(), {}, {}, e.dst, false});
  for (const auto& [id, m] : g.modules)
    for (const auto& d : m.network_grant)
      for (const auto& e : g.edges)
        if (e.src.owner == id && e.src.kind == PortKind::module_output)
          q.push_back({d, {id}, {""}, e.dst, true});
  while (!q.empty()) {
    auto p = q.front();
    q.pop_front();
    if (p.at.kind == PortKind::device_input) {
      out.insert(render(p.source, p.chain, p.entries, p.at.tag()));
      continue;
    }
    const auto m = p.at.owner;
    if (!g.modules.contains(m)) continue;
    if (std::find(p.chain.begin(), p.chain.end(), m) != p.chain.end()) continue;
    p.chain.push_back(m);
    p.entries.push_back(p.at.port);
    if (!p.ingestion)
      for (const auto& d : g.modules.at(m).network_grant) out.insert(render(p.source, p.chain, p.entries, d));
    for (const auto& e : g.edges)
      if (e.src.owner == m && e.src.kind == PortKind::module_output)
        q.push_back({p.source, p.chain, p.entries, e.dst, p.ingestion});
  }
  return {out.begin(), out.end()};
}

}  // namespace karl::test
