#include "karl/permission.hpp"

#include <algorithm>
#include <map>

namespace karl {

namespace {

constexpr std::string_view kArrow = " \xE2\x86\x92 ";  // " → "

struct Walker {
  const DataflowGraph& g;
  std::map<std::string, PipelinePermission> found;

  // Outgoing edges per source node, computed once.
  std::map<NodeId, std::vector<const Edge*>> out;

  explicit Walker(const DataflowGraph& graph) : g(graph) {
    for (const auto& e : g.edges) out[e.src].push_back(&e);
  }

  // Side inputs of chain[i] given the edge the route entered it by.
  std::vector<std::string> sides_for(const std::string& module,
                                     const std::string& entry_port) const {
    std::vector<std::string> tags;
    for (const auto& e : g.edges) {
      if (e.dst.owner != module || e.dst.kind != PortKind::module_input)
        continue;
      if (e.dst.port == entry_port) continue;
      tags.push_back(e.src.tag());
    }
    std::sort(tags.begin(), tags.end());
    tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
    return tags;
  }

  void emit(const std::string& source, Direction dir,
            const std::vector<std::string>& chain,
            const std::vector<const Edge*>& route, const std::string& sink,
            bool sink_is_domain) {
    PipelinePermission p;
    p.source = source;
    p.chain = chain;
    p.sink = sink;
    p.direction = dir;
    p.sink_is_domain = sink_is_domain;

    // Pair each chain module with the edge that entered it. Ingestion
    // routes start inside chain[0], so its entry is the empty port.
    p.side_inputs.resize(chain.size());
    std::vector<Edge> concrete;
    for (const auto* e : route) concrete.push_back(*e);
    std::size_t offset = dir == Direction::ingestion ? 1 : 0;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      std::string entry;
      if (i >= offset) entry = route[i - offset]->dst.port;
      p.side_inputs[i] = sides_for(chain[i], entry);
    }

    auto text = p.text();
    auto [it, inserted] = found.try_emplace(text, p);
    if (inserted) {
      it->second.routes.push_back(std::move(concrete));
      return;
    }
    auto& existing = it->second;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      auto& s = existing.side_inputs[i];
      s.insert(s.end(), p.side_inputs[i].begin(), p.side_inputs[i].end());
      std::sort(s.begin(), s.end());
      s.erase(std::unique(s.begin(), s.end()), s.end());
    }
    if (std::find(existing.routes.begin(), existing.routes.end(), concrete) ==
        existing.routes.end())
      existing.routes.push_back(std::move(concrete));
  }

  // Depth-first over module boxes; `route` ends with the edge just taken.
  void walk(const std::string& source, Direction dir,
            std::vector<std::string>& chain, std::vector<const Edge*>& route) {
    const Edge& last = *route.back();
    if (last.dst.kind == PortKind::device_input) {
      emit(source, dir, chain, route, last.dst.tag(), false);
      return;
    }
    const std::string& m = last.dst.owner;
    if (std::find(chain.begin(), chain.end(), m) != chain.end()) return;
    const auto* mod = g.find_module(m);
    if (mod == nullptr) return;
    chain.push_back(m);
    if (dir == Direction::exfiltration)
      for (const auto& d : mod->network_grant)
        emit(source, dir, chain, route, d, true);
    expand(source, dir, chain, route, *mod);
    chain.pop_back();
  }

  void expand(const std::string& source, Direction dir,
              std::vector<std::string>& chain, std::vector<const Edge*>& route,
              const ModuleInstance& mod) {
    for (const auto& port : mod.manifest.outputs) {
      auto it = out.find(module_output(mod.id, port.name));
      if (it == out.end()) continue;
      for (const auto* e : it->second) {
        route.push_back(e);
        walk(source, dir, chain, route);
        route.pop_back();
      }
    }
  }

  void run() {
    for (const auto& [id, dev] : g.devices) {
      for (const auto& port : dev.outputs) {
        auto src = device_output(id, port.name);
        auto it = out.find(src);
        if (it == out.end()) continue;
        for (const auto* e : it->second) {
          std::vector<std::string> chain;
          std::vector<const Edge*> route{e};
          walk(src.tag(), Direction::exfiltration, chain, route);
        }
      }
    }
    for (const auto& [id, mod] : g.modules) {
      for (const auto& domain : mod.network_grant) {
        std::vector<std::string> chain{id};
        std::vector<const Edge*> route;
        // Only device-input sinks count for ingestion.
        for (const auto& port : mod.manifest.outputs) {
          auto it = out.find(module_output(id, port.name));
          if (it == out.end()) continue;
          for (const auto* e : it->second) {
            route.push_back(e);
            walk_ingestion(domain, chain, route);
            route.pop_back();
          }
        }
      }
    }
  }

  void walk_ingestion(const std::string& domain, std::vector<std::string>& chain,
                      std::vector<const Edge*>& route) {
    const Edge& last = *route.back();
    if (last.dst.kind == PortKind::device_input) {
      emit(domain, Direction::ingestion, chain, route, last.dst.tag(), false);
      return;
    }
    const std::string& m = last.dst.owner;
    if (std::find(chain.begin(), chain.end(), m) != chain.end()) return;
    const auto* mod = g.find_module(m);
    if (mod == nullptr) return;
    chain.push_back(m);
    for (const auto& port : mod->manifest.outputs) {
      auto it = out.find(module_output(m, port.name));
      if (it == out.end()) continue;
      for (const auto* e : it->second) {
        route.push_back(e);
        walk_ingestion(domain, chain, route);
        route.pop_back();
      }
    }
    chain.pop_back();
  }
};

}  // namespace

std::string render_permission(const PipelinePermission& p) {
  std::string out = p.source;
  for (std::size_t i = 0; i < p.chain.size(); ++i) {
    if (i < p.side_inputs.size() && !p.side_inputs[i].empty()) {
      out += " (+ ";
      for (std::size_t k = 0; k < p.side_inputs[i].size(); ++k) {
        if (k) out += ", ";
        out += p.side_inputs[i][k];
      }
      out += ')';
    }
    out += kArrow;
    out += p.chain[i];
  }
  out += kArrow;
  out += p.sink;
  return out;
}

std::string PipelinePermission::text() const { return render_permission(*this); }

std::vector<PipelinePermission> extract_permissions(const DataflowGraph& graph) {
  Walker w(graph);
  w.run();
  std::vector<PipelinePermission> out;
  out.reserve(w.found.size());
  for (auto& [_, p] : w.found) out.push_back(std::move(p));
  return out;
}

}  // namespace karl
