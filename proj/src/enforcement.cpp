#include "karl/enforcement.hpp"

#include <algorithm>
#include <set>
#include <variant>

namespace karl {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::allowed: return "allowed";
    case Verdict::denied_by_user: return "denied_by_user";
    case Verdict::denied_by_exit_policy: return "denied_by_exit_policy";
  }
  return "unknown";
}

Json Modification::to_json() const {
  switch (kind) {
    case Kind::RevokeNetwork:
      return {{"kind", "RevokeNetwork"}, {"module", module}, {"domain", domain}};
    case Kind::RemoveEdge:
      return {{"kind", "RemoveEdge"}, {"edge", karl::to_json(edge)}};
    case Kind::DuplicateSubpath: {
      Json edges = Json::array();
      for (const auto& e : clone_edges) edges.push_back(karl::to_json(e));
      return {{"kind", "DuplicateSubpath"},
              {"originals", originals},
              {"clones", clones},
              {"edges", edges}};
    }
  }
  return {};
}

DataflowGraph materialize(const DataflowGraph& base,
                          const std::vector<Modification>& overlay) {
  DataflowGraph g = base;
  using K = Modification::Kind;
  for (const auto& m : overlay) {
    if (m.kind != K::DuplicateSubpath) continue;
    for (const auto& c : m.clone_modules) g.modules[c.id] = c;
    g.edges.insert(m.clone_edges.begin(), m.clone_edges.end());
  }
  for (const auto& m : overlay) {
    if (m.kind == K::RevokeNetwork) {
      auto it = g.modules.find(m.module);
      if (it != g.modules.end()) it->second.network_grant.erase(m.domain);
    } else if (m.kind == K::RemoveEdge) {
      g.edges.erase(m.edge);
    }
  }
  return g;
}

std::string EffectiveGraph::original_of(const std::string& id) const {
  auto it = clone_of_.find(id);
  return it == clone_of_.end() ? id : it->second;
}

namespace {

std::string canonical_tag(const std::map<std::string, std::string>& clone_of,
                          const std::string& tag) {
  std::size_t start = !tag.empty() && tag.front() == '#' ? 1 : 0;
  auto dot = tag.find('.', start);
  if (dot == std::string::npos) return tag;
  auto it = clone_of.find(tag.substr(start, dot - start));
  if (it == clone_of.end()) return tag;
  return tag.substr(0, start) + it->second + tag.substr(dot);
}

std::vector<std::string> canonical_texts(
    const DataflowGraph& g, const std::map<std::string, std::string>& clone_of) {
  std::set<std::string> out;
  for (auto p : extract_permissions(g)) {
    for (auto& m : p.chain) {
      auto it = clone_of.find(m);
      if (it != clone_of.end()) m = it->second;
    }
    for (auto& sides : p.side_inputs) {
      for (auto& s : sides) s = canonical_tag(clone_of, s);
      std::sort(sides.begin(), sides.end());
      sides.erase(std::unique(sides.begin(), sides.end()), sides.end());
    }
    out.insert(p.text());
  }
  return {out.begin(), out.end()};
}

std::size_t common_suffix(const std::vector<std::string>& a,
                          const std::vector<std::string>& b) {
  std::size_t n = 0;
  while (n < a.size() && n < b.size() &&
         a[a.size() - 1 - n] == b[b.size() - 1 - n])
    ++n;
  return n;
}

struct Duplicator {
  const DataflowGraph& base;
  const std::vector<const PipelinePermission*>& denied;
  std::map<std::string, std::string>& clone_of;
  int& counter;

  std::string fresh_id(const std::string& original, const DataflowGraph& g) {
    for (;;) {
      std::string id = original + "~" + std::to_string(++counter);
      if (!g.has_owner(id) && !clone_of.contains(id)) return id;
    }
  }

  // Builds the overlay entry cloning the shared suffix of `allowed`, or
  // returns a reason string when the clone cannot be fully wired.
  std::variant<Modification, std::string> plan(
      const PipelinePermission& allowed, const DataflowGraph& current) {
    const auto& chain = allowed.chain;
    const std::size_t n = chain.size();
    std::size_t keep = n;  // index of the first module to clone
    for (const auto* d : denied) {
      if (d->sink != allowed.sink) continue;
      std::size_t s = common_suffix(chain, d->chain);
      if (s > 0) keep = std::min(keep, n - s);
    }
    if (keep == n) return std::string("no denied permission shares its path");

    // Entry edges of denied routes must never reach a clone.
    std::set<Edge> denied_edges;
    for (const auto* d : denied)
      for (const auto& r : d->routes) denied_edges.insert(r.begin(), r.end());

    const auto& route = allowed.routes.front();
    const std::size_t offset = allowed.direction == Direction::ingestion ? 1 : 0;
    auto entry_edge = [&](std::size_t k) -> const Edge* {
      if (k < offset) return nullptr;
      return &route[k - offset];
    };

    Modification mod;
    mod.kind = Modification::Kind::DuplicateSubpath;
    std::map<std::string, std::string> ids;
    for (std::size_t k = keep; k < n; ++k) {
      ids[chain[k]] = fresh_id(chain[k], current);
      mod.originals.push_back(chain[k]);
      mod.clones.push_back(ids[chain[k]]);
    }

    for (std::size_t k = keep; k < n; ++k) {
      const ModuleInstance& orig = base.modules.at(chain[k]);
      ModuleInstance clone = orig;
      clone.id = ids[chain[k]];
      clone.network_grant.clear();
      const Edge* entry = entry_edge(k);

      if (entry != nullptr) {
        Edge e = *entry;
        if (k > keep) e.src.owner = ids[chain[k - 1]];
        e.dst.owner = clone.id;
        mod.clone_edges.push_back(e);
      }
      for (const auto& port : orig.manifest.inputs) {
        if (entry != nullptr && port.name == entry->dst.port) continue;
        bool wired_before = false;
        bool wired_after = false;
        for (const auto& e : base.edges) {
          if (e.dst != module_input(orig.id, port.name)) continue;
          wired_before = true;
          if (denied_edges.contains(e)) continue;
          Edge c = e;
          c.dst.owner = clone.id;
          mod.clone_edges.push_back(c);
          wired_after = true;
        }
        if (wired_before && !wired_after)
          return "clone of " + orig.id + " would lose input '" + port.name +
                 "' carrying denied data";
      }
      mod.clone_modules.push_back(std::move(clone));
    }

    auto& terminal = mod.clone_modules.back();
    if (allowed.sink_is_domain) {
      terminal.network_grant.insert(allowed.sink);
    } else {
      Edge last = route.back();
      last.src.owner = terminal.id;
      mod.clone_edges.push_back(last);
    }
    return mod;
  }
};

}  // namespace

std::vector<std::string> EffectiveGraph::effective_permission_texts() const {
  return canonical_texts(effective_, clone_of_);
}

Json EffectiveGraph::to_json() const {
  Json overlay = Json::array();
  for (const auto& m : overlay_) overlay.push_back(m.to_json());
  Json decisions = Json::array();
  for (const auto& d : decisions_) {
    Json j{{"permission", d.permission.text()},
           {"verdict", to_string(d.verdict)}};
    if (!d.policy_tag.empty()) j["policy_tag"] = d.policy_tag;
    decisions.push_back(std::move(j));
  }
  Json conflicts = Json::array();
  for (const auto& c : conflicts_)
    conflicts.push_back({{"permission", c.permission},
                         {"policy_tag", c.policy_tag},
                         {"policy", c.policy_expr}});
  Json sacrificed = Json::array();
  for (const auto& s : sacrificed_)
    sacrificed.push_back({{"permission", s.permission}, {"reason", s.reason}});
  return {{"base", karl::to_json(base_)},
          {"overlay", overlay},
          {"graph", karl::to_json(effective_)},
          {"decisions", decisions},
          {"conflicts", conflicts},
          {"sacrificed", sacrificed}};
}

EffectiveGraph enforce(const DataflowGraph& graph, const UserDecisions& decisions,
                       const std::vector<ExitPolicy>& exit_policies) {
  EffectiveGraph eg;
  eg.base_ = graph;
  auto perms = extract_permissions(graph);
  eg.conflicts_ = find_conflicts(perms, exit_policies, graph);

  std::map<std::string, std::string> conflicting;  // text -> first policy tag
  for (const auto& c : eg.conflicts_) conflicting.try_emplace(c.permission, c.policy_tag);

  std::vector<const PipelinePermission*> denied;
  std::vector<const PipelinePermission*> allowed;
  for (const auto& p : perms) {
    auto text = p.text();
    PermissionDecision d{p, Verdict::denied_by_user, {}};
    auto it = decisions.find(text);
    if (it != decisions.end() && it->second) {
      auto c = conflicting.find(text);
      if (c != conflicting.end()) {
        d.verdict = Verdict::denied_by_exit_policy;
        d.policy_tag = c->second;
      } else {
        d.verdict = Verdict::allowed;
      }
    }
    (d.verdict == Verdict::allowed ? allowed : denied).push_back(&p);
    eg.decisions_.push_back(std::move(d));
  }

  std::set<std::pair<std::string, std::string>> revoke;
  std::set<Edge> remove;
  for (const auto* p : denied) {
    for (const auto& route : p->routes) {
      if (p->sink_is_domain)
        revoke.emplace(p->chain.back(), p->sink);
      else
        remove.insert(route.back());
    }
  }
  for (const auto& [module, domain] : revoke) {
    Modification m;
    m.kind = Modification::Kind::RevokeNetwork;
    m.module = module;
    m.domain = domain;
    eg.overlay_.push_back(std::move(m));
  }
  for (const auto& e : remove) {
    Modification m;
    m.kind = Modification::Kind::RemoveEdge;
    m.edge = e;
    eg.overlay_.push_back(std::move(m));
  }

  std::set<std::string> denied_texts;
  for (const auto* p : denied) denied_texts.insert(p->text());

  int counter = 0;
  Duplicator dup{graph, denied, eg.clone_of_, counter};
  DataflowGraph current = materialize(graph, eg.overlay_);
  for (const auto* a : allowed) {
    auto texts = canonical_texts(current, eg.clone_of_);
    const auto text = a->text();
    if (std::binary_search(texts.begin(), texts.end(), text)) continue;

    auto planned = dup.plan(*a, current);
    if (auto* reason = std::get_if<std::string>(&planned)) {
      eg.sacrificed_.push_back({text, "IrreconcilableOverlap: " + *reason});
      continue;
    }
    auto& mod = std::get<Modification>(planned);
    auto saved_clone_of = eg.clone_of_;
    for (std::size_t i = 0; i < mod.clones.size(); ++i)
      eg.clone_of_[mod.clones[i]] = mod.originals[i];
    eg.overlay_.push_back(mod);
    DataflowGraph trial = materialize(graph, eg.overlay_);
    auto after = canonical_texts(trial, eg.clone_of_);
    bool leaks = std::any_of(after.begin(), after.end(), [&](const std::string& t) {
      return denied_texts.contains(t);
    });
    bool kept = std::binary_search(after.begin(), after.end(), text);
    if (leaks || !kept) {
      eg.overlay_.pop_back();
      eg.clone_of_ = std::move(saved_clone_of);
      eg.sacrificed_.push_back(
          {text, leaks ? "IrreconcilableOverlap: duplicate would expose a denied flow"
                       : "IrreconcilableOverlap: duplicate does not restore the flow"});
      continue;
    }
    current = std::move(trial);
  }
  eg.effective_ = std::move(current);
  return eg;
}

}  // namespace karl
