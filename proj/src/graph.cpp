#include "karl/graph.hpp"

#include <algorithm>
#include <functional>

namespace karl {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::IdCollision: return "IdCollision";
    case Errc::ValidationFailure: return "ValidationFailure";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::KindMismatch: return "KindMismatch";
    case Errc::TypeMismatch: return "TypeMismatch";
    case Errc::StatelessCycle: return "StatelessCycle";
    case Errc::UnknownPort: return "UnknownPort";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::UnknownTag: return "UnknownTag";
    case Errc::IrreconcilableOverlap: return "IrreconcilableOverlap";
    case Errc::StorageFull: return "StorageFull";
    case Errc::UnknownEntry: return "UnknownEntry";
    case Errc::UnknownInstance: return "UnknownInstance";
    case Errc::AccessDenied: return "AccessDenied";
    case Errc::ExecutionFailure: return "ExecutionFailure";
    case Errc::Timeout: return "Timeout";
    case Errc::TransferFailure: return "TransferFailure";
    case Errc::WarmMismatch: return "WarmMismatch";
    case Errc::Exhausted: return "Exhausted";
    case Errc::DuplicateDevice: return "DuplicateDevice";
    case Errc::IncompleteDecisions: return "IncompleteDecisions";
    case Errc::AuthFailure: return "AuthFailure";
    case Errc::UnknownDevice: return "UnknownDevice";
    case Errc::UnknownRegistration: return "UnknownRegistration";
    case Errc::Cancelled: return "Cancelled";
    case Errc::Transport: return "Transport";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::IdCollision: return "IdCollision";
    case ViolationKind::UnknownNode: return "UnknownNode";
    case ViolationKind::KindMismatch: return "KindMismatch";
    case ViolationKind::TypeMismatch: return "TypeMismatch";
    case ViolationKind::SelfLoop: return "SelfLoop";
    case ViolationKind::StatelessCycle: return "StatelessCycle";
    case ViolationKind::GrantExceedsManifest: return "GrantExceedsManifest";
    case ViolationKind::DuplicatePort: return "DuplicatePort";
    case ViolationKind::InvalidSchedule: return "InvalidSchedule";
  }
  return "Unknown";
}

std::string NodeId::tag() const {
  std::string out;
  out.reserve(owner.size() + port.size() + 2);
  if (kind == PortKind::device_input) out += '#';
  out += owner;
  out += '.';
  out += port;
  return out;
}

namespace {

const Port* find_port(const std::vector<Port>& ports, std::string_view name) {
  auto it = std::find_if(ports.begin(), ports.end(),
                         [&](const Port& p) { return p.name == name; });
  return it == ports.end() ? nullptr : &*it;
}

bool types_compatible(const Port& a, const Port& b) {
  return a.data_type.empty() || b.data_type.empty() ||
         a.data_type == b.data_type;
}

std::string edge_label(const Edge& e) {
  return e.src.tag() + " -> " + e.dst.tag();
}

}  // namespace

const Port* ModuleManifest::find_input(std::string_view port) const {
  return find_port(inputs, port);
}
const Port* ModuleManifest::find_output(std::string_view port) const {
  return find_port(outputs, port);
}
const Port* DeviceDescriptor::find_input(std::string_view port) const {
  return find_port(inputs, port);
}
const Port* DeviceDescriptor::find_output(std::string_view port) const {
  return find_port(outputs, port);
}

const ModuleInstance* DataflowGraph::find_module(std::string_view id) const {
  auto it = modules.find(id);
  return it == modules.end() ? nullptr : &it->second;
}

const DeviceDescriptor* DataflowGraph::find_device(std::string_view id) const {
  auto it = devices.find(id);
  return it == devices.end() ? nullptr : &it->second;
}

const Port* DataflowGraph::resolve(const NodeId& node) const {
  switch (node.kind) {
    case PortKind::device_output:
      if (auto* d = find_device(node.owner)) return d->find_output(node.port);
      return nullptr;
    case PortKind::device_input:
      if (auto* d = find_device(node.owner)) return d->find_input(node.port);
      return nullptr;
    case PortKind::module_input:
      if (auto* m = find_module(node.owner))
        return m->manifest.find_input(node.port);
      return nullptr;
    case PortKind::module_output:
      if (auto* m = find_module(node.owner))
        return m->manifest.find_output(node.port);
      return nullptr;
  }
  return nullptr;
}

std::vector<Edge> DataflowGraph::edges_from(const NodeId& src) const {
  std::vector<Edge> out;
  for (const auto& e : edges)
    if (e.src == src) out.push_back(e);
  return out;
}

std::vector<Edge> DataflowGraph::edges_into(std::string_view owner) const {
  std::vector<Edge> out;
  for (const auto& e : edges)
    if (e.dst.owner == owner) out.push_back(e);
  return out;
}

bool has_stateless_cycle(const DataflowGraph& graph) {
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& e : graph.edges) {
    if (!e.stateless()) continue;
    if (e.src.kind != PortKind::module_output) continue;
    if (e.dst.kind != PortKind::module_input) continue;
    adj[e.src.owner].push_back(e.dst.owner);
  }
  enum class Mark { none, active, done };
  std::map<std::string, Mark> mark;
  std::function<bool(const std::string&)> visit = [&](const std::string& v) {
    mark[v] = Mark::active;
    for (const auto& w : adj[v]) {
      auto m = mark[w];
      if (m == Mark::active) return true;
      if (m == Mark::none && visit(w)) return true;
    }
    mark[v] = Mark::done;
    return false;
  };
  for (const auto& [id, _] : graph.modules)
    if (mark[id] == Mark::none && visit(id)) return true;
  return false;
}

namespace {

void check_ports(const std::string& owner, const std::vector<Port>& a,
                 const std::vector<Port>& b, std::vector<Violation>& out) {
  for (const auto* list : {&a, &b}) {
    std::set<std::string> seen;
    for (const auto& p : *list) {
      if (p.name.empty() || !seen.insert(p.name).second)
        out.push_back({ViolationKind::DuplicatePort, owner + "." + p.name,
                       "port names must be nonempty and unique per direction"});
    }
  }
}

// Checks one edge against the graph; returns false if it was rejected.
bool check_edge(const DataflowGraph& g, const Edge& e,
                std::vector<Violation>& out) {
  const auto label = edge_label(e);
  if (!e.src.is_source_kind() || !e.dst.is_sink_kind()) {
    out.push_back({ViolationKind::KindMismatch, label,
                   "edges run from an output to an input"});
    return false;
  }
  if (e.src.kind == PortKind::device_output &&
      e.dst.kind == PortKind::device_input) {
    out.push_back({ViolationKind::KindMismatch, label,
                   "device-to-device edges need at least one module"});
    return false;
  }
  const Port* src = g.resolve(e.src);
  const Port* dst = g.resolve(e.dst);
  if (src == nullptr || dst == nullptr) {
    out.push_back({ViolationKind::UnknownNode, label,
                   "edge endpoint " + (src ? e.dst.tag() : e.src.tag()) +
                       " does not exist"});
    return false;
  }
  if (e.src.owner == e.dst.owner) {
    out.push_back({ViolationKind::SelfLoop, label,
                   "a module cannot feed itself"});
    return false;
  }
  if (!types_compatible(*src, *dst)) {
    out.push_back({ViolationKind::TypeMismatch, label,
                   "data type '" + src->data_type + "' does not match '" +
                       dst->data_type + "'"});
    return false;
  }
  return true;
}

}  // namespace

std::vector<Violation> validate(const DataflowGraph& g) {
  std::vector<Violation> out;
  for (const auto& [id, dev] : g.devices) {
    if (id != dev.id)
      out.push_back({ViolationKind::UnknownNode, id, "device id mismatch"});
    if (g.modules.contains(id))
      out.push_back({ViolationKind::IdCollision, id,
                     "id used by both a device and a module"});
    check_ports(id, dev.inputs, dev.outputs, out);
  }
  for (const auto& [id, mod] : g.modules) {
    if (id != mod.id)
      out.push_back({ViolationKind::UnknownNode, id, "module id mismatch"});
    check_ports(id, mod.manifest.inputs, mod.manifest.outputs, out);
    for (const auto& d : mod.network_grant) {
      if (std::find(mod.manifest.domains.begin(), mod.manifest.domains.end(),
                    d) == mod.manifest.domains.end())
        out.push_back({ViolationKind::GrantExceedsManifest, id + ":" + d,
                       "network grant not declared in the manifest"});
    }
    if (mod.schedule.kind == Schedule::Kind::interval &&
        mod.schedule.period.count() <= 0)
      out.push_back({ViolationKind::InvalidSchedule, id,
                     "interval period must be positive"});
  }
  for (const auto& e : g.edges) check_edge(g, e, out);
  if (has_stateless_cycle(g))
    out.push_back({ViolationKind::StatelessCycle, "graph",
                   "cycle made only of stateless edges"});
  return out;
}

DataflowGraph register_fragment(const DataflowGraph& graph,
                                const DataflowGraph& fragment) {
  for (const auto& [id, _] : fragment.devices)
    if (graph.has_owner(id))
      throw Error(Errc::IdCollision, "id '" + id + "' already registered", id);
  for (const auto& [id, _] : fragment.modules)
    if (graph.has_owner(id))
      throw Error(Errc::IdCollision, "id '" + id + "' already registered", id);
  auto violations = validate(fragment);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw Error(Errc::ValidationFailure,
                std::string(to_string(v.kind)) + ": " + v.element + ": " +
                    v.message,
                std::string(to_string(v.kind)));
  }
  DataflowGraph out = graph;
  out.devices.insert(fragment.devices.begin(), fragment.devices.end());
  out.modules.insert(fragment.modules.begin(), fragment.modules.end());
  out.edges.insert(fragment.edges.begin(), fragment.edges.end());
  return out;
}

DataflowGraph add_edge(const DataflowGraph& graph, const NodeId& src,
                       const NodeId& dst, Statefulness statefulness) {
  Edge e{src, dst, statefulness};
  std::vector<Violation> v;
  if (!check_edge(graph, e, v)) {
    const auto& first = v.front();
    Errc code = Errc::ValidationFailure;
    switch (first.kind) {
      case ViolationKind::UnknownNode: code = Errc::UnknownNode; break;
      case ViolationKind::KindMismatch: code = Errc::KindMismatch; break;
      case ViolationKind::TypeMismatch: code = Errc::TypeMismatch; break;
      default: break;
    }
    throw Error(code, first.message, first.element);
  }
  DataflowGraph out = graph;
  out.edges.insert(e);
  if (e.stateless() && has_stateless_cycle(out))
    throw Error(Errc::StatelessCycle,
                "edge " + edge_label(e) + " closes a stateless cycle",
                edge_label(e));
  return out;
}

std::set<std::string> tags_for_push(const DataflowGraph& graph,
                                    std::string_view owner,
                                    std::string_view port) {
  NodeId src;
  if (const auto* m = graph.find_module(owner)) {
    if (!m->manifest.find_output(port))
      throw Error(Errc::UnknownPort,
                  "module '" + std::string(owner) + "' has no output '" +
                      std::string(port) + "'",
                  std::string(port));
    src = module_output(std::string(owner), std::string(port));
  } else if (const auto* d = graph.find_device(owner)) {
    if (!d->find_output(port))
      throw Error(Errc::UnknownPort,
                  "device '" + std::string(owner) + "' has no output '" +
                      std::string(port) + "'",
                  std::string(port));
    src = device_output(std::string(owner), std::string(port));
  } else {
    throw Error(Errc::UnknownPort, "unknown owner '" + std::string(owner) + "'",
                std::string(owner));
  }
  std::set<std::string> tags{src.tag()};
  for (const auto& e : graph.edges)
    if (e.src == src) tags.insert(e.dst.tag());
  return tags;
}

NodeId parse_node_ref(const DataflowGraph& graph, std::string_view text,
                      bool as_source) {
  bool hash = !text.empty() && text.front() == '#';
  if (hash) text.remove_prefix(1);
  auto dot = text.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == text.size())
    throw Error(Errc::UnknownNode,
                "node reference '" + std::string(text) +
                    "' is not of the form owner.port",
                std::string(text));
  NodeId n{std::string(text.substr(0, dot)), std::string(text.substr(dot + 1)),
           PortKind::module_output};
  if (hash) {
    n.kind = PortKind::device_input;
  } else if (graph.devices.contains(n.owner)) {
    // A bare device reference can only be an output tag.
    n.kind = PortKind::device_output;
  } else {
    n.kind = as_source ? PortKind::module_output : PortKind::module_input;
  }
  return n;
}

}  // namespace karl
