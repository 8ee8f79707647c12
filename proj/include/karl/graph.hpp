#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "karl/clock.hpp"
#include "karl/error.hpp"

namespace karl {

enum class PortKind { device_output, device_input, module_input, module_output };

/// One input or output node of a device or module box.
struct NodeId {
  std::string owner;
  std::string port;
  PortKind kind = PortKind::module_output;

  /// `owner.port`, or `#owner.port` for device inputs.
  std::string tag() const;

  bool is_source_kind() const {
    return kind == PortKind::device_output || kind == PortKind::module_output;
  }
  bool is_sink_kind() const {
    return kind == PortKind::module_input || kind == PortKind::device_input;
  }

  auto operator<=>(const NodeId&) const = default;
};

inline NodeId device_output(std::string owner, std::string port) {
  return {std::move(owner), std::move(port), PortKind::device_output};
}
inline NodeId device_input(std::string owner, std::string port) {
  return {std::move(owner), std::move(port), PortKind::device_input};
}
inline NodeId module_input(std::string owner, std::string port) {
  return {std::move(owner), std::move(port), PortKind::module_input};
}
inline NodeId module_output(std::string owner, std::string port) {
  return {std::move(owner), std::move(port), PortKind::module_output};
}

enum class Statefulness { stateless, stateful };

struct Edge {
  NodeId src;
  NodeId dst;
  Statefulness statefulness = Statefulness::stateless;

  bool stateless() const { return statefulness == Statefulness::stateless; }
  auto operator<=>(const Edge&) const = default;
};

struct Port {
  std::string name;
  /// Matched by string equality; an empty type is untyped and matches any.
  std::string data_type;
  std::string description;

  bool operator==(const Port&) const = default;
};

struct PackageRef {
  std::string hash;  // hex SHA-256 of the package blob
  std::uint64_t size_bytes = 0;

  bool operator==(const PackageRef&) const = default;
};

struct ModuleManifest {
  std::string name;
  std::string entrypoint;
  std::vector<Port> inputs;
  std::vector<Port> outputs;
  std::vector<std::string> domains;
  PackageRef package;

  const Port* find_input(std::string_view port) const;
  const Port* find_output(std::string_view port) const;

  bool operator==(const ModuleManifest&) const = default;
};

struct Schedule {
  enum class Kind { on_push, interval, manual };
  Kind kind = Kind::on_push;
  Duration period{0};

  static Schedule on_push() { return {}; }
  static Schedule manual() { return {Kind::manual, Duration{0}}; }
  static Schedule interval(Duration period) { return {Kind::interval, period}; }

  bool operator==(const Schedule&) const = default;
};

struct ModuleInstance {
  std::string id;
  ModuleManifest manifest;
  Schedule schedule;
  std::set<std::string> network_grant;
  /// Vendor-supplied parameters handed to the module at spawn.
  std::map<std::string, std::string> config;

  bool operator==(const ModuleInstance&) const = default;
};

/// Scope of a device's Karl app: which tags it may read or push and which
/// manual modules it may spawn.
struct AppSpec {
  std::string bundle;
  std::vector<std::string> read;
  std::vector<std::string> push;
  std::vector<std::string> spawn;

  bool operator==(const AppSpec&) const = default;
};

struct DeviceDescriptor {
  std::string id;
  std::vector<Port> inputs;
  std::vector<Port> outputs;
  std::optional<AppSpec> app;

  const Port* find_input(std::string_view port) const;
  const Port* find_output(std::string_view port) const;

  bool operator==(const DeviceDescriptor&) const = default;
};

/// Devices, modules and the edges between their ports. Values are treated
/// as immutable snapshots; every operation below returns a new graph.
struct DataflowGraph {
  std::map<std::string, DeviceDescriptor, std::less<>> devices;
  std::map<std::string, ModuleInstance, std::less<>> modules;
  std::set<Edge> edges;

  bool empty() const {
    return devices.empty() && modules.empty() && edges.empty();
  }
  bool has_owner(std::string_view id) const {
    return devices.contains(id) || modules.contains(id);
  }
  const ModuleInstance* find_module(std::string_view id) const;
  const DeviceDescriptor* find_device(std::string_view id) const;

  /// The port a node refers to, or nullptr when the node does not exist.
  const Port* resolve(const NodeId& node) const;

  std::vector<Edge> edges_from(const NodeId& src) const;
  std::vector<Edge> edges_into(std::string_view owner) const;

  bool operator==(const DataflowGraph&) const = default;
};

enum class ViolationKind {
  IdCollision,
  UnknownNode,
  KindMismatch,
  TypeMismatch,
  SelfLoop,
  StatelessCycle,
  GrantExceedsManifest,
  DuplicatePort,
  InvalidSchedule,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string element;
  std::string message;
};

/// Every violated invariant, in a deterministic order. Empty means valid.
std::vector<Violation> validate(const DataflowGraph& graph);

/// Disjoint union. Throws IdCollision or ValidationFailure (carrying the
/// first violation) and leaves `graph` untouched.
DataflowGraph register_fragment(const DataflowGraph& graph,
                                const DataflowGraph& fragment);

/// Throws UnknownNode, KindMismatch, TypeMismatch, ValidationFailure
/// (self-loop) or StatelessCycle.
DataflowGraph add_edge(const DataflowGraph& graph, const NodeId& src,
                       const NodeId& dst,
                       Statefulness statefulness = Statefulness::stateless);

/// Tags a push on `owner.port` lands under: the output's own tag plus the
/// tag of every node one edge downstream. Throws UnknownPort.
std::set<std::string> tags_for_push(const DataflowGraph& graph,
                                    std::string_view owner,
                                    std::string_view port);

/// Parses `owner.port` / `#owner.port` against the graph. `as_source`
/// resolves an undecorated module reference to its output rather than input.
NodeId parse_node_ref(const DataflowGraph& graph, std::string_view text,
                      bool as_source);

/// True when the module-to-module stateless edges contain a cycle.
bool has_stateless_cycle(const DataflowGraph& graph);

}  // namespace karl
