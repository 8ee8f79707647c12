#pragma once

#include <string>
#include <vector>

#include "karl/graph.hpp"

namespace karl {

enum class Direction { exfiltration, ingestion };

/// A linear source -> modules -> sink flow the user reviews. Identity is the
/// rendered text; `routes` keeps the concrete edge sequences that realise
/// it (usually one, more when several port pairs connect the same chain).
struct PipelinePermission {
  /// Device-output tag, or a domain name for ingestion.
  std::string source;
  std::vector<std::string> chain;
  /// Device-input tag (`#dev.port`) or domain name.
  std::string sink;
  Direction direction = Direction::exfiltration;
  bool sink_is_domain = false;
  /// Per chain position: tags joining that module on a port other than the
  /// one the path enters by.
  std::vector<std::vector<std::string>> side_inputs;
  std::vector<std::vector<Edge>> routes;

  std::string text() const;
};

/// `src → m1 (+ side) → m2 → sink`, the arrow-joined form users review.
std::string render_permission(const PipelinePermission& p);

/// Every simple path from a device output to a network-capable module (one
/// permission per granted domain) or to a device input, plus every path from
/// a network-capable module into a device input. Sorted by rendered text.
std::vector<PipelinePermission> extract_permissions(const DataflowGraph& graph);

}  // namespace karl
