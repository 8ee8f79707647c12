#pragma once

#include <map>
#include <string>
#include <vector>

#include "karl/exit_policy.hpp"
#include "karl/graph.hpp"
#include "karl/graph_json.hpp"
#include "karl/permission.hpp"

namespace karl {

enum class Verdict { allowed, denied_by_user, denied_by_exit_policy };

std::string_view to_string(Verdict v);

struct PermissionDecision {
  PipelinePermission permission;
  Verdict verdict = Verdict::denied_by_user;
  /// Set for denied_by_exit_policy.
  std::string policy_tag;
};

/// User verdicts keyed by rendered permission text; true means allowed.
/// Permissions missing from the map are treated as denied.
using UserDecisions = std::map<std::string, bool>;

struct Modification {
  enum class Kind { RevokeNetwork, RemoveEdge, DuplicateSubpath };
  Kind kind = Kind::RevokeNetwork;

  // RevokeNetwork
  std::string module;
  std::string domain;
  // RemoveEdge
  Edge edge;
  // DuplicateSubpath
  std::vector<std::string> originals;
  std::vector<std::string> clones;
  std::vector<ModuleInstance> clone_modules;
  std::vector<Edge> clone_edges;

  Json to_json() const;
};

/// An allowed permission that could not survive the denials around it.
struct SacrificedPermission {
  std::string permission;
  std::string reason;
};

/// The base graph plus an overlay that only removes privileges or clones a
/// shared suffix so an allowed path survives a neighbouring denial.
class EffectiveGraph {
 public:
  EffectiveGraph() = default;

  const DataflowGraph& base() const { return base_; }
  const std::vector<Modification>& overlay() const { return overlay_; }
  const std::vector<PermissionDecision>& decisions() const { return decisions_; }
  const std::vector<Conflict>& conflicts() const { return conflicts_; }
  const std::vector<SacrificedPermission>& sacrificed() const { return sacrificed_; }

  /// Base with the overlay applied: what mediation enforces.
  const DataflowGraph& graph() const { return effective_; }

  /// Maps a clone id back to the module it duplicates; identity otherwise.
  std::string original_of(const std::string& id) const;

  /// Permissions of the enforced graph rendered with clone ids mapped back
  /// to their originals, sorted and unique.
  std::vector<std::string> effective_permission_texts() const;

  Json to_json() const;

 private:
  friend EffectiveGraph enforce(const DataflowGraph&, const UserDecisions&,
                                const std::vector<ExitPolicy>&);

  DataflowGraph base_;
  std::vector<Modification> overlay_;
  std::vector<PermissionDecision> decisions_;
  std::vector<Conflict> conflicts_;
  std::vector<SacrificedPermission> sacrificed_;
  std::map<std::string, std::string> clone_of_;
  DataflowGraph effective_;
};

/// Applies `overlay` to `base`: clones first, then revocations and removals.
DataflowGraph materialize(const DataflowGraph& base,
                          const std::vector<Modification>& overlay);

/// Rewrites the graph so that no denied permission (by the user, or through
/// an exit-policy conflict) remains realisable. Allowed permissions broken by
/// a shared path are duplicated when the clone can stay fully wired without
/// the denied data; otherwise they are reported in sacrificed().
EffectiveGraph enforce(const DataflowGraph& graph, const UserDecisions& decisions,
                       const std::vector<ExitPolicy>& exit_policies);

}  // namespace karl
