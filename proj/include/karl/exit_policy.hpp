#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "karl/graph.hpp"
#include "karl/permission.hpp"

namespace karl {

/// A condition over module names. `&` binds tightest, then `|`, then `>`;
/// all three are left-associative.
class PolicyExpr {
 public:
  enum class Kind { True, False, Module, And, Or, Then };

  static PolicyExpr truth() { return PolicyExpr(Kind::True); }
  static PolicyExpr falsity() { return PolicyExpr(Kind::False); }
  static PolicyExpr module(std::string name);
  static PolicyExpr conj(PolicyExpr l, PolicyExpr r);
  static PolicyExpr disj(PolicyExpr l, PolicyExpr r);
  static PolicyExpr then(PolicyExpr l, PolicyExpr r);

  Kind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const PolicyExpr& lhs() const { return *lhs_; }
  const PolicyExpr& rhs() const { return *rhs_; }

  friend bool operator==(const PolicyExpr& a, const PolicyExpr& b);

 private:
  explicit PolicyExpr(Kind k) : kind_(k) {}

  Kind kind_;
  std::string name_;
  std::shared_ptr<const PolicyExpr> lhs_;
  std::shared_ptr<const PolicyExpr> rhs_;
};

/// Throws SyntaxError whose detail is the byte offset of the problem.
PolicyExpr parse_policy(std::string_view text);

/// Minimal-parenthesis rendering; parse_policy(render_policy(e)) == e.
std::string render_policy(const PolicyExpr& e);

/// Whether the ordered module list meets the condition. `a > b` holds when
/// some split puts a prefix satisfying `a` before a suffix satisfying `b`.
bool satisfies(const std::vector<std::string>& modules, const PolicyExpr& e);

struct ExitPolicy {
  std::string tag;
  PolicyExpr expr;

  /// Persisted form: `tag = expr`.
  std::string line() const;
};

/// Parses a `tag = expr` line.
ExitPolicy parse_exit_policy_line(std::string_view line);

struct Conflict {
  std::string permission;  // rendered text
  std::string policy_tag;
  std::string policy_expr;

  bool operator==(const Conflict&) const = default;
};

/// Modules of `p` a policy on `tag` constrains, or nullopt when no route of
/// the permission passes the tag's node. Device-output tag: whole chain;
/// module-input tag: that module onward; module-output tag: strictly after.
std::optional<std::vector<std::string>> policy_scope(
    const PipelinePermission& p, std::string_view tag);

/// True when some node of the graph carries `tag`.
bool graph_has_tag(const DataflowGraph& graph, std::string_view tag);

/// Exfiltration permissions that pass a policy's tag yet fail its condition.
/// Ingestion permissions are never checked. Throws UnknownTag.
std::vector<Conflict> find_conflicts(
    const std::vector<PipelinePermission>& permissions,
    const std::vector<ExitPolicy>& policies, const DataflowGraph& graph);

}  // namespace karl
