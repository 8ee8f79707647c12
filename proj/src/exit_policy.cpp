#include "karl/exit_policy.hpp"

#include <algorithm>
#include <cctype>

namespace karl {

PolicyExpr PolicyExpr::module(std::string name) {
  PolicyExpr e(Kind::Module);
  e.name_ = std::move(name);
  return e;
}

PolicyExpr PolicyExpr::conj(PolicyExpr l, PolicyExpr r) {
  PolicyExpr e(Kind::And);
  e.lhs_ = std::make_shared<const PolicyExpr>(std::move(l));
  e.rhs_ = std::make_shared<const PolicyExpr>(std::move(r));
  return e;
}

PolicyExpr PolicyExpr::disj(PolicyExpr l, PolicyExpr r) {
  PolicyExpr e(Kind::Or);
  e.lhs_ = std::make_shared<const PolicyExpr>(std::move(l));
  e.rhs_ = std::make_shared<const PolicyExpr>(std::move(r));
  return e;
}

PolicyExpr PolicyExpr::then(PolicyExpr l, PolicyExpr r) {
  PolicyExpr e(Kind::Then);
  e.lhs_ = std::make_shared<const PolicyExpr>(std::move(l));
  e.rhs_ = std::make_shared<const PolicyExpr>(std::move(r));
  return e;
}

bool operator==(const PolicyExpr& a, const PolicyExpr& b) {
  if (a.kind_ != b.kind_) return false;
  switch (a.kind_) {
    case PolicyExpr::Kind::True:
    case PolicyExpr::Kind::False: return true;
    case PolicyExpr::Kind::Module: return a.name_ == b.name_;
    default: return *a.lhs_ == *b.lhs_ && *a.rhs_ == *b.rhs_;
  }
}

namespace {

bool ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  PolicyExpr parse() {
    skip_ws();
    if (pos_ == s_.size()) fail("empty policy");
    auto e = parse_then();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) {
    throw Error(Errc::SyntaxError,
                what + " at offset " + std::to_string(pos_),
                std::to_string(pos_));
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  PolicyExpr parse_then() {
    auto lhs = parse_or();
    while (accept('>')) lhs = PolicyExpr::then(std::move(lhs), parse_or());
    return lhs;
  }

  PolicyExpr parse_or() {
    auto lhs = parse_and();
    while (accept('|')) lhs = PolicyExpr::disj(std::move(lhs), parse_and());
    return lhs;
  }

  PolicyExpr parse_and() {
    auto lhs = parse_primary();
    while (accept('&')) lhs = PolicyExpr::conj(std::move(lhs), parse_primary());
    return lhs;
  }

  PolicyExpr parse_primary() {
    skip_ws();
    if (pos_ == s_.size()) fail("expected a module name");
    if (accept('(')) {
      auto e = parse_then();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (!ident_start(s_[pos_])) fail("expected a module name");
    std::size_t start = pos_;
    while (pos_ < s_.size() && ident_char(s_[pos_])) ++pos_;
    std::string word(s_.substr(start, pos_ - start));
    if (word == "true") return PolicyExpr::truth();
    if (word == "false") return PolicyExpr::falsity();
    return PolicyExpr::module(std::move(word));
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

int precedence(PolicyExpr::Kind k) {
  switch (k) {
    case PolicyExpr::Kind::Then: return 1;
    case PolicyExpr::Kind::Or: return 2;
    case PolicyExpr::Kind::And: return 3;
    default: return 4;
  }
}

void render(const PolicyExpr& e, std::string& out) {
  using K = PolicyExpr::Kind;
  switch (e.kind()) {
    case K::True: out += "true"; return;
    case K::False: out += "false"; return;
    case K::Module: out += e.name(); return;
    default: break;
  }
  int p = precedence(e.kind());
  auto side = [&](const PolicyExpr& child, bool right) {
    int cp = precedence(child.kind());
    bool parens = right ? cp <= p : cp < p;
    if (parens) out += '(';
    render(child, out);
    if (parens) out += ')';
  };
  side(e.lhs(), false);
  out += e.kind() == K::And ? " & " : e.kind() == K::Or ? " | " : " > ";
  side(e.rhs(), true);
}

bool sat(const std::string* first, const std::string* last,
         const PolicyExpr& e) {
  using K = PolicyExpr::Kind;
  switch (e.kind()) {
    case K::True: return true;
    case K::False: return false;
    case K::Module: return std::find(first, last, e.name()) != last;
    case K::And: return sat(first, last, e.lhs()) && sat(first, last, e.rhs());
    case K::Or: return sat(first, last, e.lhs()) || sat(first, last, e.rhs());
    case K::Then:
      for (const std::string* split = first;; ++split) {
        if (sat(first, split, e.lhs()) && sat(split, last, e.rhs())) return true;
        if (split == last) return false;
      }
  }
  return false;
}

}  // namespace

PolicyExpr parse_policy(std::string_view text) { return Parser(text).parse(); }

std::string render_policy(const PolicyExpr& e) {
  std::string out;
  render(e, out);
  return out;
}

bool satisfies(const std::vector<std::string>& modules, const PolicyExpr& e) {
  const std::string* first = modules.data();
  return sat(first, first + modules.size(), e);
}

std::string ExitPolicy::line() const { return tag + " = " + render_policy(expr); }

ExitPolicy parse_exit_policy_line(std::string_view line) {
  auto eq = line.find('=');
  if (eq == std::string_view::npos)
    throw Error(Errc::SyntaxError, "expected 'tag = expr'", "0");
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  auto tag = trim(line.substr(0, eq));
  if (tag.empty()) throw Error(Errc::SyntaxError, "missing tag", "0");
  return {std::string(tag), parse_policy(line.substr(eq + 1))};
}

std::optional<std::vector<std::string>> policy_scope(
    const PipelinePermission& p, std::string_view tag) {
  if (p.direction == Direction::exfiltration && p.source == tag) return p.chain;
  const std::size_t n = p.chain.size();
  std::optional<std::size_t> start;
  auto consider = [&](std::size_t from) {
    if (!start || from < *start) start = from;
  };
  std::size_t offset = p.direction == Direction::ingestion ? 1 : 0;
  for (const auto& route : p.routes) {
    for (std::size_t k = 0; k < route.size(); ++k) {
      const Edge& e = route[k];
      // Edge k enters chain[k + offset] or, for the last edge of a
      // device-sink route, the sink itself.
      std::size_t entered = k + offset;
      if (e.src.kind == PortKind::module_output && e.src.tag() == tag)
        consider(entered);
      if (e.dst.tag() == tag) consider(std::min(entered, n));
    }
  }
  if (!start) return std::nullopt;
  return std::vector<std::string>(p.chain.begin() + static_cast<long>(*start),
                                  p.chain.end());
}

bool graph_has_tag(const DataflowGraph& g, std::string_view tag) {
  for (const auto& [id, d] : g.devices) {
    for (const auto& port : d.outputs)
      if (device_output(id, port.name).tag() == tag) return true;
    for (const auto& port : d.inputs)
      if (device_input(id, port.name).tag() == tag) return true;
  }
  for (const auto& [id, m] : g.modules) {
    for (const auto& port : m.manifest.outputs)
      if (module_output(id, port.name).tag() == tag) return true;
    for (const auto& port : m.manifest.inputs)
      if (module_input(id, port.name).tag() == tag) return true;
  }
  return false;
}

std::vector<Conflict> find_conflicts(
    const std::vector<PipelinePermission>& permissions,
    const std::vector<ExitPolicy>& policies, const DataflowGraph& graph) {
  for (const auto& pol : policies)
    if (!graph_has_tag(graph, pol.tag))
      throw Error(Errc::UnknownTag, "no node carries tag '" + pol.tag + "'",
                  pol.tag);
  std::vector<Conflict> out;
  for (const auto& p : permissions) {
    if (p.direction == Direction::ingestion) continue;
    for (const auto& pol : policies) {
      auto scope = policy_scope(p, pol.tag);
      if (!scope) continue;
      if (!satisfies(*scope, pol.expr))
        out.push_back({p.text(), pol.tag, render_policy(pol.expr)});
    }
  }
  return out;
}

}  // namespace karl
