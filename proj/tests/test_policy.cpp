#include <gtest/gtest.h>

#include <optional>

#include "karl/exit_policy.hpp"
#include "support.hpp"

using namespace karl;
using namespace karl::test;

namespace {

// S-expression view of a parsed policy.
std::string sexpr(const PolicyExpr& e) {
  using K = PolicyExpr::Kind;
  switch (e.kind()) {
    case K::True: return "T";
    case K::False: return "F";
    case K::Module: return e.name();
    case K::And: return "(& " + sexpr(e.lhs()) + " " + sexpr(e.rhs()) + ")";
    case K::Or: return "(| " + sexpr(e.lhs()) + " " + sexpr(e.rhs()) + ")";
    case K::Then: return "(> " + sexpr(e.lhs()) + " " + sexpr(e.rhs()) + ")";
  }
  return "?";
}

// Precedence-climbing reference over a token list; nullopt on any error.
struct RefParser {
  std::vector<std::string> t;
  std::size_t i = 0;

  static int prec(const std::string& op) { return op == ">" ? 1 : op == "|" ? 2 : op == "&" ? 3 : 0; }

  std::optional<std::string> primary() {
    if (i >= t.size()) return std::nullopt;
    auto tok = t[i++];
    if (tok == "(") {
      auto e = expr(1);
      if (!e || i >= t.size() || t[i] != ")") return std::nullopt;
      ++i;
      return e;
    }
    if (tok == "true") return "T";
    if (tok == "false") return "F";
    if (prec(tok) || tok == ")") return std::nullopt;
    return tok;
  }

  std::optional<std::string> expr(int min) {
    auto lhs = primary();
    if (!lhs) return std::nullopt;
    while (i < t.size() && prec(t[i]) >= min && prec(t[i]) > 0) {
      auto op = t[i++];
      auto rhs = expr(prec(op) + 1);
      if (!rhs) return std::nullopt;
      lhs = "(" + op + " " + *lhs + " " + *rhs + ")";
    }
    return lhs;
  }

  std::optional<std::string> parse() {
    auto e = expr(1);
    if (!e || i != t.size()) return std::nullopt;
    return e;
  }
};

// Satisfaction straight from the definition, on copies.
bool ref_sat(const std::vector<std::string>& xs, const PolicyExpr& e) {
  using K = PolicyExpr::Kind;
  switch (e.kind()) {
    case K::True: return true;
    case K::False: return false;
    case K::Module: return std::count(xs.begin(), xs.end(), e.name()) > 0;
    case K::And: return ref_sat(xs, e.lhs()) && ref_sat(xs, e.rhs());
    case K::Or: return ref_sat(xs, e.lhs()) || ref_sat(xs, e.rhs());
    case K::Then:
      for (std::size_t k = 0; k <= xs.size(); ++k) {
        std::vector<std::string> pre(xs.begin(), xs.begin() + static_cast<long>(k));
        std::vector<std::string> post(xs.begin() + static_cast<long>(k), xs.end());
        if (ref_sat(pre, e.lhs()) && ref_sat(post, e.rhs())) return true;
      }
      return false;
  }
  return false;
}

PolicyExpr random_expr(std::mt19937_64& rng, int depth) {
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  if (depth == 0 || pick(3) == 0) {
    switch (pick(6)) {
      case 0: return PolicyExpr::truth();
      case 1: return PolicyExpr::falsity();
      default: return PolicyExpr::module(std::string(1, static_cast<char>('a' + pick(3))));
    }
  }
  auto l = random_expr(rng, depth - 1), r = random_expr(rng, depth - 1);
  switch (pick(3)) {
    case 0: return PolicyExpr::conj(l, r);
    case 1: return PolicyExpr::disj(l, r);
    default: return PolicyExpr::then(l, r);
  }
}

std::vector<std::string> list(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

}  // namespace

TEST(PolicyParser, TableRowsParse) {
  EXPECT_EQ(parse_policy("false").kind(), PolicyExpr::Kind::False);
  EXPECT_EQ(sexpr(parse_policy("speech_to_intent")), "speech_to_intent");
  EXPECT_EQ(sexpr(parse_policy("boolean | prio")), "(| boolean prio)");
  EXPECT_EQ(sexpr(parse_policy("(boolean|prio)>statistics")), "(> (| boolean prio) statistics)");
}

TEST(PolicyParser, Precedence) {
  EXPECT_EQ(sexpr(parse_policy("a > b | c")), "(> a (| b c))");
  EXPECT_EQ(sexpr(parse_policy("a | b & c")), "(| a (& b c))");
  EXPECT_EQ(sexpr(parse_policy("a > b > c")), "(> (> a b) c)");
  EXPECT_EQ(sexpr(parse_policy("a & b | c > d")), "(> (| (& a b) c) d)");
}

TEST(PolicyParser, SyntaxErrorsCarryOffsets) {
  for (auto [text, offset] : std::vector<std::pair<const char*, const char*>>{
           {"", "0"}, {"a &", "3"}, {"(a | b", "6"}, {"a b", "2"}, {"| a", "0"}, {"a $ b", "2"}}) {
    try {
      parse_policy(text);
      ADD_FAILURE() << "accepted '" << text << "'";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::SyntaxError) << text;
      EXPECT_EQ(e.detail(), offset) << text;
    }
  }
}

TEST(PolicyParser, MatchesReferenceOnAllShortTokenStrings) {
  const std::vector<std::string> alphabet{"a", "b", "true", "(", ")", "&", "|", ">"};
  std::size_t accepted = 0, total = 0;
  std::vector<std::size_t> idx;
  for (std::size_t len = 1; len <= 5; ++len) {
    idx.assign(len, 0);
    for (;;) {
      std::vector<std::string> toks;
      std::string text;
      for (auto k : idx) {
        toks.push_back(alphabet[k]);
        text += alphabet[k] + " ";
      }
      auto want = RefParser{toks}.parse();
      std::optional<std::string> got;
      try {
        got = sexpr(parse_policy(text));
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::SyntaxError);
      }
      ASSERT_EQ(got, want) << "input: " << text;
      accepted += want.has_value();
      ++total;
      std::size_t k = 0;
      while (k < len && ++idx[k] == alphabet.size()) idx[k++] = 0;
      if (k == len) break;
    }
  }
  EXPECT_GT(accepted, 100u);
  EXPECT_GT(total, 30000u);
}

TEST(PolicyParser, RenderRoundTrips) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 2000; ++i) {
    auto e = random_expr(rng, 4);
    auto text = render_policy(e);
    EXPECT_EQ(parse_policy(text), e) << text;
    EXPECT_EQ(render_policy(parse_policy(text)), text);
  }
  EXPECT_EQ(render_policy(parse_policy("(boolean|prio)>statistics")), "boolean | prio > statistics");
  EXPECT_EQ(render_policy(parse_policy("a > (b > c)")), "a > (b > c)");
}

TEST(Satisfies, OrderedAnonymisation) {
  auto anon = parse_policy("(boolean|prio)>statistics");
  EXPECT_TRUE(satisfies(list({"person_detection", "boolean", "statistics"}), anon));
  EXPECT_FALSE(satisfies(list({"person_detection", "statistics"}), anon));
  EXPECT_FALSE(satisfies(list({"person_detection", "statistics"}), parse_policy("boolean | prio")));
  EXPECT_FALSE(satisfies(list({"statistics", "boolean"}), anon));
  EXPECT_FALSE(satisfies({}, PolicyExpr::module("m")));
}

TEST(Satisfies, ConstantsHoldEverywhere) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> xs;
    for (int k = 0, n = static_cast<int>(rng() % 5); k < n; ++k) xs.push_back(std::string(1, 'a' + rng() % 3));
    EXPECT_TRUE(satisfies(xs, PolicyExpr::truth()));
    EXPECT_FALSE(satisfies(xs, PolicyExpr::falsity()));
  }
}

TEST(Satisfies, MatchesDefinitionOnRandomInputs) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 3000; ++i) {
    auto e = random_expr(rng, 3);
    std::vector<std::string> xs;
    for (int k = 0, n = static_cast<int>(rng() % 5); k < n; ++k) xs.push_back(std::string(1, 'a' + rng() % 3));
    ASSERT_EQ(satisfies(xs, e), ref_sat(xs, e)) << render_policy(e);
  }
}

TEST(Satisfies, AndOrMonotoneUnderSuperset) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 1000; ++i) {
    PolicyExpr e = random_expr(rng, 3);
    if (render_policy(e).find('>') != std::string::npos) continue;
    std::vector<std::string> xs;
    for (int k = 0, n = static_cast<int>(rng() % 4); k < n; ++k) xs.push_back(std::string(1, 'a' + rng() % 3));
    auto ys = xs;
    ys.push_back(std::string(1, 'a' + rng() % 3));
    if (satisfies(xs, e)) EXPECT_TRUE(satisfies(ys, e)) << render_policy(e);
  }
}

TEST(ExitPolicyLine, ParsesAndRenders) {
  auto p = parse_exit_policy_line("speaker.speech_command = speech_to_intent");
  EXPECT_EQ(p.tag, "speaker.speech_command");
  EXPECT_EQ(p.line(), "speaker.speech_command = speech_to_intent");
  EXPECT_THROW(parse_exit_policy_line("no equals"), Error);
}

namespace {

std::vector<Conflict> conflicts_in(const DataflowGraph& g, const std::string& tag, const std::string& expr) {
  return find_conflicts(extract_permissions(g), {{tag, parse_policy(expr)}}, g);
}

}  // namespace

TEST(Conflicts, HouseholdPoliciesAgainstFleet) {
  auto g = fleet_graph();
  EXPECT_TRUE(conflicts_in(g, "light.state", "false").empty());
  EXPECT_TRUE(conflicts_in(g, "camera.livestream", "false").empty());
  EXPECT_TRUE(conflicts_in(g, "speaker.speech_command", "speech_to_intent").empty());
  auto j = conflicts_in(g, "person_detection.image", "boolean | prio");
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0].permission, "camera.motion" + kArrow + "person_detection" + kArrow + "statistics" + kArrow +
                                 "statistics.com");
  EXPECT_EQ(j[0].policy_tag, "person_detection.image");
}

TEST(Conflicts, AnonymisedCameraSatisfiesTheOrderedPolicy) {
  auto g = occupancy_graph();
  EXPECT_TRUE(conflicts_in(g, "camera.motion", "(boolean|prio)>statistics").empty());
  EXPECT_TRUE(conflicts_in(g, "person_detection.image", "boolean | prio").empty());
  auto b = fleet_graph();
  EXPECT_EQ(conflicts_in(b, "camera.motion", "(boolean|prio)>statistics").size(), 1u);
}

TEST(Conflicts, IngestionIsNeverChecked) {
  auto g = fleet_graph();
  EXPECT_TRUE(conflicts_in(g, "firmware.firmware", "false").empty());
  EXPECT_TRUE(conflicts_in(g, "#camera.firmware", "false").empty());
}

TEST(Conflicts, DeviceInputSinkScopeIsEmpty) {
  auto g = fleet_graph();
  auto c = conflicts_in(g, "#light.state", "light_switch");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_TRUE(conflicts_in(g, "#light.state", "true").empty());
}

TEST(Conflicts, ScopeByTagKind) {
  auto g = fleet_graph();
  for (const auto& p : extract_permissions(g)) {
    if (p.text().find("weather.com") == std::string::npos) continue;
    EXPECT_EQ(policy_scope(p, "speaker.speech_command"), list({"speech_to_intent", "weather"}));
    EXPECT_EQ(policy_scope(p, "weather.weather_intent"), list({"weather"}));
    EXPECT_EQ(policy_scope(p, "speech_to_intent.weather_intent"), list({"weather"}));
    EXPECT_EQ(policy_scope(p, "light.state"), std::nullopt);
  }
}

TEST(Conflicts, UnknownTag) {
  auto g = fleet_graph();
  try {
    conflicts_in(g, "nope.nothing", "true");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownTag);
  }
}
