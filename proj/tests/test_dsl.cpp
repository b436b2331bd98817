#include <gtest/gtest.h>

#include "medsynth/orchestrator.hpp"
#include "support.hpp"

using namespace medsynth;
using namespace medsynth::testing;

namespace {

std::string parse_error(const std::string& src) {
  try {
    parse_problem(src);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

const char* kPairing = "system P { vars x y; compose pair(x, y); decompose pair(x, y) -> x; }\n";

ast::Term random_ast(TermGen& g, unsigned depth) {
  Term t = g.term(depth);
  std::function<ast::Term(Term)> conv = [&](Term u) {
    ast::Term a;
    a.name = u.head().name();
    a.nonce = u.is_nonce();
    for (Term v : u.args()) a.args.push_back(conv(v));
    return a;
  };
  return conv(t);
}

}  // namespace

TEST(Dsl, MinimalSystem) {
  auto p = parse_problem("system DY { vars x y; compose pair(x,y); }");
  EXPECT_EQ(p.system.name(), "DY");
  EXPECT_EQ(p.system.user_rule_count(), 1u);
  EXPECT_EQ(p.system.rule(0).kind, RuleKind::composition);
  EXPECT_TRUE(p.strands.empty());
  EXPECT_FALSE(p.constraints);
}

TEST(Dsl, SyntaxErrorAtEndOfInput) {
  std::string src = std::string(kPairing) + "constraints {\n  ? pair(a";
  EXPECT_EQ(parse_error(src), "3:11: expected ')', found end of input");
  EXPECT_THROW(parse_term("pair(a"), ParseError);
}

TEST(Dsl, Errors) {
  EXPECT_NE(parse_error(""), "");
  EXPECT_NE(parse_error(std::string(kPairing) + "constraints { ! f(a); ! f(a, b); }").find("arity"), std::string::npos);
  EXPECT_NE(parse_error(std::string(kPairing) + "constraints { ! blind(a, b); }").find("reserved"), std::string::npos);
  EXPECT_NE(parse_error(std::string(kPairing) + "constraints { vars nonce; }").find("cannot be a variable"),
            std::string::npos);
  EXPECT_NE(parse_error(std::string(kPairing) + "constraints { } strand S { ! a; }").find("not both"),
            std::string::npos);
  EXPECT_NE(parse_error("system S { compose g(h(x)) from x; }").find("1:12"), std::string::npos);
  EXPECT_NE(parse_error(std::string(kPairing) + "constraints { vars X X; }").find("declared twice"),
            std::string::npos);
  EXPECT_NE(parse_error(std::string(kPairing) + "constraints { ! a } ").find("expected ';'"), std::string::npos);
  EXPECT_NE(parse_error(std::string(kPairing) + "strand S { } strand S { }").find("duplicate strand"),
            std::string::npos);
  EXPECT_NE(parse_error("system S { } system T { }").find("duplicate system"), std::string::npos);
  EXPECT_NE(parse_error("constraints { ! a; }").find("missing system"), std::string::npos);
  EXPECT_NE(parse_error(std::string(kPairing) + "constraints { ! a$; }").find("unexpected character"),
            std::string::npos);
}

TEST(Dsl, VariablesAndStrands) {
  auto p = parse_problem(std::string(kPairing) + R"(
shared vars A;
strand Client { vars R; ? pair(A, R); }
strand Server { vars R; ! A; # R; ? R; }
)");
  ASSERT_EQ(p.strands.size(), 2u);
  EXPECT_EQ(p.strands[0].items[0].payload, app("pair", {var("A"), var("R@Client")}));
  EXPECT_EQ(p.strands[1].items[1].payload, var("R@Server"));
  EXPECT_EQ(p.strands[1].items[0].strand, "Server");
  EXPECT_EQ(p.shared_vars, std::vector<std::string>{"A"});

  auto q = parse_problem(std::string(kPairing) + "constraints { vars X; ! X; ? nonce:n; # x; }");
  ASSERT_TRUE(q.constraints);
  EXPECT_EQ((*q.constraints)[0].payload, var("X"));
  EXPECT_EQ((*q.constraints)[1].payload, nonce("n"));
  // System variables are not in scope in the constraints.
  EXPECT_EQ((*q.constraints)[2].payload, constant("x"));
}

TEST(Dsl, GeneratedNamesOnlyInOutputSyntax) {
  EXPECT_EQ(parse_term("blind(a, nonce:n#1)"), app("blind", {constant("a"), nonce("n#1")}));
  EXPECT_EQ(parse_term("pair(X@Client, c#2)", {"X@Client"}), app("pair", {var("X@Client"), constant("c#2")}));
  EXPECT_EQ(parse_term_list("a, g(b)"), (std::vector<Term>{constant("a"), app("g", {constant("b")})}));
  EXPECT_TRUE(parse_term_list("").empty());
  EXPECT_THROW(parse_term("blind(a)"), ParseError);
  EXPECT_THROW(parse_term("a b"), ParseError);
}

TEST(Dsl, ShippedFilesRoundTrip) {
  std::vector<std::string> files;
  for (auto& e : std::filesystem::directory_iterator(source_path("problems"))) files.push_back(e.path().string());
  for (auto& e : std::filesystem::directory_iterator(source_path("tests/corpus"))) files.push_back(e.path().string());
  ASSERT_GT(files.size(), 50u);
  for (auto& f : files) {
    auto ast1 = parse_ast(slurp(f));
    std::string printed = print(ast1);
    auto ast2 = parse_ast(printed);
    EXPECT_EQ(ast1, ast2) << f;
    EXPECT_EQ(print(ast2), printed) << f;
    EXPECT_NO_THROW(resolve(ast2)) << f;
  }
}

TEST(DslProperty, RandomItemsRoundTrip) {
  std::mt19937_64 rng(5);
  TermGen g{rng};
  g.nonces = {"n", "k2"};
  g.variables = {"X", "Y"};
  for (int i = 0; i < 300; ++i) {
    ast::File f;
    f.system = ast::System{"S", {"x", "y"}, {}, {}};
    ast::Rule r;
    r.compose = true;
    r.conclusion = {"pair", false, {{"x", false, {}, {}}, {"y", false, {}, {}}}, {}};
    f.system->rules.push_back(r);
    ast::Block b;
    b.vars = {"X", "Y"};
    std::size_t n = 1 + g.pick(5);
    for (std::size_t k = 0; k < n; ++k) {
      auto kind = std::array{ConstraintKind::send, ConstraintKind::receive, ConstraintKind::forbid}[g.pick(3)];
      b.items.push_back({kind, random_ast(g, 3), {}});
    }
    f.constraints = b;
    std::string text = print(f);
    EXPECT_EQ(parse_ast(text), f) << text;
    auto p = resolve(parse_ast(text));
    ASSERT_EQ(p.constraints->size(), n);
    for (std::size_t k = 0; k < n; ++k) {
      std::string t;
      print(t, b.items[k].payload);
      EXPECT_EQ((*p.constraints)[k].payload, parse_term(t, {"X", "Y"}));
    }
  }
}
