#include <gtest/gtest.h>

#include "support.hpp"

using namespace medsynth;
using namespace medsynth::testing;

namespace {

SolverConfig reference_cfg() {
  SolverConfig c;
  c.mode = SolveMode::reference;
  return c;
}

std::vector<Step::Op> ops(const Derivation& d) {
  std::vector<Step::Op> out;
  for (auto& s : d) out.push_back(s.op);
  return out;
}

// Step at which t first becomes available in d, or 0.
std::size_t first_available(const Derivation& d, Term t) {
  for (std::size_t i = 1; i <= d.size(); ++i) {
    if (d[i - 1].term == t) return i;
  }
  return 0;
}

// Every instance containing a blinded variable appears strictly after the
// anchor payload it is built from.
std::string milestone_error(const DeductionSystem& sys, const ConstraintSystem& s, const Solution& sol) {
  FreshNames fresh(1);
  LocalizationSet loc = localize(sys, s, 0, fresh);
  auto ms = milestone_sequence(sol.mediator.steps, loc.terms, sol.sigma);
  for (auto& [x, j] : sol.blinding.anchors) {
    if (j == 0) continue;
    Term payload = sol.sigma.apply(s[j - 1].payload);
    std::size_t ready = first_available(sol.mediator.steps, payload);
    if (ready == 0) return "anchor payload of " + to_string(x) + " never available";
    for (auto& m : ms) {
      if (occurs(x, sol.theta.apply(m.term)) && m.step <= ready) {
        return to_string(m.term) + " available at " + std::to_string(m.step) + " before the anchor of " + to_string(x);
      }
    }
  }
  return {};
}

// Small well-formed constraint systems over the Dolev-Yao symbols.
ConstraintSystem random_system(TermGen& g) {
  ConstraintSystem s;
  std::vector<std::string> all = g.variables;
  std::size_t n = 3 + g.pick(4);
  while (s.size() < n) {
    TermSet received;
    for (auto& c : s) {
      if (c.is_receive()) received.merge(vars(c.payload));
    }
    std::size_t kind = g.pick(3);
    g.variables.clear();
    for (auto& v : all) {
      if (kind == 1 || received.count(var(v))) g.variables.push_back(v);
    }
    Term t = g.term(2);
    if (kind == 0) s.push_back(Constraint::send(t));
    if (kind == 1) s.push_back(Constraint::receive(t));
    if (kind == 2) s.push_back(Constraint::forbid(t));
  }
  g.variables = all;
  return s;
}

}  // namespace

TEST(Solve, WorkedExamples) {
  const auto& sys = dy_system();
  for (auto mode : {SolveMode::reduction, SolveMode::reference}) {
    SolverConfig cfg;
    cfg.mode = mode;
    auto r1 = solve(sys, cs("# X; ! a; ? X", {"X"}), cfg);
    ASSERT_TRUE(r1.sat());
    EXPECT_EQ(r1.solution->sigma.apply(var("X")), T("blind(a, nonce:n#1)"));

    EXPECT_EQ(solve(sys, cs("? X; # X", {"X"}), cfg).status, SolveStatus::unsat);
    EXPECT_EQ(solve(sys, cs("? Y; ! senc(a, Y); # a", {"Y"}), cfg).status, SolveStatus::unsat);

    auto r4 = solve(sys, cs("? Y; ! senc(a, Y); ? a", {"Y"}), cfg);
    ASSERT_TRUE(r4.sat());
    EXPECT_EQ(r4.solution->sigma.apply(var("Y")), T("nonce:n#1"));
  }
}

TEST(Solve, BlindedAnswerIsAcceptedAndANonceIsNot) {
  const auto& sys = dy_system();
  auto s = cs("# X; ! a; ? X", {"X"});
  EXPECT_TRUE(verify_solution(sys, s, Substitution::from({{var("X"), T("a")}})));
  EXPECT_FALSE(verify_solution(sys, s, Substitution::from({{var("X"), T("nonce:n#1")}})));
}

TEST(ExtractMediator, Examples) {
  const auto& sys = dy_system();
  auto m = extract_mediator(sys, cs("! a; ! b; ? pair(a, b)"), {});
  EXPECT_EQ(ops(m.steps), (std::vector<Step::Op>{Step::Op::acquire, Step::Op::acquire, Step::Op::apply}));
  EXPECT_EQ(m.steps.back().term, T("pair(a, b)"));
  EXPECT_EQ(m.alpha, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(m.due, (std::vector<std::size_t>{0, 0, 3}));

  auto n = extract_mediator(sys, cs("? nonce:k"), {});
  EXPECT_EQ(ops(n.steps), std::vector<Step::Op>{Step::Op::fresh});
  EXPECT_TRUE(n.alpha.empty());
}

TEST(ExtractMediator, RefusesAnUnverifiedSubstitution) {
  EXPECT_THROW(extract_mediator(dy_system(), cs("! a; ? b"), {}), std::logic_error);
}

TEST(Canonical, AnchorsAndBlinding) {
  auto s = cs("! a; ? X; ! b; ? pair(X, Y); ? Z", {"X", "Y", "Z"});
  SolvedForm sf{Substitution::from({{var("Z"), T("b")}}), 1, {}};
  EXPECT_EQ(free_variables(s, sf.theta), (std::vector<Term>{var("X"), var("Y")}));
  EXPECT_EQ(shortcut_anchor(s, sf.theta, var("X")), 1u);
  EXPECT_EQ(shortcut_anchor(s, sf.theta, var("Y")), 3u);
  EXPECT_EQ(anchor_options(s, sf.theta, var("Y")), (std::vector<std::size_t>{3, 0, 1}));
  assign_shortcut_anchors(s, sf);
  auto b = blind(sf, s);
  EXPECT_EQ(b.values.at(var("X")), T("blind(a, nonce:n#1)"));
  EXPECT_EQ(b.values.at(var("Y")), T("blind(b, nonce:n#2)"));
  EXPECT_EQ(b.sigma.apply(var("Z")), T("b"));
  EXPECT_TRUE(b.sigma.is_ground());

  auto early = cs("? X; ! a; ? Y", {"X", "Y"});
  SolvedForm sf2;
  assign_shortcut_anchors(early, sf2);
  auto b2 = blind(sf2, early);
  EXPECT_TRUE(b2.values.at(var("X")).is_nonce());
  EXPECT_EQ(b2.values.at(var("Y")).head(), blinding_symbol());
}

TEST(Canonical, AnchorPayloadIsInstantiatedFirst) {
  // Y's anchor payload mentions X, which is itself blinded.
  auto s = cs("! a; ? X; ! g(X); ? Y", {"X", "Y"});
  SolvedForm sf;
  assign_shortcut_anchors(s, sf);
  auto b = blind(sf, s);
  EXPECT_EQ(b.values.at(var("Y")), T("blind(g(blind(a, nonce:n#1)), nonce:n#2)"));
}

TEST(Solve, RejectsIllFormedInput) {
  const auto& sys = dy_system();
  EXPECT_THROW(solve(sys, cs("! X; ? X", {"X"})), std::invalid_argument);
  ConstraintSystem blinded = {Constraint::send(T("blind(a, nonce:n#1)"))};
  EXPECT_THROW(solve(sys, blinded), std::invalid_argument);
}

TEST(Solve, ReferenceModeRefusesLargeSystems) {
  const auto& sys = dy_system();
  auto s = cs("! pair(a, pair(b, pair(c, pair(d, e)))); ? X", {"X"});
  SolverConfig cfg = reference_cfg();
  cfg.reference_max_subterms = 5;
  auto r = solve(sys, s, cfg);
  EXPECT_EQ(r.status, SolveStatus::exhausted);
  EXPECT_NE(r.note.find("refuses"), std::string::npos);
  cfg.reference_max_subterms = 40;
  EXPECT_TRUE(solve(sys, s, cfg).sat());
}

TEST(Solve, SizeBound) {
  auto s = cs("! a; ? X", {"X"});
  SolverConfig cfg;
  EXPECT_EQ(size_bound(s, cfg), 4u * 2u * 2u);
  cfg.size_bound_factor = 0;
  auto r = solve(dy_system(), s, cfg);
  EXPECT_FALSE(r.sat());
  EXPECT_GT(r.stats.size_bound_rejections, 0u);
}

TEST(Solve, SeedsAndJobsAreDeterministic) {
  const auto& sys = dy_system();
  auto s = cs("! a; ! b; ? X; ! pair(X, a); # X; ? Y; # b", {"X", "Y"});
  for (std::uint64_t seed : {0u, 1u, 42u}) {
    SolverConfig cfg;
    cfg.seed = seed;
    auto a = solve(sys, s, cfg);
    auto b = solve(sys, s, cfg);
    cfg.jobs = 3;
    auto c = solve(sys, s, cfg);
    ASSERT_EQ(a.status, b.status);
    ASSERT_EQ(a.status, c.status);
    if (a.sat()) {
      EXPECT_EQ(a.solution->sigma, b.solution->sigma);
      EXPECT_EQ(a.solution->sigma, c.solution->sigma);
      EXPECT_EQ(a.solution->mediator.steps, c.solution->mediator.steps);
    }
  }
}

TEST(Solve, ReductionUsesTheShortcutAnchor) {
  for (auto& e : load_corpus()) {
    auto& s = *e.problem.constraints;
    auto r = solve(e.problem.system, s, {});
    if (!r.sat() || r.stats.used_fallback) continue;
    for (auto& [x, j] : r.solution->blinding.anchors) {
      EXPECT_EQ(j, shortcut_anchor(s, r.solution->theta, x)) << e.name;
    }
  }
}

// Corpus-wide agreement with expectations, reference mode and the oracle.
TEST(Corpus, VerdictsAgree) {
  auto corpus = load_corpus();
  ASSERT_GE(corpus.size(), 50u);
  for (auto& e : corpus) {
    SCOPED_TRACE(e.name);
    auto& s = *e.problem.constraints;
    auto& sys = e.problem.system;
    auto red = solve(sys, s, {});
    auto ref = solve(sys, s, reference_cfg());
    EXPECT_EQ(to_string(red.status), e.expect);
    EXPECT_EQ(to_string(ref.status), e.expect);
    EXPECT_EQ(brute_force_solution(sys, s).has_value(), e.expect == "SAT");
    for (auto* r : {&red, &ref}) {
      if (!r->sat()) continue;
      const Solution& sol = *r->solution;
      EXPECT_TRUE(verify_solution(sys, s, sol.sigma));
      EXPECT_TRUE(check_compliant_proof(sys, s, sol.sigma, sol.mediator.steps, sol.mediator.alpha));
      EXPECT_EQ(canonical_shape_error(sys, s, sol, {}), "");
      EXPECT_EQ(milestone_error(sys, s, sol), "");
    }
  }
}

// Dropping a Forbid only relaxes the system.
TEST(Corpus, RemovingAForbidKeepsSat) {
  for (auto& e : load_corpus()) {
    if (e.expect != "SAT") continue;
    auto& s = *e.problem.constraints;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s[i].is_forbid()) continue;
      ConstraintSystem relaxed = s;
      relaxed.erase(relaxed.begin() + static_cast<long>(i));
      EXPECT_TRUE(solve(e.problem.system, relaxed, reference_cfg()).sat()) << e.name << " without item " << i + 1;
    }
  }
}

// verify_solution accepts σ exactly when the extracted proof is compliant.
TEST(Corpus, KernelAndCompliantProofAgree) {
  std::size_t accepted = 0, rejected = 0;
  for (auto& e : load_corpus()) {
    auto& s = *e.problem.constraints;
    auto& sys = e.problem.system;
    std::size_t budget = 60;
    for_each_ground(s, brute_force_domain(s), [&](const Substitution& sigma) {
      bool v = verify_solution(sys, s, sigma, true, false).ok;
      bool p = false;
      try {
        Mediator m = extract_mediator(sys, s, sigma);
        p = static_cast<bool>(check_compliant_proof(sys, s, sigma, m.steps, m.alpha));
      } catch (const std::logic_error&) {
        p = false;
      }
      EXPECT_EQ(v, p) << e.name << " " << to_string(sigma);
      (v ? accepted : rejected)++;
      return --budget > 0;
    });
  }
  EXPECT_GT(accepted, 20u);
  EXPECT_GT(rejected, 100u);
}

// Random small systems: reduction and reference agree, and every answer
// has the canonical shape and a compliant proof.
TEST(SolveProperty, RandomSystems) {
  const auto& sys = dy_system();
  std::mt19937_64 rng(99);
  TermGen g{rng};
  g.constants = {"a", "b", "k"};
  g.variables = {"X", "Y"};
  g.functions = {{"pair", 2}, {"senc", 2}, {"g", 1}};
  std::size_t n = 0, sat = 0, checked_by_oracle = 0;
  while (n < 150) {
    ConstraintSystem s = random_system(g);
    if (!well_formed(s).empty() || subterms_of(s).size() > 12) continue;
    ++n;
    SCOPED_TRACE(to_string(s));
    auto ref = solve(sys, s, reference_cfg());
    auto red = solve(sys, s, {});
    ASSERT_NE(ref.status, SolveStatus::exhausted) << ref.note;
    ASSERT_EQ(red.status, ref.status);
    if (vars_of(s).size() <= 1 || !ref.sat()) {
      auto bf = brute_force_solution(sys, s);
      if (bf) {
        EXPECT_TRUE(ref.sat()) << "oracle found " << to_string(*bf);
      }
      ++checked_by_oracle;
    }
    for (auto* r : {&red, &ref}) {
      if (!r->sat()) continue;
      EXPECT_EQ(canonical_shape_error(sys, s, *r->solution, {}), "");
      EXPECT_EQ(milestone_error(sys, s, *r->solution), "");
      EXPECT_TRUE(check_compliant_proof(sys, s, r->solution->sigma, r->solution->mediator.steps,
                                        r->solution->mediator.alpha));
    }
    sat += ref.sat();
  }
  EXPECT_GT(sat, 30u);
  EXPECT_LT(sat, 140u);
  EXPECT_GT(checked_by_oracle, 50u);
}

TEST(EnumerateSolutions, AllVerified) {
  const auto& sys = dy_system();
  auto s = cs("! a; ! b; ? X; # pair(X, k)", {"X"});
  SolverConfig cfg;
  auto all = enumerate_solutions(sys, s, cfg);
  ASSERT_GE(all.size(), 3u);
  for (auto& sol : all) EXPECT_TRUE(verify_solution(sys, s, sol.sigma));
}
