#pragma once

// Shared fixtures, random generators and independent oracles for the tests.

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "medsynth/json_io.hpp"

namespace medsynth::testing {

inline std::string source_path(const std::string& rel) { return std::string(MEDSYNTH_SOURCE_DIR) + "/" + rel; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Problem load_problem(const std::string& rel) { return parse_problem(slurp(source_path(rel))); }

inline Term T(const std::string& s, const std::set<std::string>& vars = {}) { return parse_term(s, vars); }

/// Dolev-Yao style system: pairing, symmetric and asymmetric
/// encryption, signatures and the parent relation.
inline DeductionSystem make_dy_system() {
  Term x = var("x"), y = var("y");
  auto f = [](const char* n, std::vector<Term> a) { return app(n, std::move(a)); };
  Term pxy = f("pair", {x, y});
  Term sxy = f("senc", {x, y});
  Term axy = f("aenc", {x, y});
  Term pry = f("priv", {y});
  Term sig = f("sig", {x, pry});
  std::vector<RuleSpec> specs = {
      standard_composition(pxy),
      standard_composition(sxy),
      standard_composition(axy),
      {{x, pry}, sig, RuleKind::composition},
      {{pxy}, x, RuleKind::decomposition},
      {{pxy}, y, RuleKind::decomposition},
      {{sxy, y}, x, RuleKind::decomposition},
      {{axy, pry}, x, RuleKind::decomposition},
      {{sig, y}, x, RuleKind::decomposition},
      {{x, f("parent", {x, y})}, y, RuleKind::decomposition},
      {{y, f("parent", {x, y})}, x, RuleKind::decomposition},
  };
  auto v = validate_system("DY", specs);
  if (!v) throw std::logic_error("DY system rejected: " + v.errors.front().message);
  return *v.system;
}

inline const DeductionSystem& dy_system() {
  static const DeductionSystem sys = make_dy_system();
  return sys;
}

inline ConstraintSystem cs(const std::string& items, const std::set<std::string>& vars = {}) {
  // Items as "! t; ? t; # t" in the problem syntax.
  ConstraintSystem out;
  std::stringstream ss(items);
  std::string part;
  while (std::getline(ss, part, ';')) {
    auto b = part.find_first_not_of(" \n\t");
    if (b == std::string::npos) continue;
    char k = part[b];
    Term t = parse_term(part.substr(b + 1), vars);
    out.push_back(k == '!' ? Constraint::send(t) : k == '?' ? Constraint::receive(t) : Constraint::forbid(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random generation

struct TermGen {
  std::mt19937_64& rng;
  std::vector<std::string> constants = {"a", "b", "c", "k"};
  std::vector<std::string> nonces = {};
  std::vector<std::string> variables = {};
  // name, arity; "sig" gets a priv(...) second argument.
  std::vector<std::pair<std::string, std::size_t>> functions = {
      {"pair", 2}, {"senc", 2}, {"aenc", 2}, {"sig", 2}, {"pk", 1}, {"priv", 1}, {"g", 1}, {"parent", 2}};

  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

  Term leaf() {
    std::size_t n = constants.size() + nonces.size() + variables.size();
    std::size_t i = pick(n);
    if (i < constants.size()) return constant(constants[i]);
    i -= constants.size();
    if (i < nonces.size()) return nonce(nonces[i]);
    return var(variables[i - nonces.size()]);
  }

  Term term(unsigned depth) {
    if (depth == 0 || coin(0.3)) return leaf();
    auto [f, n] = functions[pick(functions.size())];
    std::vector<Term> args;
    for (std::size_t i = 0; i < n; ++i) args.push_back(term(depth - 1));
    if (f == "sig") args[1] = app("priv", {term(depth > 1 ? depth - 2 : 0)});
    return app(f, std::move(args));
  }
};

// A system l ≟ r where r generalizes a copy of l, so a unifier exists.
inline UnificationSystem solvable_unification_system(TermGen& g, FreshNames& fresh) {
  UnificationSystem u;
  std::size_t n = 1 + g.pick(3);
  for (std::size_t i = 0; i < n; ++i) {
    Term l = g.term(3);
    std::function<Term(Term)> abstract = [&](Term t) -> Term {
      if (g.coin(0.25)) return fresh.variable("V");
      if (t.arity() == 0) return t;
      std::vector<Term> args;
      for (Term a : t.args()) args.push_back(abstract(a));
      return Term::make(t.head(), std::move(args));
    };
    u.emplace_back(l, abstract(l));
  }
  return u;
}

inline UnificationSystem random_unification_system(TermGen& g) {
  UnificationSystem u;
  std::size_t n = 1 + g.pick(3);
  for (std::size_t i = 0; i < n; ++i) u.emplace_back(g.term(3), g.term(3));
  return u;
}

struct DerivabilityInstance {
  std::vector<Term> knowledge;
  Term goal;
};

/// Random knowledge set and goal with |Sub(K ∪ {t})| ≤ max_subterms. Half
/// of the goals are subterms of K.
inline DerivabilityInstance random_derivability_instance(TermGen& g, std::size_t max_subterms) {
  for (;;) {
    DerivabilityInstance out;
    std::size_t m = 1 + g.pick(3);
    for (std::size_t i = 0; i < m; ++i) {
      Term t = g.term(3);
      if (std::find(out.knowledge.begin(), out.knowledge.end(), t) == out.knowledge.end()) out.knowledge.push_back(t);
    }
    if (g.coin(0.5)) {
      auto sub = subterms_of(out.knowledge);
      out.goal = *std::next(sub.begin(), static_cast<long>(g.pick(sub.size())));
    } else {
      out.goal = g.term(2);
    }
    std::vector<Term> all = out.knowledge;
    all.push_back(out.goal);
    if (subterms_of(all).size() <= max_subterms) return out;
  }
}

// ---------------------------------------------------------------------------
// Oracles

/// Brute-force derivability: fixpoint of all rule instances whose premises
/// are already known and whose conclusion lies in Sub(K ∪ {t}); nonces of
/// that set are known from the start. Complete for subterm-local systems.
inline bool bfs_derivable(const DeductionSystem& sys, const std::vector<Term>& k, Term goal) {
  std::vector<Term> all = k;
  all.push_back(goal);
  TermSet universe = subterms_of(all);
  TermSet known(k.begin(), k.end());
  for (Term u : universe) {
    if (u.is_nonce()) known.insert(u);
  }
  bool changed = true;
  while (changed && !known.count(goal)) {
    changed = false;
    std::vector<Term> kv(known.begin(), known.end());
    for (const auto& rule : sys.rules()) {
      // Enumerate premise tuples drawn from the known set.
      std::function<void(std::size_t, Substitution::Map)> go = [&](std::size_t i, Substitution::Map m) {
        if (i == rule.premises.size()) {
          Term c = apply_map(m, rule.conclusion);
          if (c.is_ground() && universe.count(c) && known.insert(c).second) changed = true;
          return;
        }
        for (Term t : kv) {
          Substitution::Map m2 = m;
          if (match_into(rule.premises[i], t, m2)) go(i + 1, std::move(m2));
        }
      };
      go(0, {});
    }
  }
  return known.count(goal) != 0;
}

/// Textbook recursive unification (apply-as-you-go), used to cross-check.
inline std::optional<Substitution::Map> robinson(UnificationSystem eqs) {
  Substitution::Map sigma;
  auto apply_all = [](const Substitution::Map& m, Term t) {
    // Iterate to a fixpoint since m is triangular.
    for (;;) {
      Term n = apply_map(m, t);
      if (n == t) return t;
      t = n;
    }
  };
  while (!eqs.empty()) {
    auto [l, r] = eqs.back();
    eqs.pop_back();
    l = apply_all(sigma, l);
    r = apply_all(sigma, r);
    if (l == r) continue;
    if (!l.is_variable() && r.is_variable()) std::swap(l, r);
    if (l.is_variable()) {
      if (occurs(l, r)) return std::nullopt;
      sigma[l] = r;
      continue;
    }
    if (l.head() != r.head()) return std::nullopt;
    for (std::size_t i = 0; i < l.arity(); ++i) eqs.emplace_back(l.arg(i), r.arg(i));
  }
  Substitution::Map solved;
  for (auto& [x, _] : sigma) solved[x] = apply_all(sigma, x);
  return solved;
}

inline void for_each_ground(const ConstraintSystem& s, const std::vector<Term>& domain,
                            const std::function<bool(const Substitution&)>& visit);

/// Ground values the brute-force oracles range over: ground subterms of S,
/// two nonces, and blind(c, n) for constants c of S.
inline std::vector<Term> brute_force_domain(const ConstraintSystem& s) {
  std::vector<Term> domain;
  TermSet seen;
  auto add = [&](Term t) {
    if (seen.insert(t).second) domain.push_back(t);
  };
  for (Term t : subterms_of(s)) {
    if (t.is_ground()) add(t);
  }
  add(nonce("bf#1"));
  add(nonce("bf#2"));
  for (Term t : subterms_of(s)) {
    if (t.is_ground() && t.arity() == 0 && !t.is_nonce()) add(app("blind", {t, nonce("bf#3")}));
  }
  return domain;
}

/// Bounded brute force over ground substitutions drawn from
/// brute_force_domain. Returns a verified σ if one exists there.
inline std::optional<Substitution> brute_force_solution(const DeductionSystem& sys, const ConstraintSystem& s) {
  std::vector<Term> domain = brute_force_domain(s);
  std::optional<Substitution> found;
  for_each_ground(s, domain, [&](const Substitution& sigma) {
    if (verify_solution(sys, s, sigma, true, false)) found = sigma;
    return !found;
  });
  return found;
}

/// Every ground substitution over `domain` for the variables of S, in a
/// fixed order; `visit` returns false to stop.
inline void for_each_ground(const ConstraintSystem& s, const std::vector<Term>& domain,
                            const std::function<bool(const Substitution&)>& visit) {
  TermSet vs = vars_of(s);
  std::vector<Term> xs(vs.begin(), vs.end());
  Substitution::Map m;
  bool stop = false;
  std::function<void(std::size_t)> go = [&](std::size_t i) {
    if (stop) return;
    if (i == xs.size()) {
      stop = !visit(Substitution::from(m));
      return;
    }
    for (Term d : domain) {
      m[xs[i]] = d;
      go(i + 1);
      if (stop) return;
    }
    m.erase(xs[i]);
  };
  go(0);
}

/// Checks the canonical shape of a solver answer: free variables map to a
/// nonce or blind(anchor payload instance, nonce), the blinding is injective
/// on the θ-instantiated localized set, and σ respects the size bound.
/// Returns an empty string when every check passes.
inline std::string canonical_shape_error(const DeductionSystem& sys, const ConstraintSystem& s,
                                         const Solution& sol, const SolverConfig& cfg) {
  const auto& b = sol.blinding;
  for (auto& [x, v] : b.values) {
    auto it = b.anchors.find(x);
    if (it == b.anchors.end()) return "no anchor for " + to_string(x);
    if (it->second == 0) {
      if (!v.is_nonce()) return to_string(x) + " should be a nonce, got " + to_string(v);
      continue;
    }
    if (v.head() != blinding_symbol() || !v.arg(1).is_nonce()) return to_string(x) + " is not blinded: " + to_string(v);
    const auto& c = s.at(it->second - 1);
    if (!c.is_send()) return "anchor of " + to_string(x) + " is not a Send";
    if (v.arg(0) != sol.sigma.apply(c.payload)) return "anchor payload mismatch for " + to_string(x);
  }
  FreshNames fresh(1);
  LocalizationSet loc = localize(sys, s, cfg.rule_copies, fresh);
  TermSet inst;
  for (Term t : loc.terms) inst.insert(sol.theta.apply(t));
  Substitution::Map bm(b.values.begin(), b.values.end());
  if (!is_injective_on(Substitution::from(bm), inst)) return "blinding is not injective on the localized set";
  if (dag_size(sol.sigma) > size_bound(s, cfg)) return "size bound exceeded";
  return {};
}

// ---------------------------------------------------------------------------
// Corpus

struct CorpusEntry {
  std::string name;
  Problem problem;
  std::string expect;  // "SAT", "UNSAT" or empty
};

inline std::vector<CorpusEntry> load_corpus() {
  std::vector<std::filesystem::path> files;
  for (auto& e : std::filesystem::directory_iterator(source_path("tests/corpus"))) {
    if (e.path().extension() == ".msl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<CorpusEntry> out;
  for (auto& f : files) {
    std::string text = slurp(f.string());
    std::string expect;
    if (auto pos = text.find("-- expect: "); pos != std::string::npos) {
      expect = text.substr(pos + 11, text.find('\n', pos) - pos - 11);
    }
    out.push_back({f.stem().string(), parse_problem(text), expect});
  }
  return out;
}

}  // namespace medsynth::testing
