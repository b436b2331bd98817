#pragma once

// Satisfiability of constraint systems with negative constraints.
//
// Both modes produce candidates of the same canonical shape: an equality
// guess θ, after which every remaining variable x is instantiated with
// blind(tσ, n_x) where t is an earlier Send payload (the anchor) and n_x a
// fresh nonce, or with a bare fresh nonce when nothing was sent yet. Negative
// constraints are only ever checked on these ground candidates.
//
//  * reduction: θ comes from a lazy search driven by Receive obligations
//    (compose, or unify with a subterm of something already sent), plus a
//    bounded number of extra variable equalities.
//  * reference: θ ranges over every consistent equate/separate choice for
//    pairs (x, q) with q in the localized term set, and every admissible
//    anchor is tried. Exhaustive, so only usable on small systems.

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "medsynth/constraints.hpp"
#include "medsynth/deduction.hpp"
#include "medsynth/terms.hpp"
#include "medsynth/unification.hpp"

namespace medsynth {

enum class SolveMode { reduction, reference };
enum class SolveStatus { sat, unsat, exhausted };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::sat: return "SAT";
    case SolveStatus::unsat: return "UNSAT";
    case SolveStatus::exhausted: return "EXHAUSTED";
  }
  return "?";
}

struct SolverConfig {
  SolveMode mode = SolveMode::reduction;
  std::size_t max_equality_guesses = 1;
  std::size_t size_bound_factor = 4;  // σ must satisfy dag_size ≤ factor·|Sub(S)|²
  std::size_t jobs = 1;
  std::uint64_t seed = 0;  // 0 keeps the canonical candidate order
  std::size_t rule_copies = 0;  // renamed decomposition-rule copies in the reference localization
  std::size_t reference_max_subterms = 40;
  std::size_t fallback_max_subterms = 32;  // reduction defers to reference below this size
  std::size_t complete_pass_max_subterms = std::numeric_limits<std::size_t>::max();
  std::size_t max_search_nodes = 200000;
  std::size_t max_solved_forms = 20000;
  std::size_t max_candidates = 200000;
  bool fallback = true;
  bool prove = true;  // build and check the mediator for SAT candidates
};

/// Equality guess plus the anchor of every variable left free by it.
struct SolvedForm {
  Substitution theta;  // on vars(S); images may mention rule-copy variables
  std::size_t equalities = 0;
  std::map<Term, std::size_t> anchors;
};

struct BlindingAssignment {
  std::map<Term, Term> values;  // free variable -> nonce or blind(anchor payload, nonce)
  std::map<Term, std::size_t> anchors;
  Substitution sigma;  // on vars(S)
};

struct Mediator {
  Derivation steps;
  std::vector<std::size_t> alpha;  // k-th Send -> 1-based acquire step
  std::vector<std::size_t> due;    // per constraint: step making a Receive payload available, else 0
};

struct Solution {
  Substitution sigma;
  Substitution theta;
  BlindingAssignment blinding;
  Mediator mediator;
};

struct SolveStats {
  std::size_t solved_forms = 0;
  std::size_t candidates = 0;
  std::size_t size_bound_rejections = 0;
  bool search_complete = true;
  bool used_fallback = false;
};

struct SolveResult {
  SolveStatus status = SolveStatus::unsat;
  std::optional<Solution> solution;
  SolveStats stats;
  std::string note;

  bool sat() const { return status == SolveStatus::sat; }
};

// ---------------------------------------------------------------------------
// Canonical instantiation

/// Variables of Sθ in order of first occurrence.
inline std::vector<Term> free_variables(const ConstraintSystem& s, const Substitution& theta) {
  std::vector<Term> out;
  std::unordered_set<Term> seen;
  for (auto& c : s) {
    for (Term x : vars(theta.apply(c.payload))) {
      if (seen.insert(x).second) out.push_back(x);
    }
  }
  return out;
}

/// prev of the first Receive whose payload under θ contains x.
inline std::size_t shortcut_anchor(const ConstraintSystem& s, const Substitution& theta, Term x) {
  for (std::size_t i = 1; i <= s.size(); ++i) {
    if (s[i - 1].is_receive() && occurs(x, theta.apply(s[i - 1].payload))) return prev_send(s, i);
  }
  throw std::logic_error("variable " + to_string(x) + " occurs in no Receive");
}

/// Admissible anchors for x: 0 and every Send index up to the shortcut.
inline std::vector<std::size_t> anchor_options(const ConstraintSystem& s, const Substitution& theta, Term x) {
  std::size_t limit = shortcut_anchor(s, theta, x);
  std::vector<std::size_t> out{limit};
  if (limit != 0) out.push_back(0);
  for (std::size_t j = 1; j < limit; ++j) {
    if (s[j - 1].is_send()) out.push_back(j);
  }
  return out;
}

inline void assign_shortcut_anchors(const ConstraintSystem& s, SolvedForm& sf) {
  sf.anchors.clear();
  for (Term x : free_variables(s, sf.theta)) sf.anchors[x] = shortcut_anchor(s, sf.theta, x);
}

inline Term blind_term(Term anchor, Term nonce) { return Term::make(blinding_symbol(), {anchor, nonce}); }

/// Instantiates the free variables of a solved form. Nonces are numbered
/// n#1, n#2, ... per call, so candidates are reproducible across threads.
inline BlindingAssignment blind(const SolvedForm& sf, const ConstraintSystem& s) {
  BlindingAssignment out;
  out.anchors = sf.anchors;
  FreshNames fresh(1);
  std::set<Term> in_progress;
  std::function<Term(Term)> value = [&](Term x) -> Term {
    if (auto it = out.values.find(x); it != out.values.end()) return it->second;
    auto a = sf.anchors.find(x);
    if (a == sf.anchors.end()) throw std::logic_error("no anchor for free variable " + to_string(x));
    if (!in_progress.insert(x).second) throw std::logic_error("cyclic anchors at " + to_string(x));
    Term v;
    if (a->second == 0) {
      v = fresh.nonce();
    } else {
      Term payload = sf.theta.apply(s.at(a->second - 1).payload);
      Substitution::Map inner;
      for (Term y : vars(payload)) inner.emplace(y, value(y));
      v = blind_term(apply_map(inner, payload), fresh.nonce());
    }
    in_progress.erase(x);
    out.values.emplace(x, v);
    return v;
  };
  for (Term x : free_variables(s, sf.theta)) value(x);
  Substitution::Map m;
  for (Term x : vars_of(s)) m.emplace(x, apply_map(out.values, sf.theta.apply(x)));
  out.sigma = Substitution::from(std::move(m));
  return out;
}

// ---------------------------------------------------------------------------
// Localization and milestones

struct LocalizationSet {
  TermSet terms;
  std::vector<DeductionRule> rule_copies;
};

/// Sub(S) plus up to `copies` renamed copies of each decomposition rule.
inline LocalizationSet localize(const DeductionSystem& sys, const ConstraintSystem& s, std::size_t copies,
                                FreshNames& fresh) {
  LocalizationSet out;
  out.terms = subterms_of(s);
  for (std::size_t c = 0; c < copies; ++c) {
    for (std::size_t ri : sys.decompositions()) {
      const auto& rule = sys.rule(ri);
      std::vector<Term> all = rule.premises;
      all.push_back(rule.conclusion);
      Substitution ren = rename_apart(all, fresh);
      DeductionRule copy = rule;
      for (auto& p : copy.premises) p = ren.apply(p);
      copy.conclusion = ren.apply(copy.conclusion);
      for (Term p : copy.premises) detail::collect_subterms(p, out.terms);
      out.rule_copies.push_back(std::move(copy));
    }
  }
  return out;
}

struct Milestone {
  enum class Kind { deduce, acquire };
  Kind kind;
  Term term;  // element of the localized set
  std::size_t step;
};

/// Order in which instances tσ (t ∈ T) first become available in D.
inline std::vector<Milestone> milestone_sequence(const Derivation& d, const TermSet& localized, const Substitution& sigma) {
  std::unordered_map<Term, std::vector<Term>> by_instance;
  for (Term t : localized) by_instance[sigma.apply(t)].push_back(t);
  std::vector<Milestone> out;
  std::unordered_set<Term> done;
  for (std::size_t i = 1; i <= d.size(); ++i) {
    auto it = by_instance.find(d[i - 1].term);
    if (it == by_instance.end()) continue;
    auto kind = d[i - 1].op == Step::Op::acquire ? Milestone::Kind::acquire : Milestone::Kind::deduce;
    for (Term t : it->second) {
      if (done.insert(t).second) out.push_back({kind, t, i});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mediator extraction

/// Maximal compliant derivation for a verified σ: acquisitions in Send
/// order, and after each one every derivable member of Sub(S)σ.
inline Mediator extract_mediator(const DeductionSystem& sys, const ConstraintSystem& s, const Substitution& sigma) {
  Mediator m;
  m.due.assign(s.size(), 0);
  std::vector<Term> goals;
  {
    TermSet g;
    for (Term t : subterms_of(s)) g.insert(sigma.apply(t));
    goals.assign(g.begin(), g.end());
  }
  std::unordered_set<Term> emitted;
  std::vector<Term> knowledge;
  std::size_t next = 1;  // next constraint to settle
  auto settle_until = [&](std::size_t limit) {
    for (; next <= limit; ++next) {
      const auto& c = s[next - 1];
      if (!c.is_receive()) continue;
      Term t = sigma.apply(c.payload);
      for (std::size_t j = 1; j <= m.steps.size(); ++j) {
        if (m.steps[j - 1].term == t) {
          m.due[next - 1] = j;
          break;
        }
      }
      if (m.due[next - 1] == 0) {
        throw std::logic_error("extract_mediator: " + to_string(t) + " (constraint " + std::to_string(next) +
                               ") not deduced in time");
      }
    }
  };
  auto saturate_block = [&] {
    Saturation sat(sys, knowledge, goals);
    for (Term g : goals) {
      if (!emitted.count(g) && sat.derivable(g)) sat.append_proof(g, m.steps, emitted);
    }
  };
  saturate_block();
  for (std::size_t i = 1; i <= s.size(); ++i) {
    if (!s[i - 1].is_send()) continue;
    settle_until(i - 1);
    Term t = sigma.apply(s[i - 1].payload);
    m.steps.push_back(Step::acquire(t));
    emitted.insert(t);
    m.alpha.push_back(m.steps.size());
    knowledge.push_back(t);
    saturate_block();
  }
  settle_until(s.size());
  return m;
}

// ---------------------------------------------------------------------------
// Candidate checking

inline std::string system_key(const ConstraintSystem& s, const Substitution& theta) {
  std::string key;
  for (auto& c : s) {
    key += sigil(c.kind);
    print_term(key, theta.apply(c.payload));
    key += ';';
  }
  return key;
}

inline std::size_t size_bound(const ConstraintSystem& s, const SolverConfig& cfg) {
  std::size_t n = subterms_of(s).size();
  return cfg.size_bound_factor * n * n;
}

enum class CandidateOutcome { verified, rejected, too_large };

/// Blinds, checks with the kernel, and builds the proof. Only a candidate
/// that passes every check is returned.
inline std::optional<Solution> check_candidate(const DeductionSystem& sys, const ConstraintSystem& s,
                                               const SolvedForm& sf, const SolverConfig& cfg,
                                               CandidateOutcome* outcome = nullptr) {
  auto set = [&](CandidateOutcome o) {
    if (outcome) *outcome = o;
  };
  set(CandidateOutcome::rejected);
  BlindingAssignment b = blind(sf, s);
  if (!verify_solution(sys, s, b.sigma, true, false)) return std::nullopt;
  if (dag_size(b.sigma) > size_bound(s, cfg)) {
    set(CandidateOutcome::too_large);
    return std::nullopt;
  }
  set(CandidateOutcome::verified);
  if (!cfg.prove) return Solution{b.sigma, sf.theta, std::move(b), {}};
  Mediator med = extract_mediator(sys, s, b.sigma);
  if (auto pc = check_compliant_proof(sys, s, b.sigma, med.steps, med.alpha); !pc) {
    throw std::logic_error("kernel accepted " + to_string(b.sigma) + " but the extracted proof fails (" + pc.clause +
                           " at " + std::to_string(pc.index) + "): " + pc.reason);
  }
  Solution sol{b.sigma, sf.theta, std::move(b), std::move(med)};
  return sol;
}

namespace detail {

/// Checks candidates in order with `jobs` workers; the lowest verified index
/// wins regardless of completion order.
inline std::optional<Solution> first_verified(const DeductionSystem& sys, const ConstraintSystem& s,
                                              const std::vector<SolvedForm>& forms, const SolverConfig& cfg,
                                              SolveStats& stats) {
  const std::size_t jobs = std::max<std::size_t>(1, cfg.jobs);
  for (std::size_t base = 0; base < forms.size(); base += jobs) {
    if (stats.candidates >= cfg.max_candidates) {
      stats.search_complete = false;
      return std::nullopt;
    }
    std::size_t n = std::min(jobs, forms.size() - base);
    std::vector<std::optional<Solution>> found(n);
    std::vector<CandidateOutcome> outcome(n, CandidateOutcome::rejected);
    if (n == 1) {
      found[0] = check_candidate(sys, s, forms[base], cfg, &outcome[0]);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(n);
      for (std::size_t k = 0; k < n; ++k) {
        pool.emplace_back([&, k] {
          try {
            found[k] = check_candidate(sys, s, forms[base + k], cfg, &outcome[k]);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    stats.candidates += n;
    for (std::size_t k = 0; k < n; ++k) {
      if (outcome[k] == CandidateOutcome::too_large) ++stats.size_bound_rejections;
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (found[k]) return std::move(found[k]);
    }
  }
  return std::nullopt;
}

inline void require_solvable_input(const ConstraintSystem& s) {
  if (auto v = well_formed(s); !v.empty()) {
    throw std::invalid_argument("constraint " + std::to_string(v[0].index) + " violates " + v[0].rule +
                                " for variable " + v[0].variable.head().name());
  }
  for (auto& c : s) {
    if (mentions_blinding(c.payload)) {
      throw std::invalid_argument(std::string("the symbol '") + kBlindingSymbolName + "' is reserved");
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reduction mode

struct PositiveResult {
  std::vector<SolvedForm> forms;
  bool complete = true;
};

namespace detail {

class PositiveSearch {
 public:
  /// With `analyse`, obligations unify only with terms reachable by
  /// decomposition (fast, may miss solved forms); otherwise with every sent
  /// subterm (complete).
  PositiveSearch(const DeductionSystem& sys, const ConstraintSystem& s, const SolverConfig& cfg, bool analyse)
      : sys_(sys), s_(s), cfg_(cfg), analyse_(analyse) {}

  PositiveResult run() {
    std::vector<Obligation> pending;
    for (std::size_t i = 1; i <= s_.size(); ++i) {
      if (s_[i - 1].is_receive()) pending.push_back({s_[i - 1].payload, i, 0});
    }
    explore(Substitution{}, 0, pending);
    return {std::move(forms_), complete_};
  }

 private:
  struct Obligation {
    Term term;
    std::size_t receive;
    unsigned depth;
  };
  static constexpr unsigned kMaxDepth = 24;

  void record(const Substitution& theta, std::size_t equalities) {
    if (forms_.size() >= cfg_.max_solved_forms) {
      complete_ = false;
      return;
    }
    if (!seen_forms_.insert(system_key(s_, theta)).second) return;
    SolvedForm sf{theta.restrict_to(vars_of(s_)), equalities, {}};
    assign_shortcut_anchors(s_, sf);
    forms_.push_back(std::move(sf));
  }

  void explore(const Substitution& theta, std::size_t equalities, const std::vector<Obligation>& pending) {
    if (++nodes_ > cfg_.max_search_nodes) {
      complete_ = false;
      return;
    }
    std::string key = to_string(theta) + "|";
    for (auto& o : pending) {
      key += std::to_string(o.receive) + ":";
      print_term(key, theta.apply(o.term));
      key += ';';
    }
    if (!visited_.insert(std::move(key)).second) return;
    if (pending.empty()) {
      record(theta, equalities);
      return;
    }
    const Obligation ob = pending.front();
    std::vector<Obligation> rest(pending.begin() + 1, pending.end());
    Term u = theta.apply(ob.term);
    if (u.is_variable() || u.is_nonce()) {
      explore(theta, equalities, rest);
      return;
    }
    if (ob.depth > kMaxDepth) {
      complete_ = false;
      return;
    }

    const TermSet& known = knowledge(theta, prev_send(s_, ob.receive));
    if (known.count(u)) explore(theta, equalities, rest);

    for (std::size_t ri : sys_.compositions_for(u.head())) {
      const auto& rule = sys_.rule(ri);
      std::vector<Term> all = rule.premises;
      all.push_back(rule.conclusion);
      Substitution ren = rename_apart(all, fresh_);
      auto d = unify(ren.apply(rule.conclusion), u);
      if (!d) continue;
      bool binds_existing = false;
      for (Term x : vars(u)) binds_existing = binds_existing || d->binds(x);
      Substitution next = compose(theta, *d);
      std::vector<Obligation> sub;
      for (Term l : rule.premises) sub.push_back({ren.apply(l), ob.receive, ob.depth + 1});
      sub.insert(sub.end(), rest.begin(), rest.end());
      explore(next, equalities + binds_existing, sub);
    }

    for (Term q : known) {
      if (q.is_variable() || q == u) continue;
      auto d = unify(q, u);
      if (!d) continue;
      explore(compose(theta, *d), equalities + 1, rest);
    }
  }

  // Symbolic analysis of the sends up to p under θ: decomposition closure,
  // treating variables as derivable (they were received earlier) and
  // non-ground side premises as satisfiable.
  const TermSet& knowledge(const Substitution& theta, std::size_t p) {
    std::vector<Term> sent;
    std::string key = std::to_string(p) + "|";
    for (std::size_t j = 1; j <= p; ++j) {
      if (!s_[j - 1].is_send()) continue;
      sent.push_back(theta.apply(s_[j - 1].payload));
      print_term(key, sent.back());
      key += ';';
    }
    auto [it, fresh] = analysis_.try_emplace(std::move(key));
    if (!fresh) return it->second;
    TermSet& a = it->second;
    if (!analyse_) {
      for (Term t : sent) detail::collect_subterms(t, a);
      return a;
    }
    a.insert(sent.begin(), sent.end());
    if (decomp_.empty()) {
      for (std::size_t ri : sys_.decompositions()) {
        const auto& rule = sys_.rule(ri);
        std::vector<Term> all = rule.premises;
        all.push_back(rule.conclusion);
        Substitution ren = rename_apart(all, fresh_);
        DeductionRule r = rule;
        for (auto& l : r.premises) l = ren.apply(l);
        r.conclusion = ren.apply(r.conclusion);
        decomp_.push_back(std::move(r));
      }
    }
    // Side premises may become composable once more terms are known, so
    // iterate to a fixpoint.
    for (bool changed = true; changed;) {
      changed = false;
      std::vector<Term> items(a.begin(), a.end());
      for (Term k : items) {
        for (const auto& rule : decomp_) {
          for (std::size_t pi = 0; pi < rule.premises.size(); ++pi) {
            Term principal = rule.premises[pi];
            if (!subterms(principal).count(rule.conclusion)) continue;
            auto m = match(principal, k);
            if (!m) continue;
            Term c = apply_map(*m, rule.conclusion);
            if (a.count(c)) continue;
            bool ok = true;
            for (std::size_t li = 0; li < rule.premises.size() && ok; ++li) {
              if (li == pi) continue;
              Term inst = apply_map(*m, rule.premises[li]);
              ok = !inst.is_ground() || composable_sym(inst, a);
            }
            if (ok) {
              a.insert(c);
              changed = true;
            }
          }
        }
      }
    }
    return a;
  }

  bool composable_sym(Term t, const TermSet& a) const {
    if (a.count(t) || t.is_variable() || t.is_nonce()) return true;
    for (std::size_t ri : sys_.compositions_for(t.head())) {
      auto m = match(sys_.rule(ri).conclusion, t);
      if (!m) continue;
      bool ok = true;
      for (Term l : sys_.rule(ri).premises) ok = ok && composable_sym(apply_map(*m, l), a);
      if (ok) return true;
    }
    return false;
  }

  const DeductionSystem& sys_;
  const ConstraintSystem& s_;
  const SolverConfig& cfg_;
  const bool analyse_;
  FreshNames fresh_{1};
  std::vector<DeductionRule> decomp_;
  std::unordered_map<std::string, TermSet> analysis_;
  std::unordered_set<std::string> visited_;
  std::unordered_set<std::string> seen_forms_;
  std::vector<SolvedForm> forms_;
  std::size_t nodes_ = 0;
  bool complete_ = true;
};

}  // namespace detail

/// Solved forms of the positive part (Sends and Receives) of S. The
/// analysed variant only unifies with decomposable knowledge and is not
/// complete.
inline PositiveResult reduce_positive(const DeductionSystem& sys, const ConstraintSystem& s,
                                      const SolverConfig& cfg = {}, bool analysed = false) {
  PositiveResult r = detail::PositiveSearch(sys, s, cfg, analysed).run();
  if (analysed) r.complete = false;
  return r;
}

/// Adds up to `levels` extra equalities x ≟ q, where x is free and q is a
/// non-variable subterm sent before x's anchor bound, or another free variable.
inline std::vector<SolvedForm> guess_equalities(const ConstraintSystem& s, std::vector<SolvedForm> base,
                                                std::size_t levels, std::size_t cap, bool* complete = nullptr) {
  std::unordered_set<std::string> seen;
  for (auto& sf : base) seen.insert(system_key(s, sf.theta));
  std::vector<SolvedForm> all = base;
  std::vector<SolvedForm> frontier = std::move(base);
  for (std::size_t level = 0; level < levels && !frontier.empty(); ++level) {
    std::vector<SolvedForm> next;
    for (const auto& sf : frontier) {
      auto free = free_variables(s, sf.theta);
      for (Term x : free) {
        TermSet targets;
        std::size_t limit = shortcut_anchor(s, sf.theta, x);
        for (std::size_t j = 1; j <= limit; ++j) {
          if (!s[j - 1].is_send()) continue;
          for (Term q : subterms(sf.theta.apply(s[j - 1].payload))) {
            if (!q.is_variable()) targets.insert(q);
          }
        }
        for (Term y : free) {
          if (y != x) targets.insert(y);
        }
        for (Term q : targets) {
          auto d = unify(x, q);
          if (!d) continue;
          SolvedForm ext{compose(sf.theta, *d).restrict_to(vars_of(s)), sf.equalities + 1, {}};
          if (!seen.insert(system_key(s, ext.theta)).second) continue;
          if (all.size() >= cap) {
            if (complete) *complete = false;
            return all;
          }
          assign_shortcut_anchors(s, ext);
          next.push_back(ext);
          all.push_back(std::move(ext));
        }
      }
    }
    frontier = std::move(next);
  }
  return all;
}

/// Candidate order: fewest equalities first; a nonzero seed shuffles within
/// each equality level.
inline void order_candidates(std::vector<SolvedForm>& forms, std::uint64_t seed) {
  std::stable_sort(forms.begin(), forms.end(),
                   [](const SolvedForm& a, const SolvedForm& b) { return a.equalities < b.equalities; });
  if (seed == 0) return;
  std::mt19937_64 rng(seed);
  for (auto lo = forms.begin(); lo != forms.end();) {
    auto hi = std::find_if(lo, forms.end(), [&](const SolvedForm& f) { return f.equalities != lo->equalities; });
    std::shuffle(lo, hi, rng);
    lo = hi;
  }
}

SolveResult solve_reference(const DeductionSystem& sys, const ConstraintSystem& s, const SolverConfig& cfg);

inline SolveResult solve_reduction(const DeductionSystem& sys, const ConstraintSystem& s, const SolverConfig& cfg) {
  SolveResult r;
  std::unordered_set<std::string> tried;
  auto attempt = [&](PositiveResult pos) -> std::optional<Solution> {
    bool complete = pos.complete;
    auto forms = guess_equalities(s, std::move(pos.forms), cfg.max_equality_guesses, cfg.max_solved_forms, &complete);
    if (!complete) r.stats.search_complete = false;
    order_candidates(forms, cfg.seed);
    std::vector<SolvedForm> fresh;
    for (auto& f : forms) {
      if (tried.insert(system_key(s, f.theta)).second) fresh.push_back(std::move(f));
    }
    r.stats.solved_forms += fresh.size();
    return detail::first_verified(sys, s, fresh, cfg, r.stats);
  };
  auto sat = [&](Solution sol) {
    r.status = SolveStatus::sat;
    r.solution = std::move(sol);
    return r;
  };

  // The fast pass usually finds a solution; only the complete pass may
  // conclude UNSAT.
  if (auto sol = attempt(reduce_positive(sys, s, cfg, true))) return sat(std::move(*sol));
  if (subterms_of(s).size() > cfg.complete_pass_max_subterms) {
    r.status = SolveStatus::exhausted;
    r.stats.search_complete = false;
    r.note = "fast pass found no solution; complete pass skipped for this size";
    return r;
  }
  r.stats.search_complete = true;
  PositiveResult pos = reduce_positive(sys, s, cfg, false);
  if (pos.forms.empty() && pos.complete) {
    r.status = SolveStatus::unsat;
    r.note = "positive part has no solved form";
    return r;
  }
  if (auto sol = attempt(std::move(pos))) return sat(std::move(*sol));
  if (cfg.fallback && subterms_of(s).size() <= cfg.fallback_max_subterms) {
    SolveResult ref = solve_reference(sys, s, cfg);
    ref.stats.used_fallback = true;
    ref.stats.solved_forms += r.stats.solved_forms;
    ref.stats.candidates += r.stats.candidates;
    return ref;
  }
  r.status = SolveStatus::exhausted;
  r.note = "no candidate verified and the system is too large for exhaustive search";
  return r;
}

// ---------------------------------------------------------------------------
// Reference mode

inline SolveResult solve_reference(const DeductionSystem& sys, const ConstraintSystem& s, const SolverConfig& cfg) {
  SolveResult r;
  FreshNames fresh(1);
  LocalizationSet loc = localize(sys, s, cfg.rule_copies, fresh);
  if (loc.terms.size() > cfg.reference_max_subterms) {
    r.status = SolveStatus::exhausted;
    r.stats.search_complete = false;
    r.note = "reference mode refuses " + std::to_string(loc.terms.size()) + " localized terms (limit " +
             std::to_string(cfg.reference_max_subterms) + ")";
    return r;
  }
  std::vector<std::pair<Term, Term>> pairs;
  for (Term x : vars_of(loc.terms)) {
    for (Term q : loc.terms) {
      if (q == x || (q.is_variable() && q < x)) continue;
      pairs.emplace_back(x, q);
    }
  }
  const TermSet svars = vars_of(s);

  std::optional<Solution> found;
  bool stop = false;
  std::function<void(std::size_t, const Substitution&, std::size_t, std::vector<std::pair<Term, Term>>&)> dfs =
      [&](std::size_t idx, const Substitution& theta, std::size_t eqs, std::vector<std::pair<Term, Term>>& separated) {
        if (stop) return;
        if (idx == pairs.size()) {
          ++r.stats.solved_forms;
          SolvedForm sf{theta.restrict_to(svars), eqs, {}};
          auto free = free_variables(s, sf.theta);
          std::vector<std::vector<std::size_t>> options;
          for (Term x : free) options.push_back(anchor_options(s, sf.theta, x));
          std::vector<std::size_t> pick(free.size(), 0);
          while (true) {
            for (std::size_t k = 0; k < free.size(); ++k) sf.anchors[free[k]] = options[k][pick[k]];
            if (r.stats.candidates >= cfg.max_candidates) {
              r.stats.search_complete = false;
              stop = true;
              return;
            }
            ++r.stats.candidates;
            CandidateOutcome outcome;
            if (auto sol = check_candidate(sys, s, sf, cfg, &outcome)) {
              found = std::move(sol);
              stop = true;
              return;
            }
            if (outcome == CandidateOutcome::too_large) ++r.stats.size_bound_rejections;
            std::size_t k = 0;
            while (k < pick.size() && ++pick[k] == options[k].size()) pick[k++] = 0;
            if (k == pick.size()) break;
          }
          return;
        }
        auto [x, q] = pairs[idx];
        Term xt = theta.apply(x), qt = theta.apply(q);
        if (xt == qt) {
          dfs(idx + 1, theta, eqs, separated);
          return;
        }
        separated.emplace_back(x, q);
        dfs(idx + 1, theta, eqs, separated);
        separated.pop_back();
        if (stop) return;
        if (auto d = unify(xt, qt)) {
          Substitution next = compose(theta, *d);
          bool consistent = std::all_of(separated.begin(), separated.end(),
                                        [&](auto& pr) { return next.apply(pr.first) != next.apply(pr.second); });
          if (consistent) dfs(idx + 1, next, eqs + 1, separated);
        }
      };
  std::vector<std::pair<Term, Term>> separated;
  dfs(0, Substitution{}, 0, separated);
  if (found) {
    r.status = SolveStatus::sat;
    r.solution = std::move(found);
  } else if (!r.stats.search_complete || r.stats.size_bound_rejections > 0) {
    r.status = SolveStatus::exhausted;
    r.note = r.stats.size_bound_rejections > 0 ? "candidates rejected by the size bound" : "candidate cap reached";
  } else {
    r.status = SolveStatus::unsat;
  }
  return r;
}

inline SolveResult solve(const DeductionSystem& sys, const ConstraintSystem& s, const SolverConfig& cfg = {}) {
  detail::require_solvable_input(s);
  return cfg.mode == SolveMode::reference ? solve_reference(sys, s, cfg) : solve_reduction(sys, s, cfg);
}

/// Every verified candidate of the reduction search (bounded by the config),
/// in candidate order. Used to compare solution sets of related systems.
inline std::vector<Solution> enumerate_solutions(const DeductionSystem& sys, const ConstraintSystem& s,
                                                 const SolverConfig& cfg, bool analysed = false) {
  detail::require_solvable_input(s);
  PositiveResult pos = reduce_positive(sys, s, cfg, analysed);
  auto forms = guess_equalities(s, std::move(pos.forms), cfg.max_equality_guesses, cfg.max_solved_forms);
  order_candidates(forms, cfg.seed);
  std::vector<Solution> out;
  for (std::size_t i = 0; i < forms.size() && i < cfg.max_candidates; ++i) {
    if (auto sol = check_candidate(sys, s, forms[i], cfg)) out.push_back(std::move(*sol));
  }
  return out;
}

}  // namespace medsynth
