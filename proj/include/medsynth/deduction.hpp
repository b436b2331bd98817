#pragma once

// Subterm deduction systems: rule validation, derivations and ground
// derivability.

#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "medsynth/terms.hpp"
#include "medsynth/unification.hpp"

namespace medsynth {

enum class RuleKind { composition, decomposition };

inline const char* to_string(RuleKind k) {
  return k == RuleKind::composition ? "composition" : "decomposition";
}

struct DeductionRule {
  std::vector<Term> premises;
  Term conclusion;
  RuleKind kind = RuleKind::composition;
  bool implicit = false;
};

/// A rule as written by the user, before classification.
struct RuleSpec {
  std::vector<Term> premises;
  Term conclusion;
  std::optional<RuleKind> declared;
};

struct RuleDiagnostic {
  std::size_t rule;  // 0-based position in the input list
  std::string code;  // variable-escape, non-subterm-conclusion, not-a-composition, ...
  std::string message;
};

inline constexpr const char* kBlindingSymbolName = "blind";

inline Symbol blinding_symbol() { return Symbol::function(kBlindingSymbolName, 2); }

inline bool mentions_blinding(Term t) {
  if (t.head().name() == kBlindingSymbolName) return true;
  for (Term a : t.args()) {
    if (mentions_blinding(a)) return true;
  }
  return false;
}

class DeductionSystem {
 public:
  DeductionSystem() : DeductionSystem("empty", {}) {}

  const std::string& name() const { return name_; }
  const std::vector<DeductionRule>& rules() const { return rules_; }
  const DeductionRule& rule(std::size_t i) const { return rules_.at(i); }
  std::size_t user_rule_count() const { return rules_.size() - 1; }
  std::size_t blinding_rule() const { return rules_.size() - 1; }

  const std::vector<std::size_t>& compositions_for(Symbol head) const {
    static const std::vector<std::size_t> none;
    auto it = compositions_.find(head.id());
    return it == compositions_.end() ? none : it->second;
  }
  const std::vector<std::size_t>& decompositions() const { return decompositions_; }

  /// Largest DAG size of a decomposition rule (premises and conclusion).
  std::size_t max_decomposition_size() const {
    std::size_t m = 0;
    for (auto i : decompositions_) {
      auto& r = rules_[i];
      std::vector<Term> all = r.premises;
      all.push_back(r.conclusion);
      m = std::max(m, subterms_of(all).size());
    }
    return m;
  }

  /// Rules must already be classified; use validate_system for user input.
  DeductionSystem(std::string name, std::vector<DeductionRule> rules) : name_(std::move(name)), rules_(std::move(rules)) {
    Term x1 = var("x#b1"), x2 = var("x#b2");
    rules_.push_back({{x1, x2}, Term::make(blinding_symbol(), {x1, x2}), RuleKind::composition, true});
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      if (rules_[i].kind == RuleKind::composition) {
        compositions_[rules_[i].conclusion.head().id()].push_back(i);
      } else {
        decompositions_.push_back(i);
      }
    }
  }

 private:
  std::string name_;
  std::vector<DeductionRule> rules_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> compositions_;
  std::vector<std::size_t> decompositions_;
};

struct SystemValidation {
  std::optional<DeductionSystem> system;
  std::vector<RuleDiagnostic> errors;
  explicit operator bool() const { return system.has_value(); }
};

namespace detail {
inline bool is_composition_shape(const std::vector<Term>& premises, Term r) {
  if (r.is_variable()) return false;
  TermSet sub_r = subterms(r);
  TermSet sub_l = subterms_of(premises);
  for (Term l : premises) {
    if (l == r || !sub_r.count(l)) return false;
  }
  for (Term s : sub_r) {
    if (s != r && !sub_l.count(s)) return false;
  }
  return !sub_l.count(r);
}
}  // namespace detail

/// Classifies each rule as a composition or decomposition and rejects rules
/// outside the subterm class.
inline SystemValidation validate_system(const std::string& name, const std::vector<RuleSpec>& specs) {
  SystemValidation out;
  std::vector<DeductionRule> rules;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& spec = specs[i];
    auto fail = [&](std::string code, std::string msg) { out.errors.push_back({i, std::move(code), std::move(msg)}); };
    bool blind = mentions_blinding(spec.conclusion);
    for (Term l : spec.premises) blind = blind || mentions_blinding(l);
    if (blind) {
      fail("blinding-symbol-misuse", std::string("the symbol '") + kBlindingSymbolName + "' is reserved");
      continue;
    }
    TermSet lvars = vars_of(spec.premises);
    bool escape = false;
    for (Term v : vars(spec.conclusion)) {
      if (!lvars.count(v)) {
        fail("variable-escape", "variable " + v.head().name() + " of the conclusion does not occur in a premise");
        escape = true;
        break;
      }
    }
    if (escape) continue;

    bool decomposition = subterms_of(spec.premises).count(spec.conclusion) != 0;
    bool composition = !decomposition && detail::is_composition_shape(spec.premises, spec.conclusion);
    if (!decomposition && !composition) {
      if (spec.declared == RuleKind::composition) {
        fail("not-a-composition", "premises must be proper subterms covering every proper subterm of " +
                                      to_string(spec.conclusion));
      } else {
        fail("non-subterm-conclusion", "conclusion " + to_string(spec.conclusion) + " is not a subterm of a premise");
      }
      continue;
    }
    RuleKind kind = decomposition ? RuleKind::decomposition : RuleKind::composition;
    if (spec.declared && *spec.declared != kind) {
      fail("ambiguous-kind", std::string("declared as ") + to_string(*spec.declared) + " but has the shape of a " +
                                 to_string(kind));
      continue;
    }
    rules.push_back({spec.premises, spec.conclusion, kind, false});
  }
  if (out.errors.empty()) out.system = DeductionSystem(name, std::move(rules));
  return out;
}

/// `compose f(x1..xn)` shorthand for the standard composition of f.
inline RuleSpec standard_composition(Term conclusion) {
  return {conclusion.args(), conclusion, RuleKind::composition};
}

// ---------------------------------------------------------------------------
// Derivations

struct Step {
  enum class Op { acquire, fresh, apply };
  Op op = Op::acquire;
  Term term;
  std::size_t rule = 0;
  std::vector<Term> premises;

  static Step acquire(Term t) { return {Op::acquire, t, 0, {}}; }
  static Step fresh(Term n) { return {Op::fresh, n, 0, {}}; }
  static Step apply(std::size_t rule, std::vector<Term> premises, Term conclusion) {
    return {Op::apply, conclusion, rule, std::move(premises)};
  }
  bool is_standard() const { return op != Op::acquire; }
  friend bool operator==(const Step&, const Step&) = default;
};

using Derivation = std::vector<Step>;

inline std::string to_string(const Step& s) {
  switch (s.op) {
    case Step::Op::acquire: return "?" + to_string(s.term);
    case Step::Op::fresh: return "fresh " + to_string(s.term);
    case Step::Op::apply: {
      std::string out = "r" + std::to_string(s.rule) + " [";
      for (std::size_t i = 0; i < s.premises.size(); ++i) {
        if (i) out += ", ";
        out += to_string(s.premises[i]);
      }
      return out + "] -> " + to_string(s.term);
    }
  }
  return {};
}

/// Conclusions of the first i steps.
inline TermSet rhs_set(const Derivation& d, std::size_t i) {
  if (i > d.size()) throw std::out_of_range("rhs_set: index " + std::to_string(i) + " beyond derivation");
  TermSet out;
  for (std::size_t j = 0; j < i; ++j) out.insert(d[j].term);
  return out;
}

/// 1-based index of the first acquisition strictly after i, or |D|+1.
inline std::size_t next_reception(const Derivation& d, std::size_t i) {
  for (std::size_t j = i + 1; j <= d.size(); ++j) {
    if (d[j - 1].op == Step::Op::acquire) return j;
  }
  return d.size() + 1;
}

struct DerivationCheck {
  bool ok = true;
  std::size_t step = 0;  // 1-based failing step; |D|+1 for trailing errors
  std::string reason;
  explicit operator bool() const { return ok; }
};

inline bool is_rule_instance(const DeductionRule& rule, const std::vector<Term>& premises, Term conclusion) {
  if (rule.premises.size() != premises.size()) return false;
  Substitution::Map m;
  for (std::size_t i = 0; i < premises.size(); ++i) {
    if (!match_into(rule.premises[i], premises[i], m)) return false;
  }
  return match_into(rule.conclusion, conclusion, m);
}

inline DerivationCheck check_derivation(const DeductionSystem& sys, const Derivation& d,
                                        const std::vector<Term>& allowed_acquisitions) {
  std::unordered_set<Term> have;
  std::size_t next_acq = 0;
  auto fail = [](std::size_t i, std::string why) { return DerivationCheck{false, i, std::move(why)}; };
  for (std::size_t i = 1; i <= d.size(); ++i) {
    const Step& s = d[i - 1];
    if (!s.term.valid() || !s.term.is_ground()) return fail(i, "conclusion is not a ground term");
    switch (s.op) {
      case Step::Op::acquire:
        if (next_acq >= allowed_acquisitions.size()) return fail(i, "unexpected acquisition of " + to_string(s.term));
        if (allowed_acquisitions[next_acq] != s.term) {
          return fail(i, "acquisition of " + to_string(s.term) + " but expected " +
                             to_string(allowed_acquisitions[next_acq]));
        }
        ++next_acq;
        break;
      case Step::Op::fresh:
        if (!s.term.is_nonce()) return fail(i, "fresh step on non-nonce " + to_string(s.term));
        if (have.count(s.term)) return fail(i, "nonce " + to_string(s.term) + " already used");
        break;
      case Step::Op::apply: {
        if (s.rule >= sys.rules().size()) return fail(i, "unknown rule r" + std::to_string(s.rule));
        for (Term p : s.premises) {
          if (!have.count(p)) return fail(i, "premise " + to_string(p) + " unavailable");
        }
        if (!is_rule_instance(sys.rule(s.rule), s.premises, s.term)) {
          return fail(i, "not an instance of rule r" + std::to_string(s.rule));
        }
        break;
      }
    }
    have.insert(s.term);
  }
  if (next_acq != allowed_acquisitions.size()) {
    return fail(d.size() + 1, "missing acquisition of " + to_string(allowed_acquisitions[next_acq]));
  }
  return {};
}

// ---------------------------------------------------------------------------
// Ground derivability

struct DerivabilityResult {
  bool derivable = false;
  Derivation proof;
  explicit operator bool() const { return derivable; }
};

/// Saturation-based decision procedure for t ∈ Der(K).
///
/// Decomposition conclusions are confined to the local universe Sub(K ∪ {t});
/// premises may additionally be composed on demand. A term is composable
/// from a knowledge set X if it is in X, is a nonce, or is an instance of a
/// composition rule whose premise instances are composable.
class Saturation {
 public:
  Saturation(const DeductionSystem& sys, const std::vector<Term>& knowledge, const std::vector<Term>& goals = {})
      : sys_(sys) {
    std::vector<Term> all = knowledge;
    all.insert(all.end(), goals.begin(), goals.end());
    for (Term t : all) {
      if (!t.is_ground()) throw std::invalid_argument("derivability needs ground terms: " + to_string(t));
    }
    universe_ = subterms_of(all);
    universe_list_.assign(universe_.begin(), universe_.end());
    for (Term k : knowledge) {
      if (origin_.count(k)) continue;
      origin_.emplace(k, Origin{order_.size(), true, 0, {}});
      order_.push_back(k);
      acquired_.push_back(k);
    }
    saturate();
  }

  bool composable(Term s) const { return composable(s, std::numeric_limits<std::size_t>::max()); }

  bool derivable(Term t) const { return composable(t); }

  /// Witness: acquisitions of K (in order) followed by standard steps
  /// deducing `goals`; no term is deduced twice.
  Derivation proof(const std::vector<Term>& goals) const {
    Derivation d;
    std::unordered_set<Term> emitted;
    for (Term k : acquired_) {
      d.push_back(Step::acquire(k));
      emitted.insert(k);
    }
    for (Term g : goals) emit_composable(g, std::numeric_limits<std::size_t>::max(), d, emitted);
    return d;
  }

  /// Standard steps deducing `goal`, skipping terms already in `emitted`.
  void append_proof(Term goal, Derivation& d, std::unordered_set<Term>& emitted) const {
    emit_composable(goal, std::numeric_limits<std::size_t>::max(), d, emitted);
  }

  const std::vector<Term>& known() const { return order_; }
  const TermSet& universe() const { return universe_; }

 private:
  struct Origin {
    std::size_t index;
    bool acquired;
    std::size_t rule;
    std::vector<Term> premises;
  };

  bool known_before(Term s, std::size_t limit) const {
    auto it = origin_.find(s);
    return it != origin_.end() && it->second.index < limit;
  }

  bool composable(Term s, std::size_t limit) const {
    if (known_before(s, limit) || s.is_nonce()) return true;
    return composition_for(s, limit).has_value();
  }

  std::optional<std::pair<std::size_t, std::vector<Term>>> composition_for(Term s, std::size_t limit) const {
    if (s.is_variable()) return std::nullopt;
    for (std::size_t ri : sys_.compositions_for(s.head())) {
      const auto& rule = sys_.rule(ri);
      auto m = match(rule.conclusion, s);
      if (!m) continue;
      std::vector<Term> prem;
      bool ok = true;
      for (Term l : rule.premises) {
        Term inst = apply_map(*m, l);
        if (!composable(inst, limit)) {
          ok = false;
          break;
        }
        prem.push_back(inst);
      }
      if (ok) return std::make_pair(ri, std::move(prem));
    }
    return std::nullopt;
  }

  // Bindings for premise variables not fixed by the principal premise:
  // match against the universe, falling back to a padding nonce.
  void extend_bindings(const std::vector<Term>& premises, std::size_t from, Substitution::Map& m,
                       std::vector<Substitution::Map>& out) const {
    if (from == premises.size()) {
      out.push_back(m);
      return;
    }
    Term p = apply_map(m, premises[from]);
    if (p.is_ground()) {
      extend_bindings(premises, from + 1, m, out);
      return;
    }
    bool any = false;
    for (Term u : universe_list_) {
      auto ext = match(p, u, m);
      if (!ext) continue;
      any = true;
      extend_bindings(premises, from + 1, *ext, out);
    }
    if (!any) {
      Substitution::Map padded = m;
      for (Term v : vars(p)) padded.emplace(v, padding_nonce());
      extend_bindings(premises, from + 1, padded, out);
    }
  }

  Term padding_nonce() const {
    std::string name = "n#0";
    while (universe_.count(nonce(name))) name += "0";
    return nonce(name);
  }

  void saturate() {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t ri : sys_.decompositions()) {
        const auto& rule = sys_.rule(ri);
        for (std::size_t pi = 0; pi < rule.premises.size(); ++pi) {
          Term principal = rule.premises[pi];
          if (!subterms(principal).count(rule.conclusion)) continue;
          for (Term u : universe_list_) {
            auto m = match(principal, u);
            if (!m) continue;
            Term c = apply_map(*m, rule.conclusion);
            if (origin_.count(c) || !c.is_ground()) continue;
            std::vector<Substitution::Map> bindings;
            extend_bindings(rule.premises, 0, *m, bindings);
            for (auto& b : bindings) {
              std::vector<Term> prem;
              bool ok = true;
              for (Term l : rule.premises) {
                Term inst = apply_map(b, l);
                if (!inst.is_ground() || !composable(inst)) {
                  ok = false;
                  break;
                }
                prem.push_back(inst);
              }
              if (!ok) continue;
              origin_.emplace(c, Origin{order_.size(), false, ri, std::move(prem)});
              order_.push_back(c);
              changed = true;
              break;
            }
          }
        }
      }
    }
  }

  void emit_known(Term s, Derivation& d, std::unordered_set<Term>& emitted) const {
    if (emitted.count(s)) return;
    const Origin& o = origin_.at(s);
    if (o.acquired) return;  // acquisitions are emitted up front
    for (Term p : o.premises) emit_composable(p, o.index, d, emitted);
    d.push_back(Step::apply(o.rule, o.premises, s));
    emitted.insert(s);
  }

  void emit_composable(Term s, std::size_t limit, Derivation& d, std::unordered_set<Term>& emitted) const {
    if (emitted.count(s)) return;
    if (known_before(s, limit)) {
      emit_known(s, d, emitted);
      return;
    }
    if (s.is_nonce()) {
      d.push_back(Step::fresh(s));
      emitted.insert(s);
      return;
    }
    auto c = composition_for(s, limit);
    if (!c) throw std::logic_error("witness construction: " + to_string(s) + " is not composable");
    for (Term p : c->second) emit_composable(p, limit, d, emitted);
    d.push_back(Step::apply(c->first, c->second, s));
    emitted.insert(s);
  }

  const DeductionSystem& sys_;
  TermSet universe_;
  std::vector<Term> universe_list_;
  std::unordered_map<Term, Origin> origin_;
  std::vector<Term> order_;
  std::vector<Term> acquired_;
};

inline DerivabilityResult derivable(const DeductionSystem& sys, const std::vector<Term>& knowledge, Term goal,
                                    bool with_proof = true) {
  Saturation sat(sys, knowledge, {goal});
  DerivabilityResult r;
  r.derivable = sat.derivable(goal);
  if (r.derivable && with_proof) r.proof = sat.proof({goal});
  return r;
}

}  // namespace medsynth
