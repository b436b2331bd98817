#pragma once

// Syntactic unification and one-way matching.
//
// unify() solves an equation set on the term DAG with a union-find over
// equivalence classes (Martelli-Montanari/Huet style), then runs a single
// occurs check as cycle detection on the class graph. The resulting mgu is
// idempotent and only mentions variables of the input system.

#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "medsynth/terms.hpp"

namespace medsynth {

using Equation = std::pair<Term, Term>;
using UnificationSystem = std::vector<Equation>;

enum class UnifyFailure { none, clash, occurs_check };

struct UnifyResult {
  std::optional<Substitution> theta;
  UnifyFailure failure = UnifyFailure::none;

  explicit operator bool() const { return theta.has_value(); }
  const Substitution& operator*() const { return *theta; }
  const Substitution* operator->() const { return &*theta; }
};

namespace detail {

class UnionFind {
 public:
  std::size_t add(Term t) {
    auto [it, inserted] = index_.emplace(t, nodes_.size());
    if (inserted) {
      nodes_.push_back(t);
      parent_.push_back(it->second);
      schema_.push_back(t.is_variable() ? std::optional<Term>{} : std::optional<Term>{t});
      for (Term a : t.args()) add(a);
    }
    return it->second;
  }

  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  std::size_t index(Term t) const { return index_.at(t); }
  Term node(std::size_t i) const { return nodes_[i]; }
  std::size_t size() const { return nodes_.size(); }
  const std::optional<Term>& schema(std::size_t cls) const { return schema_[cls]; }

  // Returns false on a head clash.
  bool unify(std::size_t a, std::size_t b) {
    std::vector<std::pair<std::size_t, std::size_t>> work{{a, b}};
    while (!work.empty()) {
      auto [x, y] = work.back();
      work.pop_back();
      x = find(x);
      y = find(y);
      if (x == y) continue;
      const auto sx = schema_[x];
      const auto sy = schema_[y];
      if (sx && sy) {
        if (sx->head() != sy->head()) return false;
        parent_[y] = x;
        for (std::size_t i = 0; i < sx->arity(); ++i) {
          work.emplace_back(index(sx->arg(i)), index(sy->arg(i)));
        }
      } else if (sx) {
        parent_[y] = x;
      } else {
        parent_[x] = y;
      }
    }
    return true;
  }

 private:
  std::unordered_map<Term, std::size_t> index_;
  std::vector<Term> nodes_;
  std::vector<std::size_t> parent_;
  std::vector<std::optional<Term>> schema_;
};

}  // namespace detail

inline UnifyResult unify(const UnificationSystem& system) {
  detail::UnionFind uf;
  for (auto& [l, r] : system) {
    uf.add(l);
    uf.add(r);
  }
  for (auto& [l, r] : system) {
    if (!uf.unify(uf.index(l), uf.index(r))) return {std::nullopt, UnifyFailure::clash};
  }

  const std::size_t n = uf.size();
  // Representative variable of a schema-less class: smallest interning id,
  // so the variable with the larger id gets bound.
  std::vector<std::optional<Term>> rep_var(n);
  for (std::size_t i = 0; i < n; ++i) {
    Term t = uf.node(i);
    if (!t.is_variable()) continue;
    auto c = uf.find(i);
    if (!rep_var[c] || t.head().id() < rep_var[c]->head().id()) rep_var[c] = t;
  }

  // Occurs check: the class graph (class -> classes of its schema's args)
  // must be acyclic.
  enum class Mark : unsigned char { white, grey, black };
  std::vector<Mark> mark(n, Mark::white);
  std::vector<std::optional<Term>> resolved(n);
  bool cyclic = false;

  auto resolve = [&](auto&& self, std::size_t cls) -> Term {
    if (resolved[cls]) return *resolved[cls];
    if (mark[cls] == Mark::grey) {
      cyclic = true;
      return uf.node(cls);
    }
    mark[cls] = Mark::grey;
    Term out;
    if (const auto& s = uf.schema(cls)) {
      std::vector<Term> args;
      args.reserve(s->arity());
      for (Term a : s->args()) {
        args.push_back(self(self, uf.find(uf.index(a))));
        if (cyclic) return uf.node(cls);
      }
      out = Term::make(s->head(), std::move(args));
    } else {
      out = *rep_var[cls];
    }
    mark[cls] = Mark::black;
    resolved[cls] = out;
    return out;
  };

  Substitution theta;
  for (std::size_t i = 0; i < n; ++i) {
    Term t = uf.node(i);
    if (!t.is_variable()) continue;
    Term value = resolve(resolve, uf.find(i));
    if (cyclic) return {std::nullopt, UnifyFailure::occurs_check};
    theta.bind_unchecked(t, value);
  }
  return {std::move(theta), UnifyFailure::none};
}

inline UnifyResult unify(Term a, Term b) { return unify(UnificationSystem{{a, b}}); }

/// Extends `sigma` so that pattern·sigma == target. `target` may contain
/// variables; they are treated as constants. Returns false (leaving sigma
/// in an unspecified state) when no such extension exists.
inline bool match_into(Term pattern, Term target, Substitution::Map& sigma) {
  if (pattern.is_variable()) {
    auto [it, inserted] = sigma.emplace(pattern, target);
    return inserted || it->second == target;
  }
  if (pattern.is_ground()) return pattern == target;
  if (pattern.head() != target.head()) return false;
  for (std::size_t i = 0; i < pattern.arity(); ++i) {
    if (!match_into(pattern.arg(i), target.arg(i), sigma)) return false;
  }
  return true;
}

inline std::optional<Substitution::Map> match(Term pattern, Term target,
                                              Substitution::Map seed = {}) {
  if (!match_into(pattern, target, seed)) return std::nullopt;
  return seed;
}

/// Applies a raw binding map (not necessarily idempotent, e.g. a matcher
/// whose values mention pattern variables) in one pass.
inline Term apply_map(const Substitution::Map& m, Term t) {
  if (t.is_ground() || m.empty()) return t;
  if (t.is_variable()) {
    auto it = m.find(t);
    return it == m.end() ? t : it->second;
  }
  std::vector<Term> args;
  args.reserve(t.arity());
  for (Term a : t.args()) args.push_back(apply_map(m, a));
  return Term::make(t.head(), std::move(args));
}

inline TermSet subterms_of(const UnificationSystem& u) {
  TermSet out;
  for (auto& [l, r] : u) {
    detail::collect_subterms(l, out);
    detail::collect_subterms(r, out);
  }
  return out;
}

inline TermSet vars_of(const UnificationSystem& u) {
  TermSet out;
  for (auto& [l, r] : u) {
    detail::collect_vars(l, out);
    detail::collect_vars(r, out);
  }
  return out;
}

/// For every p in Sub(img θ), some q in Sub(U) with qθ = p. Totality is a
/// property of mgus; a missing witness means the unifier is broken.
inline std::map<Term, Term> mgu_subterm_image(const Substitution& theta, const UnificationSystem& u) {
  std::unordered_map<Term, Term> by_image;
  for (Term q : subterms_of(u)) by_image.emplace(theta.apply(q), q);
  std::map<Term, Term> witness;
  for (Term p : subterms_of(theta.image())) {
    auto it = by_image.find(p);
    if (it == by_image.end()) {
      throw std::logic_error("mgu_subterm_image: no witness for " + to_string(p));
    }
    witness.emplace(p, it->second);
  }
  return witness;
}

/// Finds τ with xσ = (xθ)τ for every variable x in `over`, i.e. σ = θτ on
/// those variables. Used to witness most-generality. τ is a raw map since it
/// need not be idempotent.
inline std::optional<Substitution::Map> factor_through(const Substitution& theta, const Substitution& sigma,
                                                       const TermSet& over) {
  Substitution::Map tau;
  for (Term x : over) {
    if (!match_into(theta.apply(x), sigma.apply(x), tau)) return std::nullopt;
  }
  return tau;
}

inline bool unifies(const Substitution& s, const UnificationSystem& u) {
  for (auto& [l, r] : u) {
    if (s.apply(l) != s.apply(r)) return false;
  }
  return true;
}

}  // namespace medsynth
