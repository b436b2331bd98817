#pragma once

// Constraint systems and the verification kernel. Everything the solver
// reports is re-checked here against ground derivability.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "medsynth/deduction.hpp"
#include "medsynth/terms.hpp"

namespace medsynth {

enum class ConstraintKind { send, receive, forbid };

inline char sigil(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::send: return '!';
    case ConstraintKind::receive: return '?';
    case ConstraintKind::forbid: return '#';
  }
  return '?';
}

inline const char* to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::send: return "send";
    case ConstraintKind::receive: return "receive";
    case ConstraintKind::forbid: return "forbid";
  }
  return "?";
}

struct Constraint {
  ConstraintKind kind = ConstraintKind::send;
  Term payload;
  std::string strand;  // routing label; empty outside orchestration

  static Constraint send(Term t, std::string strand = {}) { return {ConstraintKind::send, t, std::move(strand)}; }
  static Constraint receive(Term t, std::string strand = {}) { return {ConstraintKind::receive, t, std::move(strand)}; }
  static Constraint forbid(Term t, std::string strand = {}) { return {ConstraintKind::forbid, t, std::move(strand)}; }

  bool is_send() const { return kind == ConstraintKind::send; }
  bool is_receive() const { return kind == ConstraintKind::receive; }
  bool is_forbid() const { return kind == ConstraintKind::forbid; }
};

/// Constraints are addressed 1-based throughout, matching prev(i).
using ConstraintSystem = std::vector<Constraint>;

inline std::string to_string(const Constraint& c) { return std::string(1, sigil(c.kind)) + to_string(c.payload); }

inline std::string to_string(const ConstraintSystem& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += to_string(s[i]);
  }
  return out + "]";
}

inline std::vector<Term> payloads(const ConstraintSystem& s) {
  std::vector<Term> out;
  out.reserve(s.size());
  for (auto& c : s) out.push_back(c.payload);
  return out;
}

inline TermSet vars_of(const ConstraintSystem& s) { return vars_of(payloads(s)); }
inline TermSet subterms_of(const ConstraintSystem& s) { return subterms_of(payloads(s)); }

inline ConstraintSystem apply(const Substitution& sigma, const ConstraintSystem& s) {
  ConstraintSystem out = s;
  for (auto& c : out) c.payload = sigma.apply(c.payload);
  return out;
}

struct WellFormednessViolation {
  std::size_t index;
  Term variable;
  std::string rule;  // "origination" or "determination"
};

inline std::vector<WellFormednessViolation> well_formed(const ConstraintSystem& s) {
  std::vector<WellFormednessViolation> out;
  TermSet received_so_far;
  TermSet received_anywhere;
  for (auto& c : s) {
    if (c.is_receive()) detail::collect_vars(c.payload, received_anywhere);
  }
  for (std::size_t i = 1; i <= s.size(); ++i) {
    const auto& c = s[i - 1];
    if (c.is_send()) {
      for (Term x : vars(c.payload)) {
        if (!received_so_far.count(x)) out.push_back({i, x, "origination"});
      }
    } else if (c.is_forbid()) {
      for (Term x : vars(c.payload)) {
        if (!received_anywhere.count(x)) out.push_back({i, x, "determination"});
      }
    } else {
      detail::collect_vars(c.payload, received_so_far);
    }
  }
  return out;
}

/// Largest Send index ≤ i, or 0.
inline std::size_t prev_send(const ConstraintSystem& s, std::size_t i) {
  if (i < 1 || i > s.size()) throw std::out_of_range("prev_send: index " + std::to_string(i) + " out of range");
  for (std::size_t j = i; j >= 1; --j) {
    if (s[j - 1].is_send()) return j;
  }
  return 0;
}

/// Instantiated Send payloads with index ≤ i, in order.
inline std::vector<Term> knowledge_at(const ConstraintSystem& s, const Substitution& sigma, std::size_t i) {
  std::vector<Term> k;
  for (std::size_t j = 1; j <= i && j <= s.size(); ++j) {
    if (s[j - 1].is_send()) k.push_back(sigma.apply(s[j - 1].payload));
  }
  return k;
}

inline std::size_t send_count(const ConstraintSystem& s) {
  std::size_t n = 0;
  for (auto& c : s) n += c.is_send();
  return n;
}

struct ConstraintStatus {
  std::size_t index;
  ConstraintKind kind;
  Term instance;
  bool holds;
  Derivation witness;  // for satisfied Receives
};

struct Verdict {
  bool ok = true;
  std::vector<ConstraintStatus> detail;
  std::size_t first_violation = 0;  // 0 when ok
  explicit operator bool() const { return ok; }
};

inline void require_solution_shape(const ConstraintSystem& s, const Substitution& sigma) {
  if (!sigma.is_ground()) throw std::invalid_argument("substitution is not ground: " + to_string(sigma));
  TermSet xs = vars_of(s);
  if (sigma.domain() != xs) {
    std::string want;
    for (Term x : xs) want += (want.empty() ? "" : " ") + x.head().name();
    throw std::invalid_argument("substitution domain does not match the system variables {" + want + "}");
  }
}

/// Checks σ ⊨ S. With `stop_at_first`, detail ends at the first violation.
inline Verdict verify_solution(const DeductionSystem& sys, const ConstraintSystem& s, const Substitution& sigma,
                               bool stop_at_first = false, bool with_witness = true) {
  require_solution_shape(s, sigma);
  Verdict v;
  std::vector<Term> knowledge;
  for (std::size_t i = 1; i <= s.size(); ++i) {
    const auto& c = s[i - 1];
    Term t = sigma.apply(c.payload);
    if (c.is_send()) {
      knowledge.push_back(t);
      v.detail.push_back({i, c.kind, t, true, {}});
      continue;
    }
    auto r = derivable(sys, knowledge, t, with_witness && c.is_receive());
    bool holds = c.is_receive() ? r.derivable : !r.derivable;
    v.detail.push_back({i, c.kind, t, holds, c.is_receive() ? std::move(r.proof) : Derivation{}});
    if (!holds && v.ok) {
      v.ok = false;
      v.first_violation = i;
      if (stop_at_first) break;
    }
  }
  return v;
}

struct ProofCheck {
  bool ok = true;
  std::string clause;  // derivation, compliance, deadline, forbid
  std::size_t index = 0;
  std::string reason;
  explicit operator bool() const { return ok; }
};

/// Checks that (D, α) proves σ ⊨ S. α maps the k-th Send (0-based k) to a
/// 1-based step index of D.
inline ProofCheck check_compliant_proof(const DeductionSystem& sys, const ConstraintSystem& s,
                                        const Substitution& sigma, const Derivation& d,
                                        const std::vector<std::size_t>& alpha) {
  require_solution_shape(s, sigma);
  auto fail = [](std::string clause, std::size_t i, std::string why) {
    return ProofCheck{false, std::move(clause), i, std::move(why)};
  };
  std::vector<Term> sends = knowledge_at(s, sigma, s.size());
  if (auto dc = check_derivation(sys, d, sends); !dc) return fail("derivation", dc.step, dc.reason);

  if (alpha.size() != sends.size()) {
    return fail("compliance", 0, "mapping covers " + std::to_string(alpha.size()) + " of " +
                                     std::to_string(sends.size()) + " sends");
  }
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    if (k > 0 && alpha[k] <= alpha[k - 1]) return fail("compliance", k + 1, "mapping is not strictly increasing");
    if (alpha[k] < 1 || alpha[k] > d.size()) return fail("compliance", k + 1, "mapping points outside the derivation");
    const Step& st = d[alpha[k] - 1];
    if (st.op != Step::Op::acquire || st.term != sends[k]) {
      return fail("compliance", k + 1, "step " + std::to_string(alpha[k]) + " does not acquire " + to_string(sends[k]));
    }
  }

  // Send index → ordinal among sends.
  std::vector<std::size_t> ordinal(s.size() + 1, 0);
  for (std::size_t i = 1, k = 0; i <= s.size(); ++i) {
    if (s[i - 1].is_send()) ordinal[i] = ++k;
  }
  std::vector<Term> knowledge;
  for (std::size_t i = 1; i <= s.size(); ++i) {
    const auto& c = s[i - 1];
    Term t = sigma.apply(c.payload);
    if (c.is_send()) {
      knowledge.push_back(t);
      continue;
    }
    std::size_t p = prev_send(s, i);
    std::size_t start = p == 0 ? 0 : alpha[ordinal[p] - 1];
    std::size_t deadline = next_reception(d, start);  // deduced strictly before
    TermSet before = rhs_set(d, deadline - 1);
    if (c.is_receive() && !before.count(t)) {
      return fail("deadline", i, to_string(t) + " is not deduced before step " + std::to_string(deadline));
    }
    if (c.is_forbid()) {
      if (before.count(t)) return fail("forbid", i, to_string(t) + " is deduced before step " + std::to_string(deadline));
      if (derivable(sys, knowledge, t, false)) return fail("forbid", i, to_string(t) + " is derivable");
    }
  }
  return {};
}

}  // namespace medsynth
