#pragma once

// Orchestration: pick an order-preserving interleaving of per-service
// strands whose merged constraint system is satisfiable, and turn the proof
// into a routed mediator program.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "medsynth/constraints.hpp"
#include "medsynth/dsl.hpp"
#include "medsynth/solver.hpp"

namespace medsynth {

struct Orchestration {
  std::vector<std::size_t> order;  // strand index at each merged position
  ConstraintSystem merged;
  std::vector<std::pair<std::size_t, std::size_t>> origin;  // (strand, position within strand), 0-based
};

inline Orchestration merge(const std::vector<Strand>& strands, const std::vector<std::size_t>& order) {
  Orchestration o;
  o.order = order;
  std::vector<std::size_t> taken(strands.size(), 0);
  for (std::size_t k : order) {
    if (k >= strands.size() || taken[k] >= strands[k].items.size()) {
      throw std::invalid_argument("interleaving does not match strand lengths");
    }
    o.origin.emplace_back(k, taken[k]);
    o.merged.push_back(strands[k].items[taken[k]++]);
  }
  for (std::size_t k = 0; k < strands.size(); ++k) {
    if (taken[k] != strands[k].items.size()) throw std::invalid_argument("interleaving omits part of a strand");
  }
  return o;
}

/// Number of order-preserving shuffles (multinomial of strand lengths).
inline std::uint64_t count_interleavings(const std::vector<Strand>& strands) {
  std::uint64_t total = 1;
  std::uint64_t n = 0;
  for (auto& s : strands) {
    for (std::uint64_t k = 1; k <= s.items.size(); ++k) {
      ++n;
      total = total * n / k;  // running binomial product stays integral
    }
  }
  return total;
}

/// Lexicographic rank of an interleaving among all shuffles (0-based).
inline std::uint64_t interleaving_rank(const std::vector<Strand>& strands, const std::vector<std::size_t>& order) {
  std::vector<std::size_t> left;
  for (auto& s : strands) left.push_back(s.items.size());
  auto count = [&] {
    std::vector<Strand> rest(strands.size());
    for (std::size_t k = 0; k < strands.size(); ++k) rest[k].items.resize(left[k]);
    return count_interleavings(rest);
  };
  std::uint64_t rank = 0;
  for (std::size_t k : order) {
    for (std::size_t smaller = 0; smaller < k; ++smaller) {
      if (left[smaller] == 0) continue;
      --left[smaller];
      rank += count();
      ++left[smaller];
    }
    --left[k];
  }
  return rank;
}

/// Calls `visit` on every interleaving in lexicographic order of strand
/// indices until it returns false.
inline void for_each_interleaving(const std::vector<Strand>& strands,
                                  const std::function<bool(const Orchestration&)>& visit) {
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < strands.size(); ++k) order.insert(order.end(), strands[k].items.size(), k);
  do {
    if (!visit(merge(strands, order))) return;
  } while (std::next_permutation(order.begin(), order.end()));
}

inline std::vector<Orchestration> interleavings(const std::vector<Strand>& strands) {
  std::vector<Orchestration> out;
  for_each_interleaving(strands, [&](const Orchestration& o) {
    out.push_back(o);
    return true;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Mediator programs

struct MediatorLine {
  enum class Op { recv, fresh, apply, send };
  Op op;
  Term term;
  std::string peer;  // recv: sender strand; send: recipient strand
  std::size_t rule = 0;
  std::vector<Term> premises;
};

using MediatorProgram = std::vector<MediatorLine>;

/// Routes a proof: acquisitions become `recv` from the sending strand and
/// each Receive becomes a `send` at the end of the block where it is due.
inline MediatorProgram emit_mediator(const ConstraintSystem& s, const Mediator& m) {
  MediatorProgram out;
  std::vector<std::size_t> send_at;  // k-th send -> constraint index
  for (std::size_t i = 1; i <= s.size(); ++i) {
    if (s[i - 1].is_send()) send_at.push_back(i);
  }
  std::size_t next_constraint = 1;
  auto flush_until = [&](std::size_t limit) {
    for (; next_constraint <= limit; ++next_constraint) {
      const auto& c = s[next_constraint - 1];
      if (!c.is_receive()) continue;
      const Step& st = m.steps.at(m.due.at(next_constraint - 1) - 1);
      out.push_back({MediatorLine::Op::send, st.term, c.strand, 0, {}});
    }
  };
  std::size_t k = 0;
  for (std::size_t j = 1; j <= m.steps.size(); ++j) {
    const Step& st = m.steps[j - 1];
    switch (st.op) {
      case Step::Op::acquire: {
        flush_until(send_at.at(k) - 1);
        out.push_back({MediatorLine::Op::recv, st.term, s[send_at[k] - 1].strand, 0, {}});
        ++k;
        break;
      }
      case Step::Op::fresh: out.push_back({MediatorLine::Op::fresh, st.term, {}, 0, {}}); break;
      case Step::Op::apply: out.push_back({MediatorLine::Op::apply, st.term, {}, st.rule, st.premises}); break;
    }
  }
  flush_until(s.size());
  return out;
}

inline Derivation strip_routing(const MediatorProgram& p) {
  Derivation d;
  for (auto& l : p) {
    switch (l.op) {
      case MediatorLine::Op::recv: d.push_back(Step::acquire(l.term)); break;
      case MediatorLine::Op::fresh: d.push_back(Step::fresh(l.term)); break;
      case MediatorLine::Op::apply: d.push_back(Step::apply(l.rule, l.premises, l.term)); break;
      case MediatorLine::Op::send: break;
    }
  }
  return d;
}

inline std::string to_string(const MediatorLine& l) {
  switch (l.op) {
    case MediatorLine::Op::recv: return "recv " + to_string(l.term) + " from " + l.peer;
    case MediatorLine::Op::fresh: return "fresh " + to_string(l.term);
    case MediatorLine::Op::send: return "send " + to_string(l.term) + " to " + l.peer;
    case MediatorLine::Op::apply: return to_string(Step::apply(l.rule, l.premises, l.term)).insert(0, "apply ");
  }
  return {};
}

inline std::string to_text(const MediatorProgram& p) {
  std::string out;
  for (auto& l : p) out += to_string(l) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Search

struct OrchestrateConfig {
  SolverConfig solver;
  std::uint64_t max_interleavings = 0;  // full interleavings solved; 0 = unbounded
  bool prune = true;
};

struct OrchestrateStats {
  std::uint64_t interleavings_solved = 0;
  std::uint64_t prefixes_checked = 0;
  std::uint64_t prefixes_pruned = 0;
  std::uint64_t heuristic_prunes = 0;  // pruned on EXHAUSTED rather than UNSAT
  std::uint64_t total_interleavings = 0;
  bool any_exhausted = false;
};

struct OrchestrateResult {
  SolveStatus status = SolveStatus::unsat;
  std::optional<Orchestration> chosen;
  std::uint64_t rank = 0;
  std::optional<Solution> solution;
  MediatorProgram program;
  OrchestrateStats stats;
  std::string note;
};

namespace detail {

/// Prefix used for pruning: Forbids whose variables are not yet received
/// are dropped, everything else is kept.
inline ConstraintSystem prunable_prefix(const ConstraintSystem& prefix) {
  TermSet received;
  for (auto& c : prefix) {
    if (c.is_receive()) detail::collect_vars(c.payload, received);
  }
  ConstraintSystem out;
  for (auto& c : prefix) {
    if (c.is_forbid()) {
      bool determined = true;
      for (Term x : vars(c.payload)) determined = determined && received.count(x);
      if (!determined) continue;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

inline OrchestrateResult orchestrate(const DeductionSystem& sys, const std::vector<Strand>& strands,
                                     const OrchestrateConfig& cfg = {}) {
  if (strands.empty()) throw std::invalid_argument("orchestration needs at least one strand");
  OrchestrateResult res;
  res.stats.total_interleavings = count_interleavings(strands);
  SolverConfig prefix_cfg = cfg.solver;
  prefix_cfg.prove = false;
  prefix_cfg.max_equality_guesses = 0;
  prefix_cfg.complete_pass_max_subterms = prefix_cfg.fallback_max_subterms;

  std::vector<std::size_t> taken(strands.size(), 0);
  std::vector<std::size_t> order;
  ConstraintSystem prefix;
  TermSet received;
  std::size_t total = 0;
  for (auto& s : strands) total += s.items.size();
  bool done = false;

  std::function<void()> dfs = [&] {
    if (done) return;
    if (prefix.size() == total) {
      if (!well_formed(prefix).empty()) return;
      if (cfg.max_interleavings && res.stats.interleavings_solved >= cfg.max_interleavings) {
        res.stats.any_exhausted = true;
        done = true;
        return;
      }
      ++res.stats.interleavings_solved;
      SolveResult r = solve(sys, prefix, cfg.solver);
      if (r.status == SolveStatus::exhausted) res.stats.any_exhausted = true;
      if (r.sat()) {
        res.status = SolveStatus::sat;
        res.chosen = merge(strands, order);
        res.rank = interleaving_rank(strands, order);
        res.program = emit_mediator(prefix, r.solution->mediator);
        res.solution = std::move(r.solution);
        done = true;
      }
      return;
    }
    for (std::size_t k = 0; k < strands.size() && !done; ++k) {
      if (taken[k] == strands[k].items.size()) continue;
      const Constraint& c = strands[k].items[taken[k]];
      bool ok = true;
      if (c.is_send()) {
        for (Term x : vars(c.payload)) ok = ok && received.count(x);
      }
      if (!ok) continue;  // origination can never be repaired by extending the prefix
      prefix.push_back(c);
      order.push_back(k);
      ++taken[k];
      TermSet saved = received;
      if (c.is_receive()) detail::collect_vars(c.payload, received);
      bool keep = true;
      if (cfg.prune && !c.is_send() && prefix.size() < total) {
        ++res.stats.prefixes_checked;
        SolveResult r = solve(sys, detail::prunable_prefix(prefix), prefix_cfg);
        if (!r.sat()) {
          keep = false;
          ++res.stats.prefixes_pruned;
          if (r.status == SolveStatus::exhausted) ++res.stats.heuristic_prunes;
        }
      }
      if (keep) dfs();
      received = std::move(saved);
      --taken[k];
      order.pop_back();
      prefix.pop_back();
    }
  };
  dfs();

  if (res.status != SolveStatus::sat) {
    if (res.stats.any_exhausted || res.stats.heuristic_prunes > 0) {
      res.status = SolveStatus::exhausted;
      res.note = res.stats.heuristic_prunes > 0 ? "some prefixes were pruned on an inconclusive check"
                                                : "solver or interleaving bound exhausted";
    } else {
      res.status = SolveStatus::unsat;
    }
  }
  return res;
}

}  // namespace medsynth
