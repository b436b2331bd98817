#pragma once

// JSON encodings (schema 1). Terms are strings in the problem-file syntax.

#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "medsynth/constraints.hpp"
#include "medsynth/dsl.hpp"
#include "medsynth/orchestrator.hpp"
#include "medsynth/solver.hpp"

namespace medsynth::json_io {

using json = nlohmann::ordered_json;

inline constexpr int kSchema = 1;

inline json substitution(const Substitution& s) {
  json out = json::object();
  for (auto& [x, t] : s) out[x.head().name()] = to_string(t);
  return out;
}

/// Reads a substitution whose keys name variables of `s`.
inline Substitution substitution(const json& j, const ConstraintSystem& s) {
  if (!j.is_object()) throw std::invalid_argument("substitution must be a JSON object");
  std::map<std::string, Term> by_name;
  for (Term x : vars_of(s)) by_name.emplace(x.head().name(), x);
  Substitution::Map m;
  for (auto& [k, v] : j.items()) {
    auto it = by_name.find(k);
    if (it == by_name.end()) throw std::invalid_argument("'" + k + "' is not a variable of the system");
    if (!v.is_string()) throw std::invalid_argument("value of '" + k + "' must be a term string");
    m.emplace(it->second, parse_term(v.get<std::string>()));
  }
  return Substitution::from(std::move(m));
}

inline json step(const Step& s) {
  json j;
  switch (s.op) {
    case Step::Op::acquire: j["op"] = "acquire"; break;
    case Step::Op::fresh: j["op"] = "fresh"; break;
    case Step::Op::apply: {
      j["op"] = "apply";
      j["rule"] = s.rule;
      json p = json::array();
      for (Term t : s.premises) p.push_back(to_string(t));
      j["premises"] = p;
      break;
    }
  }
  j["term"] = to_string(s.term);
  return j;
}

inline json derivation(const Derivation& d) {
  json out = json::array();
  for (auto& s : d) out.push_back(step(s));
  return out;
}

inline json program(const MediatorProgram& p) {
  json out = json::array();
  for (auto& l : p) {
    json j;
    switch (l.op) {
      case MediatorLine::Op::recv:
        j["op"] = "recv";
        j["term"] = to_string(l.term);
        j["from"] = l.peer;
        break;
      case MediatorLine::Op::fresh:
        j["op"] = "fresh";
        j["term"] = to_string(l.term);
        break;
      case MediatorLine::Op::apply: {
        j["op"] = "apply";
        j["rule"] = l.rule;
        json ps = json::array();
        for (Term t : l.premises) ps.push_back(to_string(t));
        j["premises"] = ps;
        j["term"] = to_string(l.term);
        break;
      }
      case MediatorLine::Op::send:
        j["op"] = "send";
        j["term"] = to_string(l.term);
        j["to"] = l.peer;
        break;
    }
    out.push_back(j);
  }
  return out;
}

/// Accepts a bare step array or an object with a "mediator" or "derivation"
/// array; recv/acquire, fresh and apply steps are kept, send steps dropped.
inline Derivation derivation(const json& j) {
  const json* steps = &j;
  if (j.is_object()) {
    if (j.contains("derivation")) {
      steps = &j.at("derivation");
    } else if (j.contains("mediator")) {
      steps = &j.at("mediator");
    } else {
      throw std::invalid_argument("expected a \"derivation\" or \"mediator\" array");
    }
  }
  if (!steps->is_array()) throw std::invalid_argument("derivation must be a JSON array");
  Derivation d;
  for (auto& s : *steps) {
    std::string op = s.at("op").get<std::string>();
    Term t = parse_term(s.at("term").get<std::string>());
    if (op == "acquire" || op == "recv") {
      d.push_back(Step::acquire(t));
    } else if (op == "fresh") {
      d.push_back(Step::fresh(t));
    } else if (op == "apply") {
      std::vector<Term> prem;
      for (auto& p : s.at("premises")) prem.push_back(parse_term(p.get<std::string>()));
      d.push_back(Step::apply(s.at("rule").get<std::size_t>(), std::move(prem), t));
    } else if (op != "send") {
      throw std::invalid_argument("unknown step op '" + op + "'");
    }
  }
  return d;
}

inline json verdict(const Verdict& v) {
  json out;
  out["schema"] = kSchema;
  out["valid"] = v.ok;
  if (!v.ok) out["first_violation"] = v.first_violation;
  json detail = json::array();
  for (auto& c : v.detail) {
    json e;
    e["index"] = c.index;
    e["kind"] = to_string(c.kind);
    e["term"] = to_string(c.instance);
    e["holds"] = c.holds;
    if (c.kind == ConstraintKind::receive && c.holds) e["witness"] = derivation(c.witness);
    detail.push_back(e);
  }
  out["constraints"] = detail;
  return out;
}

inline json stats(const SolveStats& s) {
  json out;
  out["solved_forms"] = s.solved_forms;
  out["candidates"] = s.candidates;
  out["search_complete"] = s.search_complete;
  out["reference_fallback"] = s.used_fallback;
  if (s.size_bound_rejections) out["size_bound_rejections"] = s.size_bound_rejections;
  return out;
}

inline json solve_result(const SolveResult& r, const ConstraintSystem& s) {
  json out;
  out["schema"] = kSchema;
  out["verdict"] = to_string(r.status);
  if (r.solution) {
    out["substitution"] = substitution(r.solution->sigma);
    out["mediator"] = program(emit_mediator(s, r.solution->mediator));
  }
  if (!r.note.empty()) out["note"] = r.note;
  return out;
}

inline json orchestrate_result(const OrchestrateResult& r, const std::vector<Strand>& strands) {
  json out;
  out["schema"] = kSchema;
  out["verdict"] = to_string(r.status);
  if (r.chosen) {
    json il = json::array();
    for (std::size_t i = 0; i < r.chosen->origin.size(); ++i) {
      auto [k, pos] = r.chosen->origin[i];
      const auto& c = r.chosen->merged[i];
      il.push_back({{"strand", strands[k].name}, {"position", pos + 1}, {"constraint", to_string(c)}});
    }
    out["interleaving"] = il;
    out["interleaving_rank"] = r.rank;
  }
  if (r.solution) {
    out["substitution"] = substitution(r.solution->sigma);
    out["mediator"] = program(r.program);
  }
  out["stats"] = {{"interleavings_total", r.stats.total_interleavings},
                  {"interleavings_solved", r.stats.interleavings_solved},
                  {"prefixes_checked", r.stats.prefixes_checked},
                  {"prefixes_pruned", r.stats.prefixes_pruned},
                  {"heuristic_prunes", r.stats.heuristic_prunes}};
  if (!r.note.empty()) out["note"] = r.note;
  return out;
}

/// The constraint system a solution JSON refers to: the problem's
/// constraints section, or its strands merged in the recorded interleaving.
inline ConstraintSystem system_for(const Problem& p, const json& doc) {
  if (p.constraints) return *p.constraints;
  if (!doc.is_object() || !doc.contains("interleaving")) {
    throw std::invalid_argument("strand problems need the \"interleaving\" recorded by orchestrate");
  }
  std::vector<std::size_t> order;
  for (auto& e : doc.at("interleaving")) {
    std::string name = e.at("strand").get<std::string>();
    std::size_t k = 0;
    while (k < p.strands.size() && p.strands[k].name != name) ++k;
    if (k == p.strands.size()) throw std::invalid_argument("unknown strand '" + name + "'");
    order.push_back(k);
  }
  return merge(p.strands, order).merged;
}

}  // namespace medsynth::json_io
