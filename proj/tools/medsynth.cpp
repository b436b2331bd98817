// medsynth: command-line front end.
//
// Exit codes: 0 SAT/YES/valid, 1 UNSAT/NO/invalid, 2 usage or parse error,
// 3 search exhausted.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "medsynth/json_io.hpp"

namespace {

using namespace medsynth;
using json = json_io::json;

constexpr int kOk = 0;
constexpr int kNo = 1;
constexpr int kUsage = 2;
constexpr int kExhausted = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Problem load(const std::string& path) {
  try {
    return parse_problem(read_file(path));
  } catch (const ParseError& e) {
    throw UsageError(path + ":" + e.what());
  }
}

json load_json(const std::string& arg) {
  std::string text = arg;
  if (!arg.empty() && arg.front() != '{' && arg.front() != '[') {
    text = arg == "-" ? std::string(std::istreambuf_iterator<char>(std::cin), {}) : read_file(arg);
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("invalid JSON: ") + e.what());
  }
}

int exit_code(SolveStatus s) {
  switch (s) {
    case SolveStatus::sat: return kOk;
    case SolveStatus::unsat: return kNo;
    case SolveStatus::exhausted: return kExhausted;
  }
  return kExhausted;
}

void print_solution(const Substitution& sigma, const MediatorProgram& program) {
  for (auto& [x, t] : sigma) std::cout << "  " << x.head().name() << " = " << to_string(t) << "\n";
  std::cout << "mediator:\n";
  for (auto& l : program) std::cout << "  " << to_string(l) << "\n";
}

struct Options {
  std::string file;
  std::string knowledge;
  std::string goal;
  bool proof = false;
  std::string mode = "reduction";
  std::uint64_t seed = 0;
  bool json_out = false;
  std::size_t jobs = 1;
  std::uint64_t max_interleavings = 0;
  std::string solution;
  std::string derivation;
};

SolverConfig solver_config(const Options& o) {
  SolverConfig cfg;
  cfg.mode = o.mode == "reference" ? SolveMode::reference : SolveMode::reduction;
  cfg.seed = o.seed;
  if (const char* env = std::getenv("MEDSYNTH_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("MEDSYNTH_SEED is not a number: ") + env);
    }
  }
  cfg.jobs = o.jobs;
  return cfg;
}

int cmd_derivable(const Options& o) {
  Problem p = load(o.file);
  std::vector<Term> k = o.knowledge.empty() ? std::vector<Term>{} : parse_term_list(o.knowledge);
  Term goal = parse_term(o.goal);
  auto r = derivable(p.system, k, goal, o.proof);
  if (o.json_out) {
    json out;
    out["schema"] = json_io::kSchema;
    out["derivable"] = r.derivable;
    if (r.derivable && o.proof) out["derivation"] = json_io::derivation(r.proof);
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << (r.derivable ? "YES" : "NO") << "\n";
    for (auto& s : r.proof) std::cout << "  " << to_string(s) << "\n";
  }
  return r.derivable ? kOk : kNo;
}

int orchestrate_and_report(const Problem& p, const Options& o) {
  OrchestrateConfig cfg;
  cfg.solver = solver_config(o);
  cfg.max_interleavings = o.max_interleavings;
  auto r = orchestrate(p.system, p.strands, cfg);
  if (o.json_out) {
    std::cout << json_io::orchestrate_result(r, p.strands).dump(2) << "\n";
  } else {
    std::cout << to_string(r.status) << "\n";
    if (r.chosen) {
      std::cout << "interleaving (rank " << r.rank << "):\n";
      for (std::size_t i = 0; i < r.chosen->merged.size(); ++i) {
        std::cout << "  " << p.strands[r.chosen->origin[i].first].name << " " << to_string(r.chosen->merged[i])
                  << "\n";
      }
    }
    if (r.solution) print_solution(r.solution->sigma, r.program);
    if (!r.note.empty()) std::cout << "note: " << r.note << "\n";
  }
  return exit_code(r.status);
}

int cmd_solve(const Options& o) {
  Problem p = load(o.file);
  if (!p.constraints) return orchestrate_and_report(p, o);
  const ConstraintSystem& s = *p.constraints;
  SolveResult r;
  try {
    r = solve(p.system, s, solver_config(o));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (o.json_out) {
    json out = json_io::solve_result(r, s);
    out["stats"] = json_io::stats(r.stats);
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << to_string(r.status) << "\n";
    if (r.solution) print_solution(r.solution->sigma, emit_mediator(s, r.solution->mediator));
    if (!r.note.empty()) std::cout << "note: " << r.note << "\n";
  }
  return exit_code(r.status);
}

int cmd_orchestrate(const Options& o) {
  Problem p = load(o.file);
  if (p.strands.empty()) throw UsageError(o.file + " has no strands");
  return orchestrate_and_report(p, o);
}

int cmd_verify(const Options& o) {
  Problem p = load(o.file);
  json doc = load_json(o.solution);
  ConstraintSystem s;
  Substitution sigma;
  try {
    s = json_io::system_for(p, doc);
    const json& sub = doc.is_object() && doc.contains("substitution") ? doc.at("substitution") : doc;
    sigma = json_io::substitution(sub, s);
    require_solution_shape(s, sigma);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  Verdict v = verify_solution(p.system, s, sigma);
  if (o.json_out) {
    std::cout << json_io::verdict(v).dump(2) << "\n";
  } else {
    std::cout << (v.ok ? "valid" : "invalid") << "\n";
    for (auto& c : v.detail) {
      std::cout << "  " << c.index << " " << sigil(c.kind) << to_string(c.instance) << " "
                << (c.holds ? "ok" : "VIOLATED") << "\n";
    }
    if (!v.ok) std::cout << "first violation: " << v.first_violation << "\n";
  }
  return v.ok ? kOk : kNo;
}

int cmd_check_derivation(const Options& o) {
  Problem p = load(o.file);
  Derivation d;
  try {
    d = json_io::derivation(load_json(o.derivation));
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  // Without --knowledge the acquisitions themselves are taken as given.
  std::vector<Term> allowed;
  if (!o.knowledge.empty()) {
    allowed = parse_term_list(o.knowledge);
  } else {
    for (auto& st : d) {
      if (st.op == Step::Op::acquire) allowed.push_back(st.term);
    }
  }
  DerivationCheck c = check_derivation(p.system, d, allowed);
  if (o.json_out) {
    json out;
    out["schema"] = json_io::kSchema;
    out["valid"] = c.ok;
    if (!c.ok) {
      out["step"] = c.step;
      out["reason"] = c.reason;
    }
    std::cout << out.dump(2) << "\n";
  } else if (c.ok) {
    std::cout << "valid (" << d.size() << " steps)\n";
  } else {
    std::cout << "invalid at step " << c.step << ": " << c.reason << "\n";
  }
  return c.ok ? kOk : kNo;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mediator synthesis for deducibility constraints with non-disclosure"};
  app.require_subcommand(1);
  Options o;

  auto* der = app.add_subcommand("derivable", "decide whether a goal is derivable from a knowledge set");
  der->add_option("file", o.file, "problem file")->required();
  der->add_option("--knowledge", o.knowledge, "comma-separated terms");
  der->add_option("--goal", o.goal, "goal term")->required();
  der->add_flag("--proof", o.proof, "print a derivation");
  der->add_flag("--json", o.json_out);

  auto* sol = app.add_subcommand("solve", "solve the constraints section (strand files are orchestrated)");
  sol->add_option("file", o.file)->required();
  sol->add_option("--mode", o.mode)->check(CLI::IsMember({"reduction", "reference"}));
  sol->add_option("--seed", o.seed, "0 keeps the deterministic candidate order");
  sol->add_option("--jobs", o.jobs)->check(CLI::PositiveNumber);
  sol->add_option("--max-interleavings", o.max_interleavings);
  sol->add_flag("--json", o.json_out);

  auto* orc = app.add_subcommand("orchestrate", "find a satisfiable interleaving of the strands");
  orc->add_option("file", o.file)->required();
  orc->add_option("--max-interleavings", o.max_interleavings, "0 = unbounded");
  orc->add_option("--mode", o.mode)->check(CLI::IsMember({"reduction", "reference"}));
  orc->add_option("--seed", o.seed);
  orc->add_option("--jobs", o.jobs)->check(CLI::PositiveNumber);
  orc->add_flag("--json", o.json_out);

  auto* ver = app.add_subcommand("verify", "check a substitution against the constraints");
  ver->add_option("file", o.file)->required();
  ver->add_option("--solution", o.solution, "JSON file, inline JSON, or - for stdin")->required();
  ver->add_flag("--json", o.json_out);

  auto* chk = app.add_subcommand("check-derivation", "replay a derivation");
  chk->add_option("file", o.file)->required();
  chk->add_option("--derivation", o.derivation, "JSON file, inline JSON, or - for stdin")->required();
  chk->add_option("--knowledge", o.knowledge, "terms acquisitions must come from");
  chk->add_flag("--json", o.json_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*der) return cmd_derivable(o);
    if (*sol) return cmd_solve(o);
    if (*orc) return cmd_orchestrate(o);
    if (*ver) return cmd_verify(o);
    if (*chk) return cmd_check_derivation(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
