#pragma once

// Problem-file language.
//
//   file        := section+
//   section     := system | strand | constraints | shared
//   system      := "system" ID "{" ("vars" ID+ ";")? rule* "}"
//   rule        := ("compose" term ("from" termlist)? | "decompose" termlist "->" term) ";"
//   strand      := "strand" ID "{" ("vars" ID+ ";")? item* "}"
//   constraints := "constraints" "{" ("vars" ID+ ";")? item* "}"
//   shared      := "shared" "vars" ID+ ";"
//   item        := ("!" | "?" | "#") term ";"
//   term        := ID ("(" termlist ")")? | "nonce:" ID
//
// `--` starts a comment. Identifiers declared in a `vars` clause (or in
// `shared vars` for strands) are variables; every other nullary identifier
// is a constant. Strand variables are renamed `X@Strand` unless shared.

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "medsynth/constraints.hpp"
#include "medsynth/deduction.hpp"
#include "medsynth/terms.hpp"

namespace medsynth {

struct SourcePos {
  int line = 1;
  int col = 1;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(SourcePos pos, const std::string& msg)
      : std::runtime_error(std::to_string(pos.line) + ":" + std::to_string(pos.col) + ": " + msg), pos_(pos) {}
  SourcePos pos() const { return pos_; }

 private:
  SourcePos pos_;
};

namespace ast {

struct Term {
  std::string name;
  bool nonce = false;
  std::vector<Term> args;
  SourcePos pos;
  bool operator==(const Term& o) const { return name == o.name && nonce == o.nonce && args == o.args; }
};

struct Rule {
  bool compose = true;
  bool has_from = false;
  std::vector<Term> premises;
  Term conclusion;
  SourcePos pos;
  bool operator==(const Rule& o) const {
    return compose == o.compose && has_from == o.has_from && premises == o.premises && conclusion == o.conclusion;
  }
};

struct Item {
  ConstraintKind kind;
  Term payload;
  SourcePos pos;
  bool operator==(const Item& o) const { return kind == o.kind && payload == o.payload; }
};

struct System {
  std::string name;
  std::vector<std::string> vars;
  std::vector<Rule> rules;
  SourcePos pos;
  bool operator==(const System& o) const { return name == o.name && vars == o.vars && rules == o.rules; }
};

struct Block {
  std::string name;  // empty for the constraints section
  std::vector<std::string> vars;
  std::vector<Item> items;
  SourcePos pos;
  bool operator==(const Block& o) const { return name == o.name && vars == o.vars && items == o.items; }
};

struct File {
  std::optional<System> system;
  std::vector<Block> strands;
  std::optional<Block> constraints;
  std::vector<std::string> shared_vars;
  bool operator==(const File&) const = default;
};

}  // namespace ast

namespace detail {

enum class Tok { id, nonce, lparen, rparen, lbrace, rbrace, comma, semi, bang, query, hash, arrow, eof };

struct Token {
  Tok kind;
  std::string text;
  SourcePos pos;
};

inline const char* describe(Tok t) {
  switch (t) {
    case Tok::id: return "identifier";
    case Tok::nonce: return "nonce";
    case Tok::lparen: return "'('";
    case Tok::rparen: return "')'";
    case Tok::lbrace: return "'{'";
    case Tok::rbrace: return "'}'";
    case Tok::comma: return "','";
    case Tok::semi: return "';'";
    case Tok::bang: return "'!'";
    case Tok::query: return "'?'";
    case Tok::hash: return "'#'";
    case Tok::arrow: return "'->'";
    case Tok::eof: return "end of input";
  }
  return "?";
}

inline bool id_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool id_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

/// `generated` admits names like n#3 or X@Client, which only occur in
/// solver output.
inline std::vector<Token> lex(const std::string& src, bool generated) {
  std::vector<Token> out;
  SourcePos pos;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++pos.line;
        pos.col = 1;
      } else {
        ++pos.col;
      }
    }
  };
  auto ident_at = [&](std::size_t j) {
    std::size_t e = j;
    while (e < src.size()) {
      if (id_char(src[e])) {
        ++e;
      } else if (generated && (src[e] == '#' || src[e] == '@') && e + 1 < src.size() && id_char(src[e + 1])) {
        e += 2;
      } else {
        break;
      }
    }
    return e;
  };
  while (i < src.size()) {
    char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    if (c == '-' && i + 1 < src.size() && src[i + 1] == '-') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    SourcePos start = pos;
    if (id_start(c)) {
      std::size_t e = ident_at(i);
      std::string word = src.substr(i, e - i);
      if (word == "nonce" && e < src.size() && src[e] == ':') {
        advance(e - i + 1);
        if (i >= src.size() || !id_start(src[i])) throw ParseError(pos, "expected identifier after 'nonce:'");
        std::size_t e2 = ident_at(i);
        out.push_back({Tok::nonce, src.substr(i, e2 - i), start});
        advance(e2 - i);
        continue;
      }
      out.push_back({Tok::id, word, start});
      advance(e - i);
      continue;
    }
    Tok t;
    std::size_t len = 1;
    switch (c) {
      case '(': t = Tok::lparen; break;
      case ')': t = Tok::rparen; break;
      case '{': t = Tok::lbrace; break;
      case '}': t = Tok::rbrace; break;
      case ',': t = Tok::comma; break;
      case ';': t = Tok::semi; break;
      case '!': t = Tok::bang; break;
      case '?': t = Tok::query; break;
      case '#': t = Tok::hash; break;
      case '-':
        if (i + 1 < src.size() && src[i + 1] == '>') {
          t = Tok::arrow;
          len = 2;
          break;
        }
        [[fallthrough]];
      default: throw ParseError(start, std::string("unexpected character '") + c + "'");
    }
    out.push_back({t, src.substr(i, len), start});
    advance(len);
  }
  out.push_back({Tok::eof, "", pos});
  return out;
}

inline const std::set<std::string>& keywords() {
  static const std::set<std::string> k{"system", "vars", "compose", "from", "decompose", "strand", "constraints", "shared"};
  return k;
}

class Parser {
 public:
  Parser(const std::string& src, bool generated) : toks_(lex(src, generated)) {}

  ast::File file() {
    ast::File f;
    if (peek().kind == Tok::eof) throw ParseError(peek().pos, "empty problem file");
    while (peek().kind != Tok::eof) {
      const Token& t = expect(Tok::id, "a section keyword");
      if (t.text == "system") {
        if (f.system) throw ParseError(t.pos, "duplicate system section");
        f.system = system(t.pos);
      } else if (t.text == "strand") {
        ast::Block b = block(t.pos, true);
        for (auto& s : f.strands) {
          if (s.name == b.name) throw ParseError(t.pos, "duplicate strand '" + b.name + "'");
        }
        f.strands.push_back(std::move(b));
      } else if (t.text == "constraints") {
        if (f.constraints) throw ParseError(t.pos, "duplicate constraints section");
        f.constraints = block(t.pos, false);
      } else if (t.text == "shared") {
        keyword("vars");
        for (auto& v : id_list()) f.shared_vars.push_back(v);
        expect(Tok::semi, "';'");
      } else {
        throw ParseError(t.pos, "expected 'system', 'strand', 'constraints' or 'shared', found '" + t.text + "'");
      }
    }
    return f;
  }

  ast::Term single_term() {
    ast::Term t = term();
    expect(Tok::eof, "end of term");
    return t;
  }

  std::vector<ast::Term> term_list_to_end() {
    std::vector<ast::Term> out;
    if (peek().kind == Tok::eof) return out;
    out = term_list();
    expect(Tok::eof, "end of term list");
    return out;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  const Token& expect(Tok k, const std::string& what) {
    const Token& t = peek();
    if (t.kind != k) {
      throw ParseError(t.pos, "expected " + what + ", found " +
                                  (t.kind == Tok::id ? "'" + t.text + "'" : std::string(describe(t.kind))));
    }
    return next();
  }

  bool at_keyword(const char* kw) const { return peek().kind == Tok::id && peek().text == kw; }

  void keyword(const char* kw) {
    if (!at_keyword(kw)) {
      const Token& t = peek();
      throw ParseError(t.pos, std::string("expected '") + kw + "', found " +
                                  (t.kind == Tok::id ? "'" + t.text + "'" : std::string(describe(t.kind))));
    }
    next();
  }

  std::string name(const std::string& what) {
    const Token& t = expect(Tok::id, what);
    if (keywords().count(t.text)) throw ParseError(t.pos, "'" + t.text + "' is a keyword");
    return t.text;
  }

  std::vector<std::string> id_list() {
    std::vector<std::string> out{name("an identifier")};
    while (peek().kind == Tok::id && !keywords().count(peek().text)) out.push_back(next().text);
    return out;
  }

  ast::Term term() {
    const Token& t = peek();
    if (t.kind == Tok::nonce) {
      next();
      return {t.text, true, {}, t.pos};
    }
    ast::Term out;
    out.pos = t.pos;
    out.name = name("a term");
    if (peek().kind == Tok::lparen) {
      next();
      out.args = term_list();
      expect(Tok::rparen, "')'");
    }
    return out;
  }

  std::vector<ast::Term> term_list() {
    std::vector<ast::Term> out{term()};
    while (peek().kind == Tok::comma) {
      next();
      out.push_back(term());
    }
    return out;
  }

  ast::System system(SourcePos pos) {
    ast::System s;
    s.pos = pos;
    s.name = name("a system name");
    expect(Tok::lbrace, "'{'");
    if (at_keyword("vars")) {
      next();
      s.vars = id_list();
      expect(Tok::semi, "';'");
    }
    while (peek().kind != Tok::rbrace) {
      ast::Rule r;
      r.pos = peek().pos;
      if (at_keyword("compose")) {
        next();
        r.compose = true;
        r.conclusion = term();
        if (at_keyword("from")) {
          next();
          r.has_from = true;
          r.premises = term_list();
        }
      } else if (at_keyword("decompose")) {
        next();
        r.compose = false;
        r.premises = term_list();
        expect(Tok::arrow, "'->'");
        r.conclusion = term();
      } else {
        expect(Tok::rbrace, "'compose', 'decompose' or '}'");
      }
      expect(Tok::semi, "';'");
      s.rules.push_back(std::move(r));
    }
    next();
    return s;
  }

  ast::Block block(SourcePos pos, bool named) {
    ast::Block b;
    b.pos = pos;
    if (named) b.name = name("a strand name");
    expect(Tok::lbrace, "'{'");
    if (at_keyword("vars")) {
      next();
      b.vars = id_list();
      expect(Tok::semi, "';'");
    }
    while (peek().kind != Tok::rbrace) {
      const Token& t = peek();
      ConstraintKind k;
      if (t.kind == Tok::bang) {
        k = ConstraintKind::send;
      } else if (t.kind == Tok::query) {
        k = ConstraintKind::receive;
      } else if (t.kind == Tok::hash) {
        k = ConstraintKind::forbid;
      } else {
        expect(Tok::rbrace, "'!', '?', '#' or '}'");
        break;
      }
      next();
      ast::Item item{k, term(), t.pos};
      expect(Tok::semi, "';'");
      b.items.push_back(std::move(item));
    }
    next();
    return b;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ast::File parse_ast(const std::string& src) { return detail::Parser(src, false).file(); }

// ---------------------------------------------------------------------------
// Pretty-printing

inline void print(std::string& out, const ast::Term& t) {
  if (t.nonce) out += "nonce:";
  out += t.name;
  if (t.args.empty()) return;
  out += '(';
  for (std::size_t i = 0; i < t.args.size(); ++i) {
    if (i) out += ", ";
    print(out, t.args[i]);
  }
  out += ')';
}

inline std::string print(const ast::File& f) {
  std::string out;
  auto terms = [&](const std::vector<ast::Term>& ts) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (i) out += ", ";
      print(out, ts[i]);
    }
  };
  auto names = [&](const std::vector<std::string>& ns) {
    for (auto& n : ns) out += " " + n;
  };
  auto block = [&](const ast::Block& b) {
    if (!b.vars.empty()) {
      out += "  vars";
      names(b.vars);
      out += ";\n";
    }
    for (auto& it : b.items) {
      out += "  ";
      out += sigil(it.kind);
      out += ' ';
      print(out, it.payload);
      out += ";\n";
    }
    out += "}\n";
  };
  if (f.system) {
    out += "system " + f.system->name + " {\n";
    if (!f.system->vars.empty()) {
      out += "  vars";
      names(f.system->vars);
      out += ";\n";
    }
    for (auto& r : f.system->rules) {
      if (r.compose) {
        out += "  compose ";
        print(out, r.conclusion);
        if (r.has_from) {
          out += " from ";
          terms(r.premises);
        }
      } else {
        out += "  decompose ";
        terms(r.premises);
        out += " -> ";
        print(out, r.conclusion);
      }
      out += ";\n";
    }
    out += "}\n";
  }
  if (!f.shared_vars.empty()) {
    out += "shared vars";
    names(f.shared_vars);
    out += ";\n";
  }
  for (auto& s : f.strands) {
    out += "strand " + s.name + " {\n";
    block(s);
  }
  if (f.constraints) {
    out += "constraints {\n";
    block(*f.constraints);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resolution into terms

struct Strand {
  std::string name;
  ConstraintSystem items;  // each constraint carries the strand name
};

struct Problem {
  ast::File source;
  DeductionSystem system;
  std::vector<Strand> strands;
  std::optional<ConstraintSystem> constraints;
  std::vector<std::string> shared_vars;
};

inline const char* kDefaultRoute = "service";

namespace detail {

using Scope = std::map<std::string, Term>;

class Resolver {
 public:
  /// Generated mode accepts solver output, which may use the blinding symbol.
  explicit Resolver(bool generated = false) : generated_(generated) {}

  Term resolve(const ast::Term& t, const Scope& scope) {
    check_reserved(t);
    if (t.nonce) return nonce(t.name);
    if (t.args.empty()) {
      if (auto it = scope.find(t.name); it != scope.end()) return it->second;
    }
    check_arity(t);
    std::vector<Term> args;
    for (auto& a : t.args) args.push_back(resolve(a, scope));
    if (args.empty()) return constant(t.name);
    Symbol f = Symbol::function(t.name, args.size());
    return Term::make(f, std::move(args));
  }

 private:
  void check_reserved(const ast::Term& t) {
    if (t.name == kBlindingSymbolName && !(generated_ && t.args.size() == 2)) {
      throw ParseError(t.pos, std::string("the symbol '") + kBlindingSymbolName + "' is reserved");
    }
    if (!t.nonce && t.name == "nonce") throw ParseError(t.pos, "'nonce' is reserved for the nonce: namespace");
  }
  void check_arity(const ast::Term& t) {
    auto [it, inserted] = arity_.emplace(t.name, std::make_pair(t.args.size(), t.pos));
    if (!inserted && it->second.first != t.args.size()) {
      throw ParseError(t.pos, "symbol '" + t.name + "' used with arity " + std::to_string(t.args.size()) +
                                  " but with arity " + std::to_string(it->second.first) + " at " +
                                  std::to_string(it->second.second.line) + ":" +
                                  std::to_string(it->second.second.col));
    }
  }
  bool generated_;
  std::map<std::string, std::pair<std::size_t, SourcePos>> arity_;
};

inline void declare(Scope& scope, const std::vector<std::string>& names, SourcePos pos, const std::string& suffix) {
  for (auto& n : names) {
    if (n == kBlindingSymbolName || n == "nonce") throw ParseError(pos, "'" + n + "' cannot be a variable");
    if (scope.count(n)) throw ParseError(pos, "variable '" + n + "' declared twice");
    scope.emplace(n, var(suffix.empty() ? n : n + "@" + suffix));
  }
}

inline Scope scope_of(const std::set<std::string>& names) {
  Scope s;
  for (auto& n : names) s.emplace(n, var(n));
  return s;
}

}  // namespace detail

inline Problem resolve(ast::File f) {
  Problem p;
  detail::Resolver r;
  if (!f.system) throw ParseError({1, 1}, "missing system section");
  if (f.constraints && !f.strands.empty()) {
    throw ParseError(f.constraints->pos, "a file has either strands or a constraints section, not both");
  }
  {
    detail::Scope scope;
    detail::declare(scope, f.system->vars, f.system->pos, "");
    std::vector<RuleSpec> specs;
    for (auto& rule : f.system->rules) {
      RuleSpec spec;
      spec.conclusion = r.resolve(rule.conclusion, scope);
      for (auto& l : rule.premises) spec.premises.push_back(r.resolve(l, scope));
      if (rule.compose && !rule.has_from) spec.premises = spec.conclusion.args();
      spec.declared = rule.compose ? RuleKind::composition : RuleKind::decomposition;
      specs.push_back(std::move(spec));
    }
    auto v = validate_system(f.system->name, specs);
    if (!v) {
      const auto& e = v.errors.front();
      throw ParseError(f.system->rules[e.rule].pos, e.code + ": " + e.message);
    }
    p.system = std::move(*v.system);
  }
  detail::Scope shared;
  detail::declare(shared, f.shared_vars, {1, 1}, "");
  for (auto& b : f.strands) {
    detail::Scope scope = shared;
    detail::declare(scope, b.vars, b.pos, b.name);
    Strand s{b.name, {}};
    for (auto& it : b.items) s.items.push_back({it.kind, r.resolve(it.payload, scope), b.name});
    p.strands.push_back(std::move(s));
  }
  if (f.constraints) {
    detail::Scope scope;
    detail::declare(scope, f.constraints->vars, f.constraints->pos, "");
    ConstraintSystem cs;
    for (auto& it : f.constraints->items) cs.push_back({it.kind, r.resolve(it.payload, scope), kDefaultRoute});
    p.constraints = std::move(cs);
  }
  p.shared_vars = f.shared_vars;
  p.source = std::move(f);
  return p;
}

inline Problem parse_problem(const std::string& src) { return resolve(parse_ast(src)); }

/// Parses a term in output syntax (generated names allowed). Identifiers in
/// `vars` become variables.
inline Term parse_term(const std::string& src, const std::set<std::string>& vars = {}) {
  detail::Parser p(src, true);
  detail::Resolver r(true);
  return r.resolve(p.single_term(), detail::scope_of(vars));
}

inline std::vector<Term> parse_term_list(const std::string& src, const std::set<std::string>& vars = {}) {
  detail::Parser p(src, true);
  detail::Resolver r(true);
  std::vector<Term> out;
  for (auto& t : p.term_list_to_end()) out.push_back(r.resolve(t, detail::scope_of(vars)));
  return out;
}

}  // namespace medsynth
