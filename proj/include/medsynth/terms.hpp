#pragma once

// First-order term algebra with hash-consed, immutable terms.
//
// Every distinct term exists exactly once in a process-wide store, so term
// equality is pointer equality and subterm sets are cheap to build. The
// store is append-only and guarded by a mutex; terms are safe to share
// between threads.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace medsynth {

enum class SymbolKind { function, constant, nonce, variable };

inline const char* to_string(SymbolKind k) {
  switch (k) {
    case SymbolKind::function: return "function";
    case SymbolKind::constant: return "constant";
    case SymbolKind::nonce: return "nonce";
    case SymbolKind::variable: return "variable";
  }
  return "?";
}

namespace detail {
struct SymbolData {
  std::string name;
  std::size_t arity;
  SymbolKind kind;
  std::uint64_t id;
};
struct TermNode;
}  // namespace detail

/// Interned symbol handle. Two handles compare equal iff they denote the
/// same (kind, name, arity) triple.
class Symbol {
 public:
  Symbol() = default;

  static Symbol function(std::string_view name, std::size_t arity);
  static Symbol constant(std::string_view name);
  static Symbol nonce(std::string_view name);
  static Symbol variable(std::string_view name);

  const std::string& name() const { return d_->name; }
  std::size_t arity() const { return d_->arity; }
  SymbolKind kind() const { return d_->kind; }
  /// Interning order; used to orient variable-variable bindings.
  std::uint64_t id() const { return d_->id; }
  bool is_variable() const { return d_->kind == SymbolKind::variable; }
  bool is_nonce() const { return d_->kind == SymbolKind::nonce; }
  bool valid() const { return d_ != nullptr; }

  friend bool operator==(Symbol a, Symbol b) { return a.d_ == b.d_; }
  friend bool operator!=(Symbol a, Symbol b) { return a.d_ != b.d_; }

 private:
  explicit Symbol(const detail::SymbolData* d) : d_(d) {}
  const detail::SymbolData* d_ = nullptr;
  friend struct detail::TermNode;
  friend class TermStore;
};

/// Structural order on symbols (kind, name, arity); independent of
/// interning order so sorted output is reproducible.
inline int compare(Symbol a, Symbol b) {
  if (a == b) return 0;
  if (a.kind() != b.kind()) return a.kind() < b.kind() ? -1 : 1;
  if (int c = a.name().compare(b.name()); c != 0) return c < 0 ? -1 : 1;
  if (a.arity() != b.arity()) return a.arity() < b.arity() ? -1 : 1;
  return 0;
}

class Term {
 public:
  Term() = default;

  static Term make(Symbol head, std::vector<Term> args = {});

  Symbol head() const;
  const std::vector<Term>& args() const;
  const Term& arg(std::size_t i) const { return args()[i]; }
  std::size_t arity() const { return args().size(); }
  bool is_variable() const { return head().is_variable(); }
  bool is_nonce() const { return head().is_nonce(); }
  bool is_ground() const;
  std::uint32_t height() const;
  bool valid() const { return n_ != nullptr; }
  const void* identity() const { return n_; }

  friend bool operator==(Term a, Term b) { return a.n_ == b.n_; }
  friend bool operator!=(Term a, Term b) { return a.n_ != b.n_; }

 private:
  explicit Term(const detail::TermNode* n) : n_(n) {}
  const detail::TermNode* n_ = nullptr;
  friend class TermStore;
};

/// Total structural order. Equal terms short-circuit on identity.
inline int compare(Term a, Term b);
inline bool operator<(Term a, Term b) { return compare(a, b) < 0; }

}  // namespace medsynth

template <>
struct std::hash<medsynth::Term> {
  std::size_t operator()(medsynth::Term t) const noexcept {
    return std::hash<const void*>{}(t.identity());
  }
};

namespace medsynth {

namespace detail {
struct TermNode {
  Symbol head;
  std::vector<Term> args;
  bool ground;
  std::uint32_t height;
};
}  // namespace detail

class TermStore {
 public:
  static TermStore& instance() {
    static TermStore store;
    return store;
  }

  Symbol symbol(std::string_view name, std::size_t arity, SymbolKind kind) {
    std::lock_guard lock(mu_);
    SymbolKey key{std::string(name), arity, kind};
    auto it = symbols_.find(key);
    if (it != symbols_.end()) return Symbol(it->second.get());
    auto data = std::make_unique<detail::SymbolData>(
        detail::SymbolData{std::string(name), arity, kind, next_symbol_id_++});
    Symbol s(data.get());
    symbols_.emplace(std::move(key), std::move(data));
    return s;
  }

  Term term(Symbol head, std::vector<Term> args) {
    if (!head.valid()) throw std::invalid_argument("term with invalid head symbol");
    if (args.size() != head.arity()) {
      throw std::invalid_argument("arity mismatch for '" + head.name() + "': expected " +
                                  std::to_string(head.arity()) + ", got " +
                                  std::to_string(args.size()));
    }
    NodeKey key{head.d_, {}};
    key.args.reserve(args.size());
    for (Term a : args) {
      if (!a.valid()) throw std::invalid_argument("invalid argument term");
      key.args.push_back(a.n_);
    }
    std::lock_guard lock(mu_);
    auto it = nodes_.find(key);
    if (it != nodes_.end()) return Term(it->second.get());
    bool ground = !head.is_variable();
    std::uint32_t height = 0;
    for (Term a : args) {
      ground = ground && a.n_->ground;
      height = std::max(height, a.n_->height + 1);
    }
    auto node = std::make_unique<detail::TermNode>(
        detail::TermNode{head, std::move(args), ground, height});
    Term t(node.get());
    nodes_.emplace(std::move(key), std::move(node));
    return t;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return nodes_.size();
  }

 private:
  TermStore() = default;

  struct SymbolKey {
    std::string name;
    std::size_t arity;
    SymbolKind kind;
    bool operator==(const SymbolKey&) const = default;
  };
  struct SymbolKeyHash {
    std::size_t operator()(const SymbolKey& k) const noexcept {
      std::size_t h = std::hash<std::string>{}(k.name);
      h ^= std::hash<std::size_t>{}(k.arity) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h ^= static_cast<std::size_t>(k.kind) * 0x51ed27ULL;
      return h;
    }
  };
  struct NodeKey {
    const detail::SymbolData* head;
    std::vector<const detail::TermNode*> args;
    bool operator==(const NodeKey&) const = default;
  };
  struct NodeKeyHash {
    std::size_t operator()(const NodeKey& k) const noexcept {
      std::size_t h = std::hash<const void*>{}(k.head);
      for (auto* a : k.args) {
        h ^= std::hash<const void*>{}(a) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      }
      return h;
    }
  };

  mutable std::mutex mu_;
  std::uint64_t next_symbol_id_ = 1;
  std::unordered_map<SymbolKey, std::unique_ptr<detail::SymbolData>, SymbolKeyHash> symbols_;
  std::unordered_map<NodeKey, std::unique_ptr<detail::TermNode>, NodeKeyHash> nodes_;
};

inline Symbol Symbol::function(std::string_view name, std::size_t arity) {
  if (arity == 0) throw std::invalid_argument("function symbol '" + std::string(name) + "' needs arity >= 1");
  return TermStore::instance().symbol(name, arity, SymbolKind::function);
}
inline Symbol Symbol::constant(std::string_view name) {
  return TermStore::instance().symbol(name, 0, SymbolKind::constant);
}
inline Symbol Symbol::nonce(std::string_view name) {
  return TermStore::instance().symbol(name, 0, SymbolKind::nonce);
}
inline Symbol Symbol::variable(std::string_view name) {
  return TermStore::instance().symbol(name, 0, SymbolKind::variable);
}

inline Term Term::make(Symbol head, std::vector<Term> args) {
  return TermStore::instance().term(head, std::move(args));
}
inline Symbol Term::head() const { return n_->head; }
inline const std::vector<Term>& Term::args() const { return n_->args; }
inline bool Term::is_ground() const { return n_->ground; }
inline std::uint32_t Term::height() const { return n_->height; }

inline int compare(Term a, Term b) {
  if (a == b) return 0;
  if (a.height() != b.height()) return a.height() < b.height() ? -1 : 1;
  if (int c = compare(a.head(), b.head()); c != 0) return c;
  for (std::size_t i = 0; i < a.arity(); ++i) {
    if (int c = compare(a.arg(i), b.arg(i)); c != 0) return c;
  }
  return 0;
}

// Construction shorthands.
inline Term var(std::string_view name) { return Term::make(Symbol::variable(name)); }
inline Term constant(std::string_view name) { return Term::make(Symbol::constant(name)); }
inline Term nonce(std::string_view name) { return Term::make(Symbol::nonce(name)); }
inline Term app(std::string_view f, std::vector<Term> args) {
  if (args.empty()) return constant(f);
  auto n = args.size();
  return Term::make(Symbol::function(f, n), std::move(args));
}

using TermSet = std::set<Term>;

namespace detail {
inline void collect_subterms(Term t, TermSet& out) {
  if (!out.insert(t).second) return;
  for (Term a : t.args()) collect_subterms(a, out);
}
inline void collect_vars(Term t, TermSet& out) {
  if (t.is_ground()) return;
  if (t.is_variable()) {
    out.insert(t);
    return;
  }
  for (Term a : t.args()) collect_vars(a, out);
}
}  // namespace detail

inline TermSet subterms(Term t) {
  TermSet out;
  detail::collect_subterms(t, out);
  return out;
}

template <typename Range>
TermSet subterms_of(const Range& terms) {
  TermSet out;
  for (Term t : terms) detail::collect_subterms(t, out);
  return out;
}

inline TermSet vars(Term t) {
  TermSet out;
  detail::collect_vars(t, out);
  return out;
}

template <typename Range>
TermSet vars_of(const Range& terms) {
  TermSet out;
  for (Term t : terms) detail::collect_vars(t, out);
  return out;
}

inline bool occurs(Term needle, Term hay) {
  if (needle == hay) return true;
  if (hay.height() <= needle.height()) return false;
  for (Term a : hay.args()) {
    if (occurs(needle, a)) return true;
  }
  return false;
}

/// Number of distinct subterms.
inline std::size_t dag_size(Term t) { return subterms(t).size(); }

/// Number of nodes of the tree representation.
inline std::size_t tree_size(Term t) {
  std::size_t n = 1;
  for (Term a : t.args()) n += tree_size(a);
  return n;
}

/// Simultaneously replaces every occurrence of `from` inside `t` by `to`.
inline Term replace(Term t, Term from, Term to) {
  if (t == from) return to;
  if (t.arity() == 0 || t.height() <= from.height()) return t;
  std::vector<Term> args;
  args.reserve(t.arity());
  bool changed = false;
  for (Term a : t.args()) {
    Term r = replace(a, from, to);
    changed = changed || r != a;
    args.push_back(r);
  }
  return changed ? Term::make(t.head(), std::move(args)) : t;
}

// Printing in the DSL term syntax: f(a,b), nonce:n.
inline void print_term(std::string& out, Term t) {
  if (t.is_nonce()) out += "nonce:";
  out += t.head().name();
  if (t.arity() == 0) return;
  out += '(';
  for (std::size_t i = 0; i < t.arity(); ++i) {
    if (i) out += ',';
    print_term(out, t.arg(i));
  }
  out += ')';
}

inline std::string to_string(Term t) {
  std::string s;
  print_term(s, t);
  return s;
}

class SubstitutionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Finite idempotent map from variables to terms.
class Substitution {
 public:
  using Map = std::map<Term, Term>;

  Substitution() = default;

  /// Builds a substitution, dropping identity bindings. Throws
  /// SubstitutionError if a key is not a variable or the result is not
  /// idempotent.
  static Substitution from(Map bindings) {
    Substitution s;
    for (auto& [x, t] : bindings) {
      if (!x.is_variable()) throw SubstitutionError("substitution key is not a variable: " + to_string(x));
      if (x != t) s.map_.emplace(x, t);
    }
    if (!s.is_idempotent()) throw SubstitutionError("substitution is not idempotent");
    return s;
  }

  static Substitution from(std::initializer_list<std::pair<const Term, Term>> init) {
    return from(Map(init));
  }

  bool empty() const { return map_.empty(); }
  std::size_t size() const { return map_.size(); }
  const Map& bindings() const { return map_; }
  auto begin() const { return map_.begin(); }
  auto end() const { return map_.end(); }

  bool binds(Term x) const { return map_.count(x) != 0; }

  Term lookup(Term x) const {
    auto it = map_.find(x);
    return it == map_.end() ? x : it->second;
  }

  Term apply(Term t) const {
    if (t.is_ground() || map_.empty()) return t;
    if (t.is_variable()) return lookup(t);
    std::vector<Term> args;
    args.reserve(t.arity());
    bool changed = false;
    for (Term a : t.args()) {
      Term r = apply(a);
      changed = changed || r != a;
      args.push_back(r);
    }
    return changed ? Term::make(t.head(), std::move(args)) : t;
  }

  TermSet domain() const {
    TermSet d;
    for (auto& [x, _] : map_) d.insert(x);
    return d;
  }

  TermSet image() const {
    TermSet img;
    for (auto& [_, t] : map_) img.insert(t);
    return img;
  }

  bool is_ground() const {
    return std::all_of(map_.begin(), map_.end(), [](auto& kv) { return kv.second.is_ground(); });
  }

  bool is_idempotent() const {
    for (auto& [_, t] : map_) {
      for (Term v : vars(t)) {
        if (map_.count(v)) return false;
      }
    }
    return true;
  }

  /// Restriction to the given variables.
  Substitution restrict_to(const TermSet& xs) const {
    Substitution s;
    for (auto& [x, t] : map_) {
      if (xs.count(x)) s.map_.emplace(x, t);
    }
    return s;
  }

  /// Pointwise replacement on the image.
  Substitution replace_in_image(Term from, Term to) const {
    Map m;
    for (auto& [x, t] : map_) m.emplace(x, medsynth::replace(t, from, to));
    return Substitution::from(std::move(m));
  }

  /// Unchecked insertion for algorithms that maintain idempotency themselves.
  void bind_unchecked(Term x, Term t) {
    if (x != t) map_[x] = t;
  }

  friend bool operator==(const Substitution&, const Substitution&) = default;

 private:
  Map map_;
};

/// Composition: x(σδ) = (xσ)δ over dom(σ) ∪ dom(δ).
inline Substitution compose(const Substitution& sigma, const Substitution& delta) {
  Substitution::Map m;
  for (auto& [x, t] : sigma) m[x] = delta.apply(t);
  for (auto& [x, t] : delta) {
    if (!sigma.binds(x)) m[x] = t;
  }
  return Substitution::from(std::move(m));
}

inline bool is_injective_on(const Substitution& sigma, const TermSet& ts) {
  std::unordered_map<Term, Term> seen;
  for (Term t : ts) {
    Term img = sigma.apply(t);
    auto [it, inserted] = seen.emplace(img, t);
    if (!inserted && it->second != t) return false;
  }
  return true;
}

/// DAG size of a substitution: distinct subterms of its image.
inline std::size_t dag_size(const Substitution& s) {
  TermSet all;
  for (auto& [_, t] : s) detail::collect_subterms(t, all);
  return all.size();
}

inline std::string to_string(const Substitution& s) {
  std::string out = "{";
  bool first = true;
  for (auto& [x, t] : s) {
    if (!first) out += ", ";
    first = false;
    out += x.head().name();
    out += " -> ";
    print_term(out, t);
  }
  out += "}";
  return out;
}

/// Generator for names outside the user namespace: nonces `n#k`, constants
/// `c#k`, and renamed variables `x#k`. The '#' character cannot appear in
/// user identifiers.
class FreshNames {
 public:
  explicit FreshNames(std::uint64_t start = 1) : next_(start) {}

  Term nonce() { return Term::make(Symbol::nonce("n#" + std::to_string(next_++))); }
  Term constant() { return Term::make(Symbol::constant("c#" + std::to_string(next_++))); }
  Term variable(std::string_view base) {
    std::string b(base.substr(0, base.find('#')));
    return Term::make(Symbol::variable(b + "#" + std::to_string(next_++)));
  }

  static FreshNames& global() {
    static FreshNames g(1);
    return g;
  }

 private:
  std::atomic<std::uint64_t> next_;
};

/// Renames every variable of `ts` apart using `fresh`; returns the renaming.
template <typename Range>
Substitution rename_apart(const Range& ts, FreshNames& fresh) {
  Substitution::Map m;
  for (Term v : vars_of(ts)) m.emplace(v, fresh.variable(v.head().name()));
  return Substitution::from(std::move(m));
}

}  // namespace medsynth
