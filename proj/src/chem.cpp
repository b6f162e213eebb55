#include "graphcliff/chem.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>

namespace graphcliff {

namespace {

struct ElementInfo {
  int atomic_number;
  std::vector<int> valences;  // ascending
  bool organic_subset;
  bool aromatic_ok;
};

const std::map<std::string, ElementInfo>& element_table() {
  static const std::map<std::string, ElementInfo> table = {
      {"B", {5, {3}, true, true}},       {"C", {6, {4}, true, true}},
      {"N", {7, {3}, true, true}},       {"O", {8, {2}, true, true}},
      {"P", {15, {3, 5}, true, true}},   {"S", {16, {2, 4, 6}, true, true}},
      {"F", {9, {1}, true, false}},      {"Cl", {17, {1}, true, false}},
      {"Br", {35, {1}, true, false}},    {"I", {53, {1}, true, false}},
  };
  return table;
}

struct PendingRing {
  int atom;
  std::optional<BondOrder> order;
};

struct ParserState {
  const std::string& s;
  std::size_t pos = 0;

  explicit ParserState(const std::string& text) : s(text) {}
  bool done() const { return pos >= s.size(); }
  char peek() const { return s[pos]; }
  char take() { return s[pos++]; }

  [[noreturn]] void error(const std::string& msg) const {
    throw ParseError("SMILES parse error at position " + std::to_string(pos) + " in \"" + s +
                     "\": " + msg);
  }
};

struct RawAtom {
  std::string element;
  bool aromatic = false;
  int charge = 0;
  int explicit_h = -1;  // -1: compute from valence rules
};

// twice the bond order; aromatic counts as 1.5
int twice_order(BondOrder o) {
  switch (o) {
    case BondOrder::single: return 2;
    case BondOrder::double_: return 4;
    case BondOrder::triple: return 6;
    case BondOrder::aromatic: return 3;
  }
  return 2;
}

RawAtom parse_bracket_atom(ParserState& st) {
  RawAtom out;
  // isotope: parsed, discarded
  while (!st.done() && std::isdigit(static_cast<unsigned char>(st.peek()))) st.take();
  if (st.done()) st.error("unterminated bracket atom");

  char c = st.peek();
  if (std::isupper(static_cast<unsigned char>(c))) {
    std::string sym(1, st.take());
    if (!st.done() && std::islower(static_cast<unsigned char>(st.peek()))) {
      std::string two = sym + st.peek();
      if (element_table().count(two)) {
        sym = two;
        st.take();
      }
    }
    if (!element_table().count(sym)) st.error("unknown atom symbol '" + sym + "'");
    out.element = sym;
  } else if (std::islower(static_cast<unsigned char>(c))) {
    std::string sym(1, static_cast<char>(std::toupper(static_cast<unsigned char>(st.take()))));
    auto it = element_table().find(sym);
    if (it == element_table().end() || !it->second.aromatic_ok)
      st.error(std::string("unknown aromatic atom symbol '") + c + "'");
    out.element = sym;
    out.aromatic = true;
  } else {
    st.error("expected element symbol in bracket atom");
  }

  // chirality: discarded
  while (!st.done() && st.peek() == '@') st.take();

  if (!st.done() && st.peek() == 'H') {
    st.take();
    int h = 1;
    if (!st.done() && std::isdigit(static_cast<unsigned char>(st.peek()))) {
      h = 0;
      while (!st.done() && std::isdigit(static_cast<unsigned char>(st.peek())))
        h = h * 10 + (st.take() - '0');
    }
    out.explicit_h = h;
  } else {
    out.explicit_h = 0;  // bracket atoms default to zero hydrogens
  }

  if (!st.done() && (st.peek() == '+' || st.peek() == '-')) {
    const int sign = st.take() == '+' ? 1 : -1;
    int mag = 1;
    if (!st.done() && std::isdigit(static_cast<unsigned char>(st.peek()))) {
      mag = 0;
      while (!st.done() && std::isdigit(static_cast<unsigned char>(st.peek())))
        mag = mag * 10 + (st.take() - '0');
    } else {
      while (!st.done() && st.peek() == (sign > 0 ? '+' : '-')) {
        st.take();
        ++mag;
      }
    }
    out.charge = sign * mag;
    if (out.charge < -4 || out.charge > 4)
      st.error("charge " + std::to_string(out.charge) + " out of [-4,+4]");
  }

  // atom class: parsed, discarded
  if (!st.done() && st.peek() == ':') {
    st.take();
    if (st.done() || !std::isdigit(static_cast<unsigned char>(st.peek())))
      st.error("expected digits after ':' in bracket atom");
    while (!st.done() && std::isdigit(static_cast<unsigned char>(st.peek()))) st.take();
  }

  if (st.done() || st.peek() != ']') st.error("expected ']'");
  st.take();
  return out;
}

std::optional<RawAtom> parse_organic_atom(ParserState& st) {
  const char c = st.peek();
  RawAtom out;
  if (std::isupper(static_cast<unsigned char>(c))) {
    std::string sym(1, c);
    std::string two = c + std::string(1, st.pos + 1 < st.s.size() ? st.s[st.pos + 1] : '\0');
    if ((two == "Cl" || two == "Br") && element_table().count(two)) {
      st.take();
      st.take();
      out.element = two;
      return out;
    }
    auto it = element_table().find(sym);
    if (it == element_table().end() || !it->second.organic_subset)
      st.error("unknown atom symbol '" + sym + "'");
    st.take();
    out.element = sym;
    return out;
  }
  if (std::islower(static_cast<unsigned char>(c))) {
    std::string sym(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    auto it = element_table().find(sym);
    if (it == element_table().end() || !it->second.aromatic_ok)
      st.error(std::string("unknown aromatic atom symbol '") + c + "'");
    st.take();
    out.element = sym;
    out.aromatic = true;
    return out;
  }
  return std::nullopt;
}

void compute_implicit_h(Molecule& mol, const std::vector<int>& explicit_h) {
  std::vector<int> twice_sum(mol.atoms.size(), 0);
  for (const auto& b : mol.bonds) {
    twice_sum[b.a] += twice_order(b.order);
    twice_sum[b.b] += twice_order(b.order);
  }
  for (std::size_t i = 0; i < mol.atoms.size(); ++i) {
    auto& atom = mol.atoms[i];
    if (explicit_h[i] >= 0) {
      atom.implicit_h = explicit_h[i];
      continue;
    }
    const int used = twice_sum[i] / 2;  // aromatic halves rounded down
    const auto& val = element_table().at(atom.element).valences;
    int target = -1;
    if (atom.aromatic) {
      target = val.front();  // default valence cap for aromatic atoms
    } else {
      for (int v : val)
        if (v >= used) {
          target = v;
          break;
        }
    }
    atom.implicit_h = (target >= 0 && target > used) ? target - used : 0;
  }
}

Molecule keep_largest_fragment(Molecule mol, std::vector<int>& explicit_h) {
  const std::size_t n = mol.atoms.size();
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> adj(n);
  for (const auto& b : mol.bonds) {
    adj[b.a].push_back(b.b);
    adj[b.b].push_back(b.a);
  }
  int n_comp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (comp[i] >= 0) continue;
    std::vector<int> stack{static_cast<int>(i)};
    comp[i] = n_comp;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v : adj[u])
        if (comp[v] < 0) {
          comp[v] = n_comp;
          stack.push_back(v);
        }
    }
    ++n_comp;
  }
  if (n_comp <= 1) return mol;

  std::vector<int> counts(n_comp, 0);
  for (std::size_t i = 0; i < n; ++i) counts[comp[i]]++;
  const int best =
      static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());

  Molecule out;
  out.source_smiles = mol.source_smiles;
  std::vector<int> remap(n, -1);
  std::vector<int> eh;
  for (std::size_t i = 0; i < n; ++i) {
    if (comp[i] != best) continue;
    remap[i] = static_cast<int>(out.atoms.size());
    out.atoms.push_back(mol.atoms[i]);
    eh.push_back(explicit_h[i]);
  }
  for (const auto& b : mol.bonds) {
    if (comp[b.a] != best) continue;
    Bond nb = b;
    nb.a = remap[b.a];
    nb.b = remap[b.b];
    out.bonds.push_back(nb);
  }
  explicit_h = std::move(eh);
  return out;
}

}  // namespace

std::vector<std::vector<std::pair<int, int>>> Molecule::adjacency() const {
  std::vector<std::vector<std::pair<int, int>>> adj(atoms.size());
  for (std::size_t bi = 0; bi < bonds.size(); ++bi) {
    adj[bonds[bi].a].push_back({bonds[bi].b, static_cast<int>(bi)});
    adj[bonds[bi].b].push_back({bonds[bi].a, static_cast<int>(bi)});
  }
  return adj;
}

Molecule parse_smiles(const std::string& text) {
  if (text.empty()) throw ParseError("SMILES parse error: empty input");
  for (char c : text)
    if (static_cast<unsigned char>(c) > 127)
      throw ParseError("SMILES parse error: non-ASCII input");

  ParserState st(text);
  Molecule mol;
  mol.source_smiles = text;
  std::vector<int> explicit_h;

  std::vector<int> branch_stack;
  std::map<int, PendingRing> open_rings;
  int prev_atom = -1;
  std::optional<BondOrder> pending_bond;

  auto add_bond = [&](int a, int b, BondOrder order) {
    if (a == b) st.error("ring closure bonds an atom to itself");
    for (const auto& bond : mol.bonds)
      if ((bond.a == a && bond.b == b) || (bond.a == b && bond.b == a))
        st.error("duplicate bond between atoms " + std::to_string(a) + " and " +
                 std::to_string(b));
    mol.bonds.push_back({a, b, order, false});
  };

  auto default_order = [&](int a, int b) {
    return (mol.atoms[a].aromatic && mol.atoms[b].aromatic) ? BondOrder::aromatic
                                                            : BondOrder::single;
  };

  auto handle_ring_digit = [&](int digit) {
    if (prev_atom < 0) st.error("ring closure before any atom");
    auto it = open_rings.find(digit);
    if (it == open_rings.end()) {
      open_rings[digit] = {prev_atom, pending_bond};
      pending_bond.reset();
      return;
    }
    PendingRing open = it->second;
    open_rings.erase(it);
    BondOrder order;
    if (open.order && pending_bond && *open.order != *pending_bond)
      st.error("conflicting bond orders on ring closure " + std::to_string(digit));
    if (open.order)
      order = *open.order;
    else if (pending_bond)
      order = *pending_bond;
    else
      order = default_order(open.atom, prev_atom);
    pending_bond.reset();
    add_bond(open.atom, prev_atom, order);
  };

  while (!st.done()) {
    const char c = st.peek();
    if (c == '(') {
      st.take();
      if (prev_atom < 0) st.error("branch before any atom");
      if (pending_bond) st.error("bond symbol before '('");
      branch_stack.push_back(prev_atom);
      continue;
    }
    if (c == ')') {
      st.take();
      if (branch_stack.empty()) st.error("unbalanced parentheses");
      if (pending_bond) st.error("dangling bond before ')'");
      prev_atom = branch_stack.back();
      branch_stack.pop_back();
      continue;
    }
    if (c == '-' || c == '=' || c == '#' || c == ':' || c == '/' || c == '\\') {
      st.take();
      if (pending_bond) st.error("two consecutive bond symbols");
      switch (c) {
        case '=': pending_bond = BondOrder::double_; break;
        case '#': pending_bond = BondOrder::triple; break;
        case ':': pending_bond = BondOrder::aromatic; break;
        default: pending_bond = BondOrder::single; break;  // -, /, backslash
      }
      continue;
    }
    if (c == '.') {
      st.take();
      if (pending_bond) st.error("bond symbol before '.'");
      prev_atom = -1;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      st.take();
      handle_ring_digit(c - '0');
      continue;
    }
    if (c == '%') {
      st.take();
      if (st.done() || !std::isdigit(static_cast<unsigned char>(st.peek())))
        st.error("expected two digits after '%'");
      int d1 = st.take() - '0';
      if (st.done() || !std::isdigit(static_cast<unsigned char>(st.peek())))
        st.error("expected two digits after '%'");
      int d2 = st.take() - '0';
      handle_ring_digit(d1 * 10 + d2);
      continue;
    }

    RawAtom raw;
    if (c == '[') {
      st.take();
      raw = parse_bracket_atom(st);
    } else if (auto organic = parse_organic_atom(st)) {
      raw = *organic;
    } else {
      st.error(std::string("unexpected character '") + c + "'");
    }

    Atom atom;
    atom.element = raw.element;
    atom.atomic_number = element_table().at(raw.element).atomic_number;
    atom.formal_charge = raw.charge;
    atom.aromatic = raw.aromatic;
    const int idx = static_cast<int>(mol.atoms.size());
    mol.atoms.push_back(atom);
    explicit_h.push_back(raw.explicit_h);

    if (prev_atom >= 0) {
      BondOrder order = pending_bond ? *pending_bond : default_order(prev_atom, idx);
      pending_bond.reset();
      add_bond(prev_atom, idx, order);
    } else if (pending_bond) {
      st.error("dangling bond symbol");
    }
    prev_atom = idx;
  }

  if (!branch_stack.empty()) throw ParseError("SMILES parse error: unbalanced parentheses");
  if (!open_rings.empty())
    throw ParseError("SMILES parse error: unmatched ring-closure digit " +
                     std::to_string(open_rings.begin()->first));
  if (pending_bond) throw ParseError("SMILES parse error: trailing bond symbol");

  mol = keep_largest_fragment(std::move(mol), explicit_h);
  if (mol.atoms.empty()) throw ParseError("SMILES parse error: empty result");

  for (auto& a : mol.atoms) a.degree = 0;
  for (const auto& b : mol.bonds) {
    mol.atoms[b.a].degree++;
    mol.atoms[b.b].degree++;
  }
  compute_implicit_h(mol, explicit_h);
  perceive_rings(mol);
  for (const auto& a : mol.atoms)
    if (a.aromatic && !a.in_ring)
      throw ParseError("SMILES parse error: aromatic atom outside any ring in \"" + text + "\"");
  for (const auto& b : mol.bonds)
    if (b.order == BondOrder::aromatic &&
        !(mol.atoms[b.a].aromatic && mol.atoms[b.b].aromatic))
      throw ParseError("SMILES parse error: aromatic bond between non-aromatic atoms in \"" +
                       text + "\"");
  return mol;
}

void perceive_rings(Molecule& mol) {
  const std::size_t n = mol.atoms.size();
  for (auto& a : mol.atoms) a.in_ring = false;
  for (auto& b : mol.bonds) b.in_ring = false;
  if (n == 0) return;

  auto adj = mol.adjacency();
  // Tarjan bridge finding; non-bridge edges lie on a cycle.
  std::vector<int> disc(n, -1), low(n, 0);
  std::vector<bool> bridge(mol.bonds.size(), false);
  int timer = 0;

  struct Frame {
    int u;
    int parent_edge;
    std::size_t next;
  };
  for (std::size_t root = 0; root < n; ++root) {
    if (disc[root] >= 0) continue;
    std::vector<Frame> stack{{static_cast<int>(root), -1, 0}};
    disc[root] = low[root] = timer++;
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < adj[f.u].size()) {
        auto [v, ei] = adj[f.u][f.next++];
        if (ei == f.parent_edge) continue;
        if (disc[v] < 0) {
          disc[v] = low[v] = timer++;
          stack.push_back({v, ei, 0});
        } else {
          low[f.u] = std::min(low[f.u], disc[v]);
        }
      } else {
        const int u = f.u;
        const int pe = f.parent_edge;
        stack.pop_back();
        if (!stack.empty()) {
          const int p = stack.back().u;
          low[p] = std::min(low[p], low[u]);
          if (low[u] > disc[p]) bridge[pe] = true;
        }
      }
    }
  }

  for (std::size_t bi = 0; bi < mol.bonds.size(); ++bi) {
    if (bridge[bi]) continue;
    mol.bonds[bi].in_ring = true;
    mol.atoms[mol.bonds[bi].a].in_ring = true;
    mol.atoms[mol.bonds[bi].b].in_ring = true;
  }
}

Molecule murcko_scaffold(const Molecule& mol) {
  std::vector<bool> alive(mol.atoms.size(), true);
  std::vector<int> degree(mol.atoms.size(), 0);
  for (const auto& b : mol.bonds) {
    degree[b.a]++;
    degree[b.b]++;
  }
  auto adj = mol.adjacency();

  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> drop;
    for (std::size_t i = 0; i < mol.atoms.size(); ++i)
      if (alive[i] && degree[i] <= 1 && !mol.atoms[i].in_ring) drop.push_back(static_cast<int>(i));
    for (int i : drop) {
      alive[i] = false;
      changed = true;
      for (auto [v, ei] : adj[i]) {
        (void)ei;
        if (alive[v]) degree[v]--;
      }
    }
  }

  Molecule out;
  out.source_smiles = mol.source_smiles;
  std::vector<int> remap(mol.atoms.size(), -1);
  for (std::size_t i = 0; i < mol.atoms.size(); ++i) {
    if (!alive[i]) continue;
    remap[i] = static_cast<int>(out.atoms.size());
    out.atoms.push_back(mol.atoms[i]);
  }
  for (const auto& b : mol.bonds) {
    if (remap[b.a] < 0 || remap[b.b] < 0) continue;
    Bond nb = b;
    nb.a = remap[b.a];
    nb.b = remap[b.b];
    out.bonds.push_back(nb);
  }
  for (auto& a : out.atoms) a.degree = 0;
  for (const auto& b : out.bonds) {
    out.atoms[b.a].degree++;
    out.atoms[b.b].degree++;
  }
  return out;
}

}  // namespace graphcliff
