#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "graphcliff/chem.hpp"
#include "support/oracles.hpp"

using namespace graphcliff;

#include "support/corpus.hpp"

namespace {

using corpus::drug_like_smiles;

std::vector<std::pair<int, int>> bond_pairs(const Molecule& m) {
  std::vector<std::pair<int, int>> e;
  for (const auto& b : m.bonds) e.push_back({b.a, b.b});
  return e;
}

std::multiset<std::pair<std::string, int>> element_degree_multiset(const Molecule& m) {
  std::multiset<std::pair<std::string, int>> s;
  for (const auto& a : m.atoms) s.insert({a.element, a.degree});
  return s;
}

}  // namespace

TEST_CASE("CCO: atoms, bonds and implicit hydrogens") {
  Molecule m = parse_smiles("CCO");
  REQUIRE(m.atoms.size() == 3);
  REQUIRE(m.bonds.size() == 2);
  CHECK(m.atoms[0].element == "C");
  CHECK(m.atoms[1].element == "C");
  CHECK(m.atoms[2].element == "O");
  CHECK(m.atoms[0].implicit_h == 3);
  CHECK(m.atoms[1].implicit_h == 2);
  CHECK(m.atoms[2].implicit_h == 1);
  for (const auto& b : m.bonds) CHECK(b.order == BondOrder::single);
  for (const auto& a : m.atoms) CHECK_FALSE(a.in_ring);
}

TEST_CASE("[NH4+]: bracket atom with explicit H and charge") {
  Molecule m = parse_smiles("[NH4+]");
  REQUIRE(m.atoms.size() == 1);
  CHECK(m.atoms[0].element == "N");
  CHECK(m.atoms[0].formal_charge == 1);
  CHECK(m.atoms[0].implicit_h == 4);
  CHECK(m.atoms[0].degree == 0);
}

TEST_CASE("benzene: aromatic ring closure") {
  Molecule m = parse_smiles("c1ccccc1");
  REQUIRE(m.atoms.size() == 6);
  REQUIRE(m.bonds.size() == 6);
  for (const auto& a : m.atoms) {
    CHECK(a.aromatic);
    CHECK(a.in_ring);
    CHECK(a.element == "C");
    CHECK(a.implicit_h == 1);
    CHECK(a.degree == 2);
  }
  for (const auto& b : m.bonds) {
    CHECK(b.order == BondOrder::aromatic);
    CHECK(b.in_ring);
  }
}

TEST_CASE("CC(=O)O: branch and double bond") {
  Molecule m = parse_smiles("CC(=O)O");
  REQUIRE(m.atoms.size() == 4);
  REQUIRE(m.bonds.size() == 3);
  int doubles = 0;
  for (const auto& b : m.bonds)
    if (b.order == BondOrder::double_) {
      ++doubles;
      CHECK(m.atoms[b.b].element == "O");
    }
  CHECK(doubles == 1);
  CHECK(m.atoms[1].degree == 3);
  CHECK(m.atoms[1].implicit_h == 0);
  CHECK(m.atoms[3].implicit_h == 1);
}

TEST_CASE("heteroaromatic implicit hydrogens follow the default-valence cap") {
  Molecule pyridine = parse_smiles("c1ccncc1");
  for (const auto& a : pyridine.atoms)
    CHECK(a.implicit_h == (a.element == "N" ? 0 : 1));
  Molecule thiophene = parse_smiles("c1ccsc1");
  for (const auto& a : thiophene.atoms)
    CHECK(a.implicit_h == (a.element == "S" ? 0 : 1));
  Molecule furan = parse_smiles("c1ccoc1");
  for (const auto& a : furan.atoms)
    CHECK(a.implicit_h == (a.element == "O" ? 0 : 1));
  Molecule naphthalene = parse_smiles("c1ccc2ccccc2c1");
  int h2 = 0, h1 = 0, h0 = 0;
  for (const auto& a : naphthalene.atoms) {
    if (a.degree == 3) {
      CHECK(a.implicit_h == 0);
      ++h0;
    } else {
      CHECK(a.implicit_h == 1);
      ++h1;
    }
    (void)h2;
  }
  CHECK(h0 == 2);
  CHECK(h1 == 8);
}

TEST_CASE("ring perception matches the edge-removal oracle") {
  SUBCASE("benzene") {
    Molecule m = parse_smiles("c1ccccc1");
    for (const auto& a : m.atoms) CHECK(a.in_ring);
    for (const auto& b : m.bonds) CHECK(b.in_ring);
  }
  SUBCASE("acyclic") {
    Molecule m = parse_smiles("CCO");
    for (const auto& a : m.atoms) CHECK_FALSE(a.in_ring);
  }
  SUBCASE("cyclopropane with ethyl tail") {
    Molecule m = parse_smiles("C1CC1CC");
    auto oracle = oracles::ring_edges_by_removal(m.atoms.size(), bond_pairs(m));
    int ring_atoms = 0;
    for (std::size_t e = 0; e < m.bonds.size(); ++e) CHECK(m.bonds[e].in_ring == oracle[e]);
    for (const auto& a : m.atoms) ring_atoms += a.in_ring ? 1 : 0;
    CHECK(ring_atoms == 3);
  }
  SUBCASE("whole corpus") {
    for (const auto& s : drug_like_smiles()) {
      Molecule m = parse_smiles(s);
      auto oracle = oracles::ring_edges_by_removal(m.atoms.size(), bond_pairs(m));
      for (std::size_t e = 0; e < m.bonds.size(); ++e) {
        CAPTURE(s);
        CHECK(m.bonds[e].in_ring == oracle[e]);
      }
    }
  }
}

TEST_CASE("perceive_rings is idempotent") {
  for (const auto& s : drug_like_smiles()) {
    Molecule m = parse_smiles(s);
    Molecule twice = m;
    perceive_rings(twice);
    for (std::size_t i = 0; i < m.atoms.size(); ++i)
      CHECK(m.atoms[i].in_ring == twice.atoms[i].in_ring);
    for (std::size_t i = 0; i < m.bonds.size(); ++i)
      CHECK(m.bonds[i].in_ring == twice.bonds[i].in_ring);
  }
}

TEST_CASE("murcko scaffold") {
  SUBCASE("benzene is unchanged") {
    Molecule m = murcko_scaffold(parse_smiles("c1ccccc1"));
    CHECK(m.atoms.size() == 6);
    CHECK(m.bonds.size() == 6);
  }
  SUBCASE("acyclic input gives an empty scaffold") {
    CHECK(murcko_scaffold(parse_smiles("CCO")).atoms.empty());
    CHECK(murcko_scaffold(parse_smiles("C")).atoms.empty());
  }
  SUBCASE("toluene prunes to benzene, matching the pruning oracle") {
    Molecule tol = parse_smiles("Cc1ccccc1");
    std::vector<bool> in_ring;
    for (const auto& a : tol.atoms) in_ring.push_back(a.in_ring);
    auto survivors = oracles::murcko_surviving_atoms(tol.atoms.size(), bond_pairs(tol), in_ring);
    Molecule scaf = murcko_scaffold(tol);
    CHECK(scaf.atoms.size() == survivors.size());
    CHECK(scaf.atoms.size() == 6);
    for (const auto& a : scaf.atoms) CHECK(a.element == "C");
  }
  SUBCASE("biphenyl linker carbon survives") {
    Molecule m = murcko_scaffold(parse_smiles("c1ccccc1Cc1ccccc1"));
    CHECK(m.atoms.size() == 13);
  }
  SUBCASE("idempotent and a subset of the input") {
    for (const auto& s : drug_like_smiles()) {
      Molecule m = parse_smiles(s);
      Molecule s1 = murcko_scaffold(m);
      Molecule s2 = murcko_scaffold(s1);
      CHECK(s1.atoms.size() <= m.atoms.size());
      CHECK(s2.atoms.size() == s1.atoms.size());
      CHECK(s2.bonds.size() == s1.bonds.size());
    }
  }
}

TEST_CASE("parse totality and type invariants over the corpus") {
  for (const auto& s : drug_like_smiles()) {
    CAPTURE(s);
    Molecule m = parse_smiles(s);
    REQUIRE_FALSE(m.empty());
    std::vector<int> degree(m.atoms.size(), 0);
    for (const auto& b : m.bonds) {
      CHECK(b.a != b.b);
      CHECK(b.a >= 0);
      CHECK(b.b < static_cast<int>(m.atoms.size()));
      degree[b.a]++;
      degree[b.b]++;
      if (b.order == BondOrder::aromatic) {
        CHECK(m.atoms[b.a].aromatic);
        CHECK(m.atoms[b.b].aromatic);
      }
    }
    for (std::size_t i = 0; i < m.atoms.size(); ++i) {
      CHECK(m.atoms[i].degree == degree[i]);
      CHECK(m.atoms[i].implicit_h >= 0);
      if (m.atoms[i].aromatic) CHECK(m.atoms[i].in_ring);
    }
    // simple graph
    std::set<std::pair<int, int>> seen;
    for (const auto& b : m.bonds) {
      auto key = std::minmax(b.a, b.b);
      CHECK(seen.insert({key.first, key.second}).second);
    }
  }
}

TEST_CASE("CCO and OCC parse to isomorphic graphs") {
  Molecule a = parse_smiles("CCO");
  Molecule b = parse_smiles("OCC");
  CHECK(element_degree_multiset(a) == element_degree_multiset(b));
}

TEST_CASE("largest fragment is kept") {
  Molecule m = parse_smiles("CCO.C");
  CHECK(m.atoms.size() == 3);
  Molecule salt = parse_smiles("CC(=O)O.CCCCCC");
  CHECK(salt.atoms.size() == 6);
}

TEST_CASE("stereo and isotope markers parse and are discarded") {
  Molecule m = parse_smiles("C/C=C\\C");
  CHECK(m.atoms.size() == 4);
  Molecule iso = parse_smiles("[13CH4]");
  CHECK(iso.atoms[0].element == "C");
  CHECK(iso.atoms[0].implicit_h == 4);
  Molecule chiral = parse_smiles("N[C@@H](C)C(=O)O");
  CHECK(chiral.atoms.size() == 6);
  CHECK(chiral.atoms[1].implicit_h == 1);
}

TEST_CASE("parse error paths") {
  CHECK_THROWS_AS((void)parse_smiles(""), ParseError);
  CHECK_THROWS_AS((void)parse_smiles("C(C"), ParseError);    // unbalanced parentheses
  CHECK_THROWS_AS((void)parse_smiles("C)C"), ParseError);
  CHECK_THROWS_AS((void)parse_smiles("C1CC"), ParseError);   // unmatched ring closure
  CHECK_THROWS_AS((void)parse_smiles("Xx"), ParseError);     // unknown symbol
  CHECK_THROWS_AS((void)parse_smiles("[Na+]"), ParseError);  // outside the element table
  CHECK_THROWS_AS((void)parse_smiles("[N+5]"), ParseError);  // charge out of range
  CHECK_THROWS_AS((void)parse_smiles("[C-5]"), ParseError);
  CHECK_THROWS_AS((void)parse_smiles("C="), ParseError);     // trailing bond
  CHECK_THROWS_AS((void)parse_smiles("C==C"), ParseError);   // doubled bond symbol
  CHECK_THROWS_AS((void)parse_smiles("cc"), ParseError);     // aromatic atoms outside a ring
  CHECK_THROWS_AS((void)parse_smiles("C11"), ParseError);    // self bond
  CHECK_THROWS_AS((void)parse_smiles("C12CC12"), ParseError);  // parallel bond
}
