#pragma once

// A practical SMILES subset parsed into heavy-atom molecular graphs.
// Grammar: organic-subset atoms B,C,N,O,P,S,F,Cl,Br,I and aromatic
// b,c,n,o,p,s; bracket atoms with optional isotope (discarded), explicit H
// count, charge in [-4,+4] and atom class (discarded); branches; ring
// closures 1-9 and %nn; bond symbols - = # : and stereo / \ (read as single,
// marker discarded); @/@@ chirality discarded; dot-separated fragments with
// only the largest fragment kept.

#include <cstdint>
#include <string>
#include <vector>

#include "graphcliff/tensor.hpp"  // for Error

namespace graphcliff {

enum class BondOrder : std::uint8_t { single = 1, double_ = 2, triple = 3, aromatic = 4 };

struct Atom {
  std::string element;   // symbol from the fixed table
  int atomic_number = 0;
  int formal_charge = 0;
  bool aromatic = false;
  int implicit_h = 0;
  bool in_ring = false;
  int degree = 0;
};

struct Bond {
  int a = -1;
  int b = -1;
  BondOrder order = BondOrder::single;
  bool in_ring = false;
};

struct Molecule {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::string source_smiles;

  std::size_t size() const { return atoms.size(); }
  bool empty() const { return atoms.empty(); }
  // neighbor list as (atom index, bond index) pairs
  std::vector<std::vector<std::pair<int, int>>> adjacency() const;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Parses the supported grammar, keeps the largest dot-fragment, computes
// implicit hydrogens by standard valence rules and perceives rings.
//
// Implicit-H rule: bond-order sum counts single/double/triple as 1/2/3 and
// each aromatic bond as 1.5, with the total rounded down. Non-aromatic atoms
// use the smallest standard valence >= that sum (B 3, C 4, N 3, O 2, P 3/5,
// S 2/4/6, halogens 1); aromatic atoms are capped at the element's default
// (lowest) valence, so any excess yields zero implicit hydrogens. Bracket
// atoms take their hydrogen count literally.
Molecule parse_smiles(const std::string& text);

// Flags every atom/bond lying on a cycle (an edge is in a ring iff it is not
// a bridge). Idempotent; acyclic molecules get all flags false.
void perceive_rings(Molecule& mol);

// Ring systems plus linkers: iteratively removes atoms of degree <= 1 that
// are not in rings until a fixpoint. Acyclic input yields an empty molecule.
Molecule murcko_scaffold(const Molecule& mol);

}  // namespace graphcliff
