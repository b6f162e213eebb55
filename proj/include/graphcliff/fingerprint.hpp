#pragma once

// Morgan-style circular fingerprints and the similarity measures used for
// activity-cliff annotation.

#include <cstdint>
#include <set>
#include <string>

#include "graphcliff/chem.hpp"

namespace graphcliff {

struct FpConfig {
  int radius = 2;
  int nbits = 1024;

  void validate() const;
};

struct Fingerprint {
  int nbits = 1024;
  std::set<std::uint32_t> on_bits;

  bool empty() const { return on_bits.empty(); }
  std::string to_hex() const;  // nbits/4 hex chars, byte k holds bits 8k..8k+7 (LSB first)
};

// Circular fingerprint: the initial per-atom identifier is a seeded 64-bit
// FNV-1a hash of (atomic_number, degree, formal_charge, implicit_h, aromatic,
// in_ring); each round r in 1..radius rehashes (r, own id, sorted list of
// (bond-order code, neighbor id)). Identifiers from every round are
// deduplicated by value and folded as id mod nbits.
Fingerprint ecfp(const Molecule& mol, const FpConfig& cfg = {});

// |A∩B| / |A∪B|; both empty -> 0.0; nbits must match.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

std::size_t levenshtein_distance(const std::string& a, const std::string& b);

// 1 - lev(a,b)/max(|a|,|b|); both empty -> 1.0.
double levenshtein_similarity(const std::string& a, const std::string& b);

// True iff levenshtein_similarity(a,b) > threshold, decided with a banded
// DP that never explores distances beyond the threshold band.
bool levenshtein_similarity_exceeds(const std::string& a, const std::string& b,
                                    double threshold);

}  // namespace graphcliff
