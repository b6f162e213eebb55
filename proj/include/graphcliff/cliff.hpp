#pragma once

// Dataset ingestion, activity-cliff annotation and cliff-ratio-preserving
// splits. A cliff pair is structurally similar (any of substructure, scaffold
// or SMILES-string similarity above the threshold) with a potency gap of at
// least log10(fold) pKi units.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graphcliff/csv.hpp"
#include "graphcliff/fingerprint.hpp"

namespace graphcliff {

enum class Split : std::uint8_t { train, test };

struct CompoundRecord {
  int id = 0;
  std::string smiles;
  double pki = 0.0;
  std::optional<bool> cliff;
  std::optional<Split> split;
};

struct ColumnMap {
  std::string smiles = "smiles";
  std::string pki = "y";
  std::string cliff = "cliff_mol";
  std::string split = "split";
};

struct LoadReport {
  std::size_t total_rows = 0;
  std::size_t skipped_rows = 0;
  std::vector<std::string> skip_messages;
};

// Reads a CSV with a header row; rows whose SMILES fail to parse are skipped
// and counted in the report. The pki column is required; cliff/split columns
// are picked up when present.
std::vector<CompoundRecord> load_dataset(const std::string& path,
                                         const ColumnMap& columns = {},
                                         LoadReport* report = nullptr);

struct CliffPair {
  int i = 0;
  int j = 0;
  double sim_substructure = 0.0;
  double sim_scaffold = 0.0;
  double sim_smiles = 0.0;
  double delta_pki = 0.0;
  bool is_cliff = true;
};

struct CliffAnnotation {
  std::vector<CliffPair> cliff_pairs;  // i < j, ordered
  std::vector<bool> compound_is_cliff;
};

struct CliffParams {
  double sim_threshold = 0.9;
  double fold = 10.0;
  FpConfig fp;
};

// Scores all n(n-1)/2 pairs; a compound is a cliff iff it belongs to at
// least one cliff pair. All SMILES must parse.
CliffAnnotation annotate_cliffs(const std::vector<CompoundRecord>& records,
                                const CliffParams& params = {});

// Deterministic stratified split: within each stratum (cliff / non-cliff)
// round(test_frac * count) records go to test.
void stratified_split(std::vector<CompoundRecord>& records, double test_frac,
                      std::uint64_t seed);

}  // namespace graphcliff
