#include "graphcliff/cliff.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "graphcliff/csv.hpp"

namespace graphcliff {

namespace {

bool parse_flag(const std::string& s) {
  return s == "1" || s == "true" || s == "True" || s == "TRUE";
}

}  // namespace

std::vector<CompoundRecord> load_dataset(const std::string& path, const ColumnMap& columns,
                                         LoadReport* report) {
  CsvTable table = read_csv(path);
  if (table.header.empty()) throw DataError("empty CSV file: " + path);

  const int c_smiles = table.column(columns.smiles);
  const int c_pki = table.column(columns.pki);
  if (c_smiles < 0) throw DataError("missing column '" + columns.smiles + "' in " + path);
  if (c_pki < 0) throw DataError("missing column '" + columns.pki + "' in " + path);
  const int c_cliff = table.column(columns.cliff);
  const int c_split = table.column(columns.split);

  LoadReport local;
  std::vector<CompoundRecord> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    local.total_rows++;
    auto skip = [&](const std::string& why) {
      local.skipped_rows++;
      local.skip_messages.push_back("row " + std::to_string(r + 2) + ": " + why);
    };
    if (static_cast<std::size_t>(std::max(c_smiles, c_pki)) >= row.size()) {
      skip("too few fields");
      continue;
    }
    CompoundRecord rec;
    rec.id = static_cast<int>(out.size());
    rec.smiles = row[c_smiles];
    try {
      (void)parse_smiles(rec.smiles);
    } catch (const ParseError& e) {
      skip(e.what());
      continue;
    }
    try {
      rec.pki = std::stod(row[c_pki]);
    } catch (...) {
      skip("unparseable label '" + row[c_pki] + "'");
      continue;
    }
    if (!std::isfinite(rec.pki)) {
      skip("non-finite label");
      continue;
    }
    if (c_cliff >= 0 && static_cast<std::size_t>(c_cliff) < row.size() && !row[c_cliff].empty())
      rec.cliff = parse_flag(row[c_cliff]);
    if (c_split >= 0 && static_cast<std::size_t>(c_split) < row.size() && !row[c_split].empty())
      rec.split = row[c_split] == "test" ? Split::test : Split::train;
    out.push_back(std::move(rec));
  }
  if (out.empty()) throw DataError("no usable rows in " + path);
  if (report) *report = std::move(local);
  return out;
}

CliffAnnotation annotate_cliffs(const std::vector<CompoundRecord>& records,
                                const CliffParams& params) {
  if (records.size() < 2) throw DataError("annotate_cliffs: need at least two records");
  if (params.fold <= 1.0) throw DataError("annotate_cliffs: fold must exceed 1");
  if (params.sim_threshold <= 0.0 || params.sim_threshold >= 1.0)
    throw DataError("annotate_cliffs: threshold must lie in (0,1)");

  const double min_delta = std::log10(params.fold);
  const std::size_t n = records.size();

  std::vector<Fingerprint> fps(n), scaffold_fps(n);
  for (std::size_t i = 0; i < n; ++i) {
    Molecule mol = parse_smiles(records[i].smiles);
    fps[i] = ecfp(mol, params.fp);
    scaffold_fps[i] = ecfp(murcko_scaffold(mol), params.fp);
  }

  CliffAnnotation out;
  out.compound_is_cliff.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double delta = records[i].pki - records[j].pki;
      if (std::abs(delta) < min_delta) continue;  // potency gate first, it is cheap
      const double sim_sub = tanimoto(fps[i], fps[j]);
      bool similar = sim_sub > params.sim_threshold;
      double sim_scaf = -1.0;
      if (!similar) {
        sim_scaf = tanimoto(scaffold_fps[i], scaffold_fps[j]);
        similar = sim_scaf > params.sim_threshold;
      }
      if (!similar &&
          !levenshtein_similarity_exceeds(records[i].smiles, records[j].smiles,
                                          params.sim_threshold))
        continue;
      CliffPair p;
      p.i = static_cast<int>(i);
      p.j = static_cast<int>(j);
      p.sim_substructure = sim_sub;
      p.sim_scaffold = sim_scaf >= 0.0 ? sim_scaf : tanimoto(scaffold_fps[i], scaffold_fps[j]);
      p.sim_smiles = levenshtein_similarity(records[i].smiles, records[j].smiles);
      p.delta_pki = delta;
      out.cliff_pairs.push_back(p);
      out.compound_is_cliff[i] = true;
      out.compound_is_cliff[j] = true;
    }
  }
  return out;
}

void stratified_split(std::vector<CompoundRecord>& records, double test_frac,
                      std::uint64_t seed) {
  if (test_frac <= 0.0 || test_frac >= 1.0)
    throw DataError("stratified_split: test_frac must lie in (0,1)");
  std::mt19937_64 rng(seed);

  std::vector<std::size_t> cliff_idx, plain_idx;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].cliff.value_or(false))
      cliff_idx.push_back(i);
    else
      plain_idx.push_back(i);
  }
  auto assign = [&](std::vector<std::size_t>& idx) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test = static_cast<std::size_t>(
        std::llround(test_frac * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < idx.size(); ++k)
      records[idx[k]].split = k < n_test ? Split::test : Split::train;
  };
  assign(cliff_idx);
  assign(plain_idx);
}

}  // namespace graphcliff
