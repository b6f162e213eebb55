// graphcliff command-line tool: parse | fp | annotate | split | train | eval
// | analyze | export-gates | registry.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error (with row-level
// report), 3 numeric abort.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphcliff/analysis.hpp"
#include "graphcliff/chem.hpp"
#include "graphcliff/cliff.hpp"
#include "graphcliff/csv.hpp"
#include "graphcliff/fingerprint.hpp"
#include "graphcliff/graphnn.hpp"
#include "graphcliff/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace graphcliff;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct RunConfig {
  std::uint64_t seed = 0;
  FpConfig fp;
  ModelConfig model;
  TrainConfig train;
  CliffParams cliff;
  double test_frac = 0.2;
  ColumnMap columns;
  AnalysisOptions analysis;

  json to_json() const {
    return json{
        {"seed", seed},
        {"fingerprint", {{"radius", fp.radius}, {"nbits", fp.nbits}}},
        {"model",
         {{"d", model.d},
          {"layers", model.layers},
          {"cheb_k", model.cheb_k},
          {"pool_ratio", model.pool_ratio},
          {"use_short", model.use_short},
          {"use_long", model.use_long},
          {"use_gating", model.use_gating}}},
        {"train",
         {{"epochs", train.epochs},
          {"batch_size", train.batch_size},
          {"learning_rate", train.learning_rate},
          {"beta1", train.beta1},
          {"beta2", train.beta2},
          {"adam_eps", train.adam_eps},
          {"val_frac", train.val_frac},
          {"patience", train.patience},
          {"clip_norm", train.clip_norm}}},
        {"cliff", {{"sim_threshold", cliff.sim_threshold}, {"fold", cliff.fold}}},
        {"split", {{"test_frac", test_frac}}},
        {"columns",
         {{"smiles", columns.smiles},
          {"pki", columns.pki},
          {"cliff", columns.cliff},
          {"split", columns.split}}},
        {"analysis",
         {{"eps", analysis.hop.eps},
          {"k_max", analysis.hop.k_max},
          {"trials", analysis.hop.trials},
          {"max_molecules", analysis.max_molecules},
          {"gate_layer", analysis.gate_layer}}},
    };
  }
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("unknown config key '" + where + it.key() + "'");
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid JSON in config: ") + e.what());
  }
  reject_unknown(j, {"seed", "fingerprint", "model", "train", "cliff", "split", "columns",
                     "analysis"},
                 "");
  maybe(j, "seed", cfg.seed);
  if (j.contains("fingerprint")) {
    const auto& f = j["fingerprint"];
    reject_unknown(f, {"radius", "nbits"}, "fingerprint.");
    maybe(f, "radius", cfg.fp.radius);
    maybe(f, "nbits", cfg.fp.nbits);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, {"d", "layers", "cheb_k", "pool_ratio", "use_short", "use_long",
                       "use_gating"},
                   "model.");
    maybe(m, "d", cfg.model.d);
    maybe(m, "layers", cfg.model.layers);
    maybe(m, "cheb_k", cfg.model.cheb_k);
    maybe(m, "pool_ratio", cfg.model.pool_ratio);
    maybe(m, "use_short", cfg.model.use_short);
    maybe(m, "use_long", cfg.model.use_long);
    maybe(m, "use_gating", cfg.model.use_gating);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t, {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps",
                       "val_frac", "patience", "clip_norm"},
                   "train.");
    maybe(t, "epochs", cfg.train.epochs);
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "learning_rate", cfg.train.learning_rate);
    maybe(t, "beta1", cfg.train.beta1);
    maybe(t, "beta2", cfg.train.beta2);
    maybe(t, "adam_eps", cfg.train.adam_eps);
    maybe(t, "val_frac", cfg.train.val_frac);
    maybe(t, "patience", cfg.train.patience);
    maybe(t, "clip_norm", cfg.train.clip_norm);
  }
  if (j.contains("cliff")) {
    const auto& c = j["cliff"];
    reject_unknown(c, {"sim_threshold", "fold"}, "cliff.");
    maybe(c, "sim_threshold", cfg.cliff.sim_threshold);
    maybe(c, "fold", cfg.cliff.fold);
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    reject_unknown(s, {"test_frac"}, "split.");
    maybe(s, "test_frac", cfg.test_frac);
  }
  if (j.contains("columns")) {
    const auto& c = j["columns"];
    reject_unknown(c, {"smiles", "pki", "cliff", "split"}, "columns.");
    maybe(c, "smiles", cfg.columns.smiles);
    maybe(c, "pki", cfg.columns.pki);
    maybe(c, "cliff", cfg.columns.cliff);
    maybe(c, "split", cfg.columns.split);
  }
  if (j.contains("analysis")) {
    const auto& a = j["analysis"];
    reject_unknown(a, {"eps", "k_max", "trials", "max_molecules", "gate_layer"}, "analysis.");
    maybe(a, "eps", cfg.analysis.hop.eps);
    maybe(a, "k_max", cfg.analysis.hop.k_max);
    maybe(a, "trials", cfg.analysis.hop.trials);
    maybe(a, "max_molecules", cfg.analysis.max_molecules);
    maybe(a, "gate_layer", cfg.analysis.gate_layer);
  }
}

void finalize_config(RunConfig& cfg) {
  cfg.cliff.fp = cfg.fp;
  cfg.analysis.cliff = cfg.cliff;
  cfg.train.seed = cfg.seed;
  cfg.analysis.hop.seed = cfg.seed + 7;
  cfg.analysis.seed = cfg.seed + 11;
}

void write_artifact_preamble(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  json effective = cfg.to_json();
  effective["tool_version"] = kToolVersion;
  std::ofstream out(dir / "config_effective.json");
  out << effective.dump(2) << "\n";
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

json mol_to_json(const Molecule& mol) {
  json atoms = json::array();
  for (const auto& a : mol.atoms)
    atoms.push_back({{"element", a.element},
                     {"atomic_number", a.atomic_number},
                     {"charge", a.formal_charge},
                     {"aromatic", a.aromatic},
                     {"implicit_h", a.implicit_h},
                     {"in_ring", a.in_ring},
                     {"degree", a.degree}});
  json bonds = json::array();
  for (const auto& b : mol.bonds) {
    const char* order = b.order == BondOrder::single    ? "single"
                        : b.order == BondOrder::double_ ? "double"
                        : b.order == BondOrder::triple  ? "triple"
                                                        : "aromatic";
    bonds.push_back({{"a", b.a}, {"b", b.b}, {"order", order}, {"in_ring", b.in_ring}});
  }
  return json{{"smiles", mol.source_smiles},
              {"n_atoms", mol.atoms.size()},
              {"n_bonds", mol.bonds.size()},
              {"atoms", atoms},
              {"bonds", bonds}};
}

std::vector<std::string> gather_inputs(const std::vector<std::string>& positional,
                                       const std::string& in_path) {
  std::vector<std::string> smiles = positional;
  if (!in_path.empty()) {
    auto lines = read_lines(in_path);
    smiles.insert(smiles.end(), lines.begin(), lines.end());
  }
  if (smiles.empty()) throw DataError("no input SMILES given (use --in or positional args)");
  return smiles;
}

CsvTable records_to_csv(const std::vector<CompoundRecord>& records, const ColumnMap& cols) {
  CsvTable t;
  t.header = {cols.smiles, cols.pki, cols.cliff, cols.split};
  for (const auto& r : records) {
    std::vector<std::string> row(4);
    row[0] = r.smiles;
    row[1] = fmt17(r.pki);
    row[2] = r.cliff ? (*r.cliff ? "1" : "0") : "";
    row[3] = r.split ? (*r.split == Split::test ? "test" : "train") : "";
    t.rows.push_back(std::move(row));
  }
  return t;
}

int cmd_parse(const std::vector<std::string>& smiles, const std::string& out_dir,
              const RunConfig& cfg) {
  json out = json::array();
  std::size_t failures = 0;
  for (const auto& s : smiles) {
    try {
      out.push_back(mol_to_json(parse_smiles(s)));
    } catch (const ParseError& e) {
      ++failures;
      out.push_back({{"smiles", s}, {"error", e.what()}});
      std::cerr << "skip: " << e.what() << "\n";
    }
  }
  if (!out_dir.empty()) {
    write_artifact_preamble(out_dir, cfg);
    std::ofstream f(fs::path(out_dir) / "molecules.json");
    f << out.dump(2) << "\n";
  } else {
    std::cout << out.dump(2) << "\n";
  }
  return failures == smiles.size() ? 2 : 0;
}

int cmd_fp(const std::vector<std::string>& smiles, const std::string& out_dir,
           const RunConfig& cfg) {
  std::vector<std::string> lines;
  std::size_t failures = 0;
  for (const auto& s : smiles) {
    try {
      lines.push_back(ecfp(parse_smiles(s), cfg.fp).to_hex());
    } catch (const ParseError& e) {
      ++failures;
      lines.push_back("");
      std::cerr << "skip: " << e.what() << "\n";
    }
  }
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_dir.empty()) {
    write_artifact_preamble(out_dir, cfg);
    file.open(fs::path(out_dir) / "fingerprints.txt");
    os = &file;
  }
  for (const auto& l : lines) *os << l << "\n";
  return failures == smiles.size() ? 2 : 0;
}

int cmd_annotate(const std::string& in_path, const std::string& out_dir, const RunConfig& cfg) {
  LoadReport report;
  auto records = load_dataset(in_path, cfg.columns, &report);
  CliffAnnotation ann = annotate_cliffs(records, cfg.cliff);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].cliff = ann.compound_is_cliff[i];

  write_artifact_preamble(out_dir, cfg);
  write_csv((fs::path(out_dir) / "annotated.csv").string(), records_to_csv(records, cfg.columns));

  const auto n_cliff = static_cast<std::size_t>(
      std::count(ann.compound_is_cliff.begin(), ann.compound_is_cliff.end(), true));
  json summary{{"records", records.size()},
               {"cliff_compounds", n_cliff},
               {"cliff_ratio", static_cast<double>(n_cliff) / static_cast<double>(records.size())},
               {"cliff_pairs", ann.cliff_pairs.size()},
               {"skipped_rows", report.skipped_rows},
               {"skip_messages", report.skip_messages}};
  std::ofstream f(fs::path(out_dir) / "summary.json");
  f << summary.dump(2) << "\n";
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_split(const std::string& in_path, const std::string& out_dir, const RunConfig& cfg) {
  LoadReport report;
  auto records = load_dataset(in_path, cfg.columns, &report);
  stratified_split(records, cfg.test_frac, cfg.seed);

  write_artifact_preamble(out_dir, cfg);
  write_csv((fs::path(out_dir) / "split.csv").string(), records_to_csv(records, cfg.columns));

  std::size_t n_test = 0, n_test_cliff = 0, n_cliff = 0;
  for (const auto& r : records) {
    if (r.cliff.value_or(false)) ++n_cliff;
    if (r.split == Split::test) {
      ++n_test;
      if (r.cliff.value_or(false)) ++n_test_cliff;
    }
  }
  json summary{{"records", records.size()}, {"test", n_test},
               {"cliff_compounds", n_cliff}, {"test_cliff", n_test_cliff},
               {"skipped_rows", report.skipped_rows}};
  std::ofstream f(fs::path(out_dir) / "summary.json");
  f << summary.dump(2) << "\n";
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_train(const std::string& in_path, const std::string& out_dir,
              const std::string& warm_start_path, const RunConfig& cfg) {
  LoadReport report;
  auto records = load_dataset(in_path, cfg.columns, &report);

  std::optional<Checkpoint> warm;
  if (!warm_start_path.empty()) warm = load_checkpoint(warm_start_path);

  TrainResult result = train_model(records, cfg.train, cfg.model, warm ? &*warm : nullptr);

  write_artifact_preamble(out_dir, cfg);
  save_checkpoint((fs::path(out_dir) / "checkpoint.gcckpt").string(), result.checkpoint);

  {
    std::ofstream hist(fs::path(out_dir) / "history.csv");
    hist << "epoch,train_rmse,val_rmse\n";
    for (const auto& h : result.history) {
      hist << h.epoch << "," << fmt17(h.train_rmse) << ",";
      if (std::isfinite(h.val_rmse)) hist << fmt17(h.val_rmse);
      hist << "\n";
    }
  }

  json summary{{"epochs_run", result.history.size()},
               {"skipped_rows", report.skipped_rows},
               {"parameters", result.checkpoint.to_params().parameter_count()},
               {"warm_start",
                {{"loaded", result.warm_start_report.loaded},
                 {"ignored_extras", result.warm_start_report.ignored_extras},
                 {"left_fresh", result.warm_start_report.left_fresh}}}};
  if (!result.history.empty()) {
    summary["final_train_rmse"] = result.history.back().train_rmse;
    if (std::isfinite(result.history.back().val_rmse))
      summary["final_val_rmse"] = result.history.back().val_rmse;
  }
  for (const auto& w : result.warm_start_report.ignored_extras)
    std::cerr << "warm start: ignoring extra array '" << w << "'\n";
  std::ofstream f(fs::path(out_dir) / "summary.json");
  f << summary.dump(2) << "\n";
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& in_path, const std::string& checkpoint_path,
             const std::string& out_dir, bool test_only, const RunConfig& cfg) {
  LoadReport report;
  auto records = load_dataset(in_path, cfg.columns, &report);
  if (test_only) {
    std::vector<CompoundRecord> filtered;
    for (const auto& r : records)
      if (r.split == Split::test) filtered.push_back(r);
    records = std::move(filtered);
    if (records.empty()) throw DataError("eval: no records in the test split");
  }
  Checkpoint ck = load_checkpoint(checkpoint_path);
  EvalResult res = evaluate(ck, records);

  json metrics{{"rmse", res.rmse},
               {"rmse_cliff", res.rmse_cliff ? json(*res.rmse_cliff) : json(nullptr)},
               {"n", res.n},
               {"n_cliff", res.n_cliff}};
  if (!out_dir.empty()) {
    write_artifact_preamble(out_dir, cfg);
    std::ofstream f(fs::path(out_dir) / "metrics.json");
    f << metrics.dump(2) << "\n";
  }
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

int cmd_analyze(const std::string& in_path, const std::string& checkpoint_path,
                const std::string& out_dir, bool test_only, const RunConfig& cfg) {
  LoadReport report;
  auto records = load_dataset(in_path, cfg.columns, &report);
  if (test_only) {
    std::vector<CompoundRecord> filtered;
    for (const auto& r : records)
      if (r.split == Split::test) filtered.push_back(r);
    if (!filtered.empty()) records = std::move(filtered);
  }
  Checkpoint ck = load_checkpoint(checkpoint_path);
  AnalysisReport rep = analyze_model(ck, records, cfg.analysis);

  write_artifact_preamble(out_dir, cfg);
  const fs::path dir(out_dir);

  {
    std::ofstream f(dir / "hop_sensitivity.csv");
    f << "hop,sensitivity\n";
    for (const auto& [k, v] : rep.hop_sensitivity) f << k << "," << fmt17(v) << "\n";
  }
  {
    std::ofstream f(dir / "dirichlet.csv");
    f << "layer,energy\n";
    for (std::size_t l = 0; l < rep.dirichlet.size(); ++l)
      f << l << "," << fmt17(rep.dirichlet[l]) << "\n";
  }
  {
    std::ofstream f(dir / "jacobian.csv");
    f << "layer,top_singular_value,converged,iterations\n";
    for (std::size_t l = 0; l < rep.jacobian.size(); ++l)
      f << l << "," << fmt17(rep.jacobian[l].sigma) << "," << (rep.jacobian[l].converged ? 1 : 0)
        << "," << rep.jacobian[l].iterations << "\n";
  }
  {
    std::ofstream f(dir / "pair_scatter.csv");
    f << "x,y\n";
    for (std::size_t i = 0; i < rep.scatter.x.size(); ++i)
      f << fmt17(rep.scatter.x[i]) << "," << fmt17(rep.scatter.y[i]) << "\n";
  }
  {
    std::ofstream f(dir / "gate_scores.csv");
    f << "molecule,atom,score\n";
    for (std::size_t m = 0; m < rep.gate_scores.size(); ++m)
      for (std::size_t a = 0; a < rep.gate_scores[m].size(); ++a)
        f << m << "," << a << "," << fmt17(rep.gate_scores[m][a]) << "\n";
  }

  json jrep{{"hop_sensitivity", json::object()},
            {"dirichlet", rep.dirichlet},
            {"jacobian_top_singular", json::array()},
            {"slope", nullptr}};
  for (const auto& [k, v] : rep.hop_sensitivity)
    jrep["hop_sensitivity"][std::to_string(k)] = v;
  for (const auto& j : rep.jacobian)
    jrep["jacobian_top_singular"].push_back(
        {{"sigma", j.sigma}, {"converged", j.converged}, {"iterations", j.iterations}});
  if (rep.slope)
    jrep["slope"] = {{"slope", rep.slope->slope}, {"intercept", rep.slope->intercept}};
  jrep["gate_scores"] = rep.gate_scores;
  std::ofstream f(dir / "report.json");
  f << jrep.dump(2) << "\n";
  std::cout << jrep.dump(2) << "\n";
  return 0;
}

int cmd_export_gates(const std::vector<std::string>& smiles, const std::string& checkpoint_path,
                     const std::string& out_dir, std::size_t layer, const RunConfig& cfg) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_dir.empty()) {
    write_artifact_preamble(out_dir, cfg);
    file.open(fs::path(out_dir) / "gate_scores.csv");
    os = &file;
  }
  *os << "molecule,smiles,atom,score\n";
  std::size_t failures = 0;
  for (std::size_t m = 0; m < smiles.size(); ++m) {
    try {
      Molecule mol = parse_smiles(smiles[m]);
      auto scores = export_gate_scores(ck, mol, layer);
      for (std::size_t a = 0; a < scores.size(); ++a)
        *os << m << "," << csv_escape(smiles[m]) << "," << a << "," << fmt17(scores[a]) << "\n";
    } catch (const ParseError& e) {
      ++failures;
      std::cerr << "skip: " << e.what() << "\n";
    }
  }
  return failures == smiles.size() ? 2 : 0;
}

int cmd_registry(const std::string& dir, const std::string& out_dir, const RunConfig& cfg) {
  if (!fs::is_directory(dir)) throw DataError("registry: not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("registry: no CSV files in " + dir);

  json out = json::array();
  for (const auto& f : files) {
    json entry{{"file", f.filename().string()}, {"dataset", f.stem().string()}};
    try {
      CsvTable t = read_csv(f.string());
      const int c_cliff = t.column(cfg.columns.cliff);
      const int c_split = t.column(cfg.columns.split);
      const int c_smiles = t.column(cfg.columns.smiles);
      std::size_t total = t.rows.size(), cliff = 0, train = 0, test = 0, train_cliff = 0,
                  test_cliff = 0, parse_failures = 0;
      for (const auto& row : t.rows) {
        const bool is_cliff = c_cliff >= 0 && static_cast<std::size_t>(c_cliff) < row.size() &&
                              (row[c_cliff] == "1" || row[c_cliff] == "true" ||
                               row[c_cliff] == "True");
        const bool is_test = c_split >= 0 && static_cast<std::size_t>(c_split) < row.size() &&
                             row[c_split] == "test";
        if (is_cliff) ++cliff;
        if (is_test) {
          ++test;
          if (is_cliff) ++test_cliff;
        } else if (c_split >= 0) {
          ++train;
          if (is_cliff) ++train_cliff;
        }
        if (c_smiles >= 0 && static_cast<std::size_t>(c_smiles) < row.size()) {
          try {
            (void)parse_smiles(row[c_smiles]);
          } catch (const ParseError&) {
            ++parse_failures;
          }
        }
      }
      entry["total"] = total;
      entry["cliff"] = cliff;
      entry["train"] = train;
      entry["test"] = test;
      entry["train_cliff"] = train_cliff;
      entry["test_cliff"] = test_cliff;
      entry["parse_failures"] = parse_failures;
    } catch (const std::exception& e) {
      entry["error"] = e.what();
      std::cerr << "registry: " << f << ": " << e.what() << "\n";
    }
    out.push_back(entry);
  }
  if (!out_dir.empty()) {
    write_artifact_preamble(out_dir, cfg);
    std::ofstream f(fs::path(out_dir) / "registry.json");
    f << out.dump(2) << "\n";
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GraphCliff: gated short/long-range graph regression for activity cliffs"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;

  // shared option storage
  std::string in_path, out_dir, checkpoint_path, warm_start_path, registry_dir;
  std::vector<std::string> positional_smiles;
  std::size_t gate_layer = 0;
  bool test_only = false;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file (flags override file values)");
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "global random seed");
  };
  auto add_fp_opts = [&](CLI::App* sub) {
    sub->add_option("--radius", cfg.fp.radius, "fingerprint radius");
    sub->add_option("--nbits", cfg.fp.nbits, "fingerprint width (power of two)");
  };
  auto add_model_opts = [&](CLI::App* sub) {
    sub->add_option("--d", cfg.model.d, "hidden width");
    sub->add_option("--layers", cfg.model.layers, "number of filters");
    sub->add_option("--cheb-k", cfg.model.cheb_k, "Chebyshev order");
    sub->add_option("--pool-ratio", cfg.model.pool_ratio, "SAGPool keep ratio");
    sub->add_flag("--no-short", [&cfg](std::int64_t) { cfg.model.use_short = false; },
                  "disable the short-range filter");
    sub->add_flag("--no-long", [&cfg](std::int64_t) { cfg.model.use_long = false; },
                  "disable the long-range filter");
    sub->add_flag("--no-gating", [&cfg](std::int64_t) { cfg.model.use_gating = false; },
                  "disable gated fusion");
  };
  auto add_column_opts = [&](CLI::App* sub) {
    sub->add_option("--smiles-col", cfg.columns.smiles, "SMILES column name");
    sub->add_option("--pki-col", cfg.columns.pki, "label column name");
    sub->add_option("--cliff-col", cfg.columns.cliff, "cliff flag column name");
    sub->add_option("--split-col", cfg.columns.split, "split column name");
  };

  auto* parse_cmd = app.add_subcommand("parse", "parse SMILES into molecule JSON summaries");
  add_config(parse_cmd);
  parse_cmd->add_option("smiles", positional_smiles, "SMILES strings");
  parse_cmd->add_option("--in", in_path, "file with one SMILES per line");
  parse_cmd->add_option("--out", out_dir, "output directory");

  auto* fp_cmd = app.add_subcommand("fp", "emit hex fingerprints, one per input line");
  add_config(fp_cmd);
  fp_cmd->add_option("smiles", positional_smiles, "SMILES strings");
  fp_cmd->add_option("--in", in_path, "file with one SMILES per line");
  fp_cmd->add_option("--out", out_dir, "output directory");
  add_fp_opts(fp_cmd);

  auto* annotate_cmd = app.add_subcommand("annotate", "annotate activity cliffs in a CSV");
  add_config(annotate_cmd);
  annotate_cmd->add_option("--in", in_path, "input CSV")->required();
  annotate_cmd->add_option("--out", out_dir, "output directory")->required();
  annotate_cmd->add_option("--sim-threshold", cfg.cliff.sim_threshold, "similarity threshold");
  annotate_cmd->add_option("--fold", cfg.cliff.fold, "potency fold difference");
  add_fp_opts(annotate_cmd);
  add_column_opts(annotate_cmd);

  auto* split_cmd = app.add_subcommand("split", "assign a cliff-stratified train/test split");
  add_config(split_cmd);
  split_cmd->add_option("--in", in_path, "input CSV")->required();
  split_cmd->add_option("--out", out_dir, "output directory")->required();
  split_cmd->add_option("--test-frac", cfg.test_frac, "test fraction");
  add_seed(split_cmd);
  add_column_opts(split_cmd);

  auto* train_cmd = app.add_subcommand("train", "train a model on the train split");
  add_config(train_cmd);
  train_cmd->add_option("--in", in_path, "input CSV with split labels")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  train_cmd->add_option("--warm-start", warm_start_path, "checkpoint to warm-start from");
  train_cmd->add_option("--epochs", cfg.train.epochs, "training epochs");
  train_cmd->add_option("--batch-size", cfg.train.batch_size, "batch size");
  train_cmd->add_option("--lr", cfg.train.learning_rate, "learning rate");
  train_cmd->add_option("--val-frac", cfg.train.val_frac, "validation fraction of train");
  train_cmd->add_option("--patience", cfg.train.patience, "early-stop patience (0 disables)");
  add_seed(train_cmd);
  add_model_opts(train_cmd);
  add_column_opts(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint (RMSE and RMSE_cliff)");
  add_config(eval_cmd);
  eval_cmd->add_option("--in", in_path, "input CSV")->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval_cmd->add_option("--out", out_dir, "output directory");
  eval_cmd->add_flag("--test-only", test_only, "restrict to rows with split == test");
  add_column_opts(eval_cmd);

  auto* analyze_cmd = app.add_subcommand("analyze", "over-smoothing diagnostics");
  add_config(analyze_cmd);
  analyze_cmd->add_option("--in", in_path, "input CSV")->required();
  analyze_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  analyze_cmd->add_option("--out", out_dir, "output directory")->required();
  analyze_cmd->add_flag("--test-only", test_only, "restrict to rows with split == test");
  analyze_cmd->add_option("--eps", cfg.analysis.hop.eps, "perturbation magnitude");
  analyze_cmd->add_option("--k-max", cfg.analysis.hop.k_max, "max hop distance");
  analyze_cmd->add_option("--trials", cfg.analysis.hop.trials, "perturbation trials per node");
  analyze_cmd->add_option("--max-molecules", cfg.analysis.max_molecules,
                          "molecules probed by hop/jacobian diagnostics");
  analyze_cmd->add_option("--gate-layer", cfg.analysis.gate_layer, "layer for gate scores");
  analyze_cmd->add_option("--sim-threshold", cfg.cliff.sim_threshold, "similarity threshold");
  analyze_cmd->add_option("--fold", cfg.cliff.fold, "potency fold difference");
  add_seed(analyze_cmd);
  add_fp_opts(analyze_cmd);
  add_column_opts(analyze_cmd);

  auto* gates_cmd = app.add_subcommand("export-gates", "per-atom gate scores for molecules");
  add_config(gates_cmd);
  gates_cmd->add_option("smiles", positional_smiles, "SMILES strings");
  gates_cmd->add_option("--in", in_path, "file with one SMILES per line");
  gates_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  gates_cmd->add_option("--out", out_dir, "output directory");
  gates_cmd->add_option("--layer", gate_layer, "filter layer (default 0)");

  auto* registry_cmd = app.add_subcommand("registry", "summarize a directory of benchmark CSVs");
  add_config(registry_cmd);
  registry_cmd->add_option("--dir", registry_dir, "directory of CSVs")->required();
  registry_cmd->add_option("--out", out_dir, "output directory");
  add_column_opts(registry_cmd);

  // parse twice so a config file loads first and explicit flags then override
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  try {
    if (!config_path.empty()) {
      load_config_file(config_path, cfg);
      app.clear();
      app.parse(argc, argv);
    }
    finalize_config(cfg);

    if (parse_cmd->parsed()) return cmd_parse(gather_inputs(positional_smiles, in_path), out_dir, cfg);
    if (fp_cmd->parsed()) return cmd_fp(gather_inputs(positional_smiles, in_path), out_dir, cfg);
    if (annotate_cmd->parsed()) return cmd_annotate(in_path, out_dir, cfg);
    if (split_cmd->parsed()) return cmd_split(in_path, out_dir, cfg);
    if (train_cmd->parsed()) return cmd_train(in_path, out_dir, warm_start_path, cfg);
    if (eval_cmd->parsed()) return cmd_eval(in_path, checkpoint_path, out_dir, test_only, cfg);
    if (analyze_cmd->parsed())
      return cmd_analyze(in_path, checkpoint_path, out_dir, test_only, cfg);
    if (gates_cmd->parsed())
      return cmd_export_gates(gather_inputs(positional_smiles, in_path), checkpoint_path,
                              out_dir, gate_layer, cfg);
    if (registry_cmd->parsed()) return cmd_registry(registry_dir, out_dir, cfg);
    std::cerr << "no subcommand given\n";
    return 1;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
