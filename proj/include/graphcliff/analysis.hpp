#pragma once

// Over-smoothing diagnostics: hop-wise perturbation sensitivity, Dirichlet
// energy, Jacobian top singular values (power iteration on J^T J via
// finite-difference JVPs and reverse-mode VJPs), the fingerprint-vs-embedding
// distance regression, and gate-score export.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "graphcliff/cliff.hpp"
#include "graphcliff/graphnn.hpp"
#include "graphcliff/train.hpp"

namespace graphcliff {

// node features -> final-layer node embeddings on a fixed graph
using EmbedFn = std::function<Tensor(const Tensor&)>;

struct HopSensitivityOptions {
  double eps = 1e-3;
  int k_max = 5;
  int trials = 8;
  std::uint64_t seed = 7;
};

struct HopAccumulator {
  std::map<int, double> sum;
  std::map<int, std::size_t> count;

  void merge(const HopAccumulator& other);
  std::map<int, double> means() const;
};

// Perturbs each node's input features along random unit directions and
// averages ||h_v(pert) - h_v(orig)|| / eps over targets v grouped by hop
// distance from the source. Hops with no node pair are absent.
HopAccumulator hop_sensitivity_accumulate(const EmbedFn& embed, const GraphBatch& batch,
                                          const Tensor& x, const HopSensitivityOptions& opts);
std::map<int, double> hop_sensitivity(const ModelParams& params, const ModelConfig& cfg,
                                      const Molecule& mol,
                                      const HopSensitivityOptions& opts = {});

// E = sum over undirected edges of ||h_i - h_j||^2.
double dirichlet_energy(const Tensor& h,
                        const std::vector<std::pair<std::size_t, std::size_t>>& edges);

struct PowerIterationResult {
  double sigma = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

// layer_fn must be differentiable at x (any output shape).
PowerIterationResult jacobian_top_singular(const std::function<Tensor(const Tensor&)>& layer_fn,
                                           const Tensor& x, std::size_t iters = 100,
                                           double tol = 1e-8, std::uint64_t seed = 11);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Min-max normalizes x and y independently to [0,1], then ordinary least
// squares with intercept. Throws when all x coincide.
SlopeFit fit_minmax_regression(const std::vector<double>& x, const std::vector<double>& y);

struct DistancePoints {
  std::vector<double> x;  // 1 - tanimoto(ECFP_i, ECFP_j)
  std::vector<double> y;  // Euclidean distance between pooled embeddings
};

DistancePoints embedding_vs_ecfp_points(const Checkpoint& checkpoint,
                                        const std::vector<CompoundRecord>& records,
                                        const std::vector<CliffPair>& pairs,
                                        const FpConfig& fp_cfg = {});

// x = 1 - tanimoto(ECFP_i, ECFP_j), y = Euclidean distance between pooled
// graph embeddings, one point per cliff pair.
SlopeFit embedding_vs_ecfp_slope(const Checkpoint& checkpoint,
                                 const std::vector<CompoundRecord>& records,
                                 const std::vector<CliffPair>& pairs,
                                 const FpConfig& fp_cfg = {});

// Per-atom mean over the feature dim of sigma(x1) at the chosen layer,
// min-max normalized over the molecule; constant gates map to 0.5.
std::vector<double> export_gate_scores(const Checkpoint& checkpoint, const Molecule& mol,
                                       std::size_t layer);

struct AnalysisReport {
  std::map<int, double> hop_sensitivity;       // hop -> mean
  std::vector<double> dirichlet;               // per layer (0..L)
  std::vector<PowerIterationResult> jacobian;  // per filter layer
  std::optional<SlopeFit> slope;
  DistancePoints scatter;                      // min-max normalized pair points
  std::vector<std::vector<double>> gate_scores;  // per molecule, per atom
};

struct AnalysisOptions {
  HopSensitivityOptions hop;
  std::size_t max_molecules = 16;  // cap for hop/jacobian probes
  std::size_t gate_layer = 0;      // layer whose gates are exported
  std::uint64_t seed = 11;
  CliffParams cliff;
};

AnalysisReport analyze_model(const Checkpoint& checkpoint,
                             const std::vector<CompoundRecord>& records,
                             const AnalysisOptions& opts = {});

}  // namespace graphcliff
