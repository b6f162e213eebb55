#pragma once

// Featurization and the GraphCliff network: atom encoder, stacked filters
// (normalization + projection -> GINE -> three-way split -> Chebyshev
// long-range propagation -> sigmoid-gated fusion -> residual), SAGPool
// readout and the regression head.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "graphcliff/chem.hpp"
#include "graphcliff/tensor.hpp"

namespace graphcliff {

inline constexpr std::size_t kNodeFeatureDim = 29;
inline constexpr std::size_t kEdgeFeatureDim = 5;
inline constexpr int kFeatureSpecVersion = 1;

// Short/long filter substitutions from the ablation grid are out of scope;
// the enums pin the implemented configuration.
enum class ShortFilterKind : std::uint8_t { gine };
enum class LongFilterKind : std::uint8_t { chebyshev };

struct ModelConfig {
  std::size_t d = 128;       // hidden width
  std::size_t layers = 3;    // number of stacked filters
  std::size_t cheb_k = 3;    // Chebyshev order
  double pool_ratio = 0.5;   // fraction of nodes kept by SAGPool
  bool use_short = true;
  bool use_long = true;
  bool use_gating = true;
  ShortFilterKind short_kind = ShortFilterKind::gine;
  LongFilterKind long_kind = LongFilterKind::chebyshev;

  void validate() const;
};

struct GraphBatch {
  Tensor x;                                   // N x 29, constant
  std::vector<std::size_t> edge_src;          // directed, both directions per bond
  std::vector<std::size_t> edge_dst;
  Tensor edge_attr;                           // 2E x 5, constant
  std::vector<std::size_t> graph_id;          // length N
  std::vector<std::size_t> graph_sizes;
  std::shared_ptr<const SparseMatrix> norm_adj;         // D^-1/2 (A+I) D^-1/2
  std::vector<std::pair<std::size_t, std::size_t>> undirected_edges;  // one per bond

  std::size_t n_nodes() const { return graph_id.size(); }
  std::size_t n_graphs() const { return graph_sizes.size(); }
};

// Node vector: one-hot element [C,N,O,S,F,Cl,Br,I,P,B,other] (11) || one-hot
// degree 0..5 || one-hot charge clipped to [-2,2] || aromatic || one-hot
// implicit_h 0..4 || in_ring. Edge vector: one-hot order
// [single,double,triple,aromatic] || in_ring; every bond emits two directed
// edges with identical features. Out-of-range values clip to the last slot.
std::vector<double> featurize_atom(const Atom& atom);
std::vector<double> featurize_bond(const Bond& bond);

GraphBatch build_batch(const std::vector<Molecule>& mols);

struct FilterParams {
  Tensor ln_gamma, ln_beta;           // pre-projection layer norm
  Tensor proj_w;                      // d x 3d
  Tensor gine_eps;                    // scalar
  Tensor edge_w, edge_b;              // 5 -> 3d
  Tensor mlp1_w, mlp1_b;              // 3d -> 3d
  Tensor mlp2_w, mlp2_b;              // 3d -> 3d
  std::vector<Tensor> cheb_alpha;     // K+1 scalars
};

struct ModelParams {
  Tensor enc_w, enc_b;                // 29 -> d
  Tensor enc_ln_gamma, enc_ln_beta;
  std::vector<FilterParams> filters;
  Tensor pool_w;                      // d -> 1 scorer
  Tensor head1_w, head1_b;            // 2d -> d
  Tensor head2_w, head2_b;            // d -> 1

  // canonical (name, tensor) order used by checkpoints and the optimizer
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::size_t parameter_count() const;
  ModelParams clone() const;
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, layer-norm
// affine (1, 0), GINE epsilon 0, Chebyshev alpha = (1, 0, ..., 0).
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct LayerTrace {
  std::vector<Tensor> h;         // h^0 .. h^L (values only)
  std::vector<Tensor> gate;      // sigma(x1) per layer
  std::vector<Tensor> long_out;  // Long(x2) per layer
};

Tensor atom_encode(const Tensor& x, const ModelParams& p);

// sum_{k=0..K} alpha_k T_k with T_0 = x2, T_1 = A x2, T_k = 2 A T_{k-1} - T_{k-2}.
Tensor chebyshev_propagate(const Tensor& x2, std::shared_ptr<const SparseMatrix> norm_adj,
                           const std::vector<Tensor>& alpha);

Tensor graphcliff_filter(const Tensor& h, const GraphBatch& batch, const FilterParams& p,
                         const ModelConfig& cfg, LayerTrace* trace = nullptr);

// Score via one adjacency propagation of a linear map d->1, keep the top
// ceil(ratio*n) nodes per graph (ties to the lower index), scale kept rows by
// tanh(score), emit mean || max per graph.
Tensor sagpool_readout(const Tensor& h, const GraphBatch& batch, const Tensor& scorer_w,
                       double ratio);

struct ForwardResult {
  Tensor prediction;  // n_graphs x 1
  Tensor pooled;      // n_graphs x 2d
  LayerTrace trace;
};

ForwardResult model_forward(const GraphBatch& batch, const ModelParams& params,
                            const ModelConfig& cfg, bool capture_trace = false);

// h^L as a function of input node features; used by the diagnostics.
Tensor node_embeddings(const Tensor& x, const GraphBatch& batch, const ModelParams& params,
                       const ModelConfig& cfg);

}  // namespace graphcliff
