#include "graphcliff/graphnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace graphcliff {

void ModelConfig::validate() const {
  if (d == 0 || layers == 0) throw Error("ModelConfig: d and layers must be positive");
  if (pool_ratio <= 0.0 || pool_ratio > 1.0)
    throw Error("ModelConfig: pool_ratio must lie in (0,1]");
}

std::vector<double> featurize_atom(const Atom& atom) {
  static const std::vector<std::string> elements = {"C",  "N", "O", "S", "F",
                                                    "Cl", "Br", "I", "P", "B"};
  std::vector<double> f(kNodeFeatureDim, 0.0);
  std::size_t off = 0;
  std::size_t slot = elements.size();  // "other"
  for (std::size_t i = 0; i < elements.size(); ++i)
    if (elements[i] == atom.element) {
      slot = i;
      break;
    }
  f[off + slot] = 1.0;
  off += elements.size() + 1;  // 11

  f[off + static_cast<std::size_t>(std::min(atom.degree, 5))] = 1.0;
  off += 6;

  const int charge = std::clamp(atom.formal_charge, -2, 2);
  f[off + static_cast<std::size_t>(charge + 2)] = 1.0;
  off += 5;

  f[off] = atom.aromatic ? 1.0 : 0.0;
  off += 1;

  f[off + static_cast<std::size_t>(std::clamp(atom.implicit_h, 0, 4))] = 1.0;
  off += 5;

  f[off] = atom.in_ring ? 1.0 : 0.0;
  return f;
}

std::vector<double> featurize_bond(const Bond& bond) {
  std::vector<double> f(kEdgeFeatureDim, 0.0);
  f[static_cast<std::size_t>(bond.order) - 1] = 1.0;
  f[4] = bond.in_ring ? 1.0 : 0.0;
  return f;
}

GraphBatch build_batch(const std::vector<Molecule>& mols) {
  GraphBatch b;
  std::size_t n_nodes = 0, n_bonds = 0;
  for (const auto& m : mols) {
    if (m.empty()) throw Error("build_batch: empty molecule");
    n_nodes += m.size();
    n_bonds += m.bonds.size();
  }

  std::vector<double> x;
  x.reserve(n_nodes * kNodeFeatureDim);
  std::vector<double> eattr;
  eattr.reserve(2 * n_bonds * kEdgeFeatureDim);
  std::vector<std::tuple<std::size_t, std::size_t, double>> adj_triplets;

  std::size_t base = 0;
  for (std::size_t g = 0; g < mols.size(); ++g) {
    const Molecule& m = mols[g];
    for (const auto& a : m.atoms) {
      auto fa = featurize_atom(a);
      x.insert(x.end(), fa.begin(), fa.end());
      b.graph_id.push_back(g);
    }
    std::vector<double> deg(m.size(), 1.0);  // self-loop
    for (const auto& bond : m.bonds) {
      deg[bond.a] += 1.0;
      deg[bond.b] += 1.0;
    }
    for (const auto& bond : m.bonds) {
      const std::size_t u = base + static_cast<std::size_t>(bond.a);
      const std::size_t v = base + static_cast<std::size_t>(bond.b);
      auto fb = featurize_bond(bond);
      b.edge_src.push_back(u);
      b.edge_dst.push_back(v);
      eattr.insert(eattr.end(), fb.begin(), fb.end());
      b.edge_src.push_back(v);
      b.edge_dst.push_back(u);
      eattr.insert(eattr.end(), fb.begin(), fb.end());
      b.undirected_edges.push_back({u, v});
      const double w = 1.0 / std::sqrt(deg[bond.a] * deg[bond.b]);
      adj_triplets.push_back({u, v, w});
      adj_triplets.push_back({v, u, w});
    }
    for (std::size_t i = 0; i < m.size(); ++i)
      adj_triplets.push_back({base + i, base + i, 1.0 / deg[i]});
    b.graph_sizes.push_back(m.size());
    base += m.size();
  }

  b.x = Tensor::constant({n_nodes, kNodeFeatureDim}, std::move(x));
  b.edge_attr = Tensor::constant({2 * n_bonds, kEdgeFeatureDim}, std::move(eattr));
  b.norm_adj = std::make_shared<const SparseMatrix>(
      SparseMatrix::from_triplets(n_nodes, std::move(adj_triplets)));
  return b;
}

namespace {

std::vector<double> uniform_init(std::size_t n, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  return add_rowvec(matmul(x, w), bias);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.push_back({"encoder.w", enc_w});
  out.push_back({"encoder.b", enc_b});
  out.push_back({"encoder.ln.gamma", enc_ln_gamma});
  out.push_back({"encoder.ln.beta", enc_ln_beta});
  for (std::size_t l = 0; l < filters.size(); ++l) {
    const auto& f = filters[l];
    const std::string p = "filter" + std::to_string(l) + ".";
    out.push_back({p + "ln.gamma", f.ln_gamma});
    out.push_back({p + "ln.beta", f.ln_beta});
    out.push_back({p + "proj.w", f.proj_w});
    out.push_back({p + "gine.eps", f.gine_eps});
    out.push_back({p + "gine.edge.w", f.edge_w});
    out.push_back({p + "gine.edge.b", f.edge_b});
    out.push_back({p + "gine.mlp1.w", f.mlp1_w});
    out.push_back({p + "gine.mlp1.b", f.mlp1_b});
    out.push_back({p + "gine.mlp2.w", f.mlp2_w});
    out.push_back({p + "gine.mlp2.b", f.mlp2_b});
    for (std::size_t k = 0; k < f.cheb_alpha.size(); ++k)
      out.push_back({p + "cheb.alpha" + std::to_string(k), f.cheb_alpha[k]});
  }
  out.push_back({"pool.score.w", pool_w});
  out.push_back({"head.lin1.w", head1_w});
  out.push_back({"head.lin1.b", head1_b});
  out.push_back({"head.lin2.w", head2_w});
  out.push_back({"head.lin2.b", head2_b});
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) {
    (void)name;
    n += t.size();
  }
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams c = *this;
  c.enc_w = enc_w.detached_copy(true);
  c.enc_b = enc_b.detached_copy(true);
  c.enc_ln_gamma = enc_ln_gamma.detached_copy(true);
  c.enc_ln_beta = enc_ln_beta.detached_copy(true);
  for (auto& f : c.filters) {
    f.ln_gamma = f.ln_gamma.detached_copy(true);
    f.ln_beta = f.ln_beta.detached_copy(true);
    f.proj_w = f.proj_w.detached_copy(true);
    f.gine_eps = f.gine_eps.detached_copy(true);
    f.edge_w = f.edge_w.detached_copy(true);
    f.edge_b = f.edge_b.detached_copy(true);
    f.mlp1_w = f.mlp1_w.detached_copy(true);
    f.mlp1_b = f.mlp1_b.detached_copy(true);
    f.mlp2_w = f.mlp2_w.detached_copy(true);
    f.mlp2_b = f.mlp2_b.detached_copy(true);
    for (auto& a : f.cheb_alpha) a = a.detached_copy(true);
  }
  c.pool_w = pool_w.detached_copy(true);
  c.head1_w = head1_w.detached_copy(true);
  c.head1_b = head1_b.detached_copy(true);
  c.head2_w = head2_w.detached_copy(true);
  c.head2_b = head2_b.detached_copy(true);
  return c;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg.d, d3 = 3 * cfg.d;

  ModelParams p;
  p.enc_w = Tensor::param({kNodeFeatureDim, d}, uniform_init(kNodeFeatureDim * d, kNodeFeatureDim, rng));
  p.enc_b = Tensor::param({d}, std::vector<double>(d, 0.0));
  p.enc_ln_gamma = Tensor::param({d}, std::vector<double>(d, 1.0));
  p.enc_ln_beta = Tensor::param({d}, std::vector<double>(d, 0.0));

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    FilterParams f;
    f.ln_gamma = Tensor::param({d}, std::vector<double>(d, 1.0));
    f.ln_beta = Tensor::param({d}, std::vector<double>(d, 0.0));
    f.proj_w = Tensor::param({d, d3}, uniform_init(d * d3, d, rng));
    f.gine_eps = Tensor::scalar(0.0, true);
    f.edge_w = Tensor::param({kEdgeFeatureDim, d3}, uniform_init(kEdgeFeatureDim * d3, kEdgeFeatureDim, rng));
    f.edge_b = Tensor::param({d3}, std::vector<double>(d3, 0.0));
    f.mlp1_w = Tensor::param({d3, d3}, uniform_init(d3 * d3, d3, rng));
    f.mlp1_b = Tensor::param({d3}, std::vector<double>(d3, 0.0));
    f.mlp2_w = Tensor::param({d3, d3}, uniform_init(d3 * d3, d3, rng));
    f.mlp2_b = Tensor::param({d3}, std::vector<double>(d3, 0.0));
    for (std::size_t k = 0; k <= cfg.cheb_k; ++k)
      f.cheb_alpha.push_back(Tensor::scalar(k == 0 ? 1.0 : 0.0, true));
    p.filters.push_back(std::move(f));
  }

  p.pool_w = Tensor::param({d, 1}, uniform_init(d, d, rng));
  p.head1_w = Tensor::param({2 * d, d}, uniform_init(2 * d * d, 2 * d, rng));
  p.head1_b = Tensor::param({d}, std::vector<double>(d, 0.0));
  p.head2_w = Tensor::param({d, 1}, uniform_init(d, d, rng));
  p.head2_b = Tensor::param({1}, std::vector<double>(1, 0.0));
  return p;
}

Tensor atom_encode(const Tensor& x, const ModelParams& p) {
  return relu(layer_norm(linear(x, p.enc_w, p.enc_b), p.enc_ln_gamma, p.enc_ln_beta));
}

Tensor chebyshev_propagate(const Tensor& x2, std::shared_ptr<const SparseMatrix> norm_adj,
                           const std::vector<Tensor>& alpha) {
  if (alpha.empty()) throw Error("chebyshev_propagate: need at least alpha_0");
  Tensor t_prev2 = x2;                 // T_0
  Tensor acc = scale(x2, alpha[0]);
  if (alpha.size() == 1) return acc;
  Tensor t_prev1 = spmm_sym(norm_adj, x2);  // T_1
  acc = add(acc, scale(t_prev1, alpha[1]));
  for (std::size_t k = 2; k < alpha.size(); ++k) {
    Tensor t_k = sub(smul(spmm_sym(norm_adj, t_prev1), 2.0), t_prev2);
    acc = add(acc, scale(t_k, alpha[k]));
    t_prev2 = t_prev1;
    t_prev1 = t_k;
  }
  return acc;
}

Tensor graphcliff_filter(const Tensor& h, const GraphBatch& batch, const FilterParams& p,
                         const ModelConfig& cfg, LayerTrace* trace) {
  const std::size_t d = cfg.d;
  Tensor z = matmul(layer_norm(h, p.ln_gamma, p.ln_beta), p.proj_w);  // N x 3d

  Tensor z_prime = z;
  if (cfg.use_short) {
    // GINE: psi((1+eps) z_i + sum_{j in N(i)} (z_j + phi(e_ij)))
    Tensor self_term = add(z, scale(z, p.gine_eps));
    Tensor pre = self_term;
    if (!batch.edge_src.empty()) {
      Tensor edge_feat = linear(batch.edge_attr, p.edge_w, p.edge_b);  // 2E x 3d
      Tensor msgs = add(gather_rows(z, batch.edge_src), edge_feat);
      pre = add(self_term, scatter_add_rows(msgs, batch.edge_dst, batch.n_nodes()));
    }
    z_prime = linear(relu(linear(pre, p.mlp1_w, p.mlp1_b)), p.mlp2_w, p.mlp2_b);
  }

  auto parts = split_cols(z_prime, {d, d, d});
  const Tensor& x2 = parts[0];
  const Tensor& x1 = parts[1];
  const Tensor& v = parts[2];

  Tensor long_out = cfg.use_long ? chebyshev_propagate(x2, batch.norm_adj, p.cheb_alpha) : x2;

  Tensor u;
  if (cfg.use_gating) {
    Tensor g = sigmoid(x1);
    if (trace) trace->gate.push_back(g.detached_copy());
    u = add(mul(g, long_out), v);
  } else {
    u = add(long_out, v);
  }
  if (trace) trace->long_out.push_back(long_out.detached_copy());
  return add(h, u);
}

Tensor sagpool_readout(const Tensor& h, const GraphBatch& batch, const Tensor& scorer_w,
                       double ratio) {
  if (ratio <= 0.0 || ratio > 1.0) throw Error("sagpool_readout: ratio must lie in (0,1]");
  const std::size_t n = h.rows(), d = h.cols();
  if (n != batch.n_nodes()) throw Error("sagpool_readout: node count mismatch");
  for (auto sz : batch.graph_sizes)
    if (sz == 0) throw Error("sagpool_readout: graph with zero nodes");

  Tensor score = spmm_sym(batch.norm_adj, matmul(h, scorer_w));  // N x 1

  // top-k per graph on forward values; ties break toward the lower index
  const auto& s = score.values();
  std::vector<std::vector<std::size_t>> per_graph(batch.n_graphs());
  for (std::size_t i = 0; i < n; ++i) per_graph[batch.graph_id[i]].push_back(i);
  std::vector<std::size_t> kept;
  std::vector<std::size_t> kept_graph;
  for (std::size_t g = 0; g < per_graph.size(); ++g) {
    auto& idx = per_graph[g];
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    const auto k = static_cast<std::size_t>(
        std::ceil(ratio * static_cast<double>(idx.size())));
    std::vector<std::size_t> chosen(idx.begin(), idx.begin() + k);
    std::sort(chosen.begin(), chosen.end());
    for (auto i : chosen) {
      kept.push_back(i);
      kept_graph.push_back(g);
    }
  }

  Tensor hk = gather_rows(h, kept);
  Tensor tk = tanh(gather_rows(score, kept));  // kept x 1
  Tensor ones = Tensor::constant({1, d}, std::vector<double>(d, 1.0));
  Tensor scaled = mul(hk, matmul(tk, ones));

  // per-graph mean of kept rows
  std::vector<double> counts(batch.n_graphs(), 0.0);
  for (auto g : kept_graph) counts[g] += 1.0;
  std::vector<double> inv(batch.n_graphs() * d);
  for (std::size_t g = 0; g < counts.size(); ++g)
    for (std::size_t j = 0; j < d; ++j) inv[g * d + j] = 1.0 / counts[g];
  Tensor mean_part = mul(scatter_add_rows(scaled, kept_graph, batch.n_graphs()),
                         Tensor::constant({batch.n_graphs(), d}, std::move(inv)));
  Tensor max_part = segment_max_rows(scaled, kept_graph, batch.n_graphs());
  return concat_cols({mean_part, max_part});
}

ForwardResult model_forward(const GraphBatch& batch, const ModelParams& params,
                            const ModelConfig& cfg, bool capture_trace) {
  cfg.validate();
  if (params.filters.size() != cfg.layers)
    throw Error("model_forward: parameter layer count differs from config");
  ForwardResult out;
  LayerTrace* trace = capture_trace ? &out.trace : nullptr;

  Tensor h = atom_encode(batch.x, params);
  if (trace) trace->h.push_back(h.detached_copy());
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    h = graphcliff_filter(h, batch, params.filters[l], cfg, trace);
    if (trace) trace->h.push_back(h.detached_copy());
  }
  out.pooled = sagpool_readout(h, batch, params.pool_w, cfg.pool_ratio);
  out.prediction = linear(relu(linear(out.pooled, params.head1_w, params.head1_b)),
                          params.head2_w, params.head2_b);
  return out;
}

Tensor node_embeddings(const Tensor& x, const GraphBatch& batch, const ModelParams& params,
                       const ModelConfig& cfg) {
  if (params.filters.size() != cfg.layers)
    throw Error("node_embeddings: parameter layer count differs from config");
  Tensor h = atom_encode(x, params);
  for (std::size_t l = 0; l < cfg.layers; ++l)
    h = graphcliff_filter(h, batch, params.filters[l], cfg, nullptr);
  return h;
}

}  // namespace graphcliff
