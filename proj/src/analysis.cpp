#include "graphcliff/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>

namespace graphcliff {

namespace {

std::vector<int> bfs_hops(const GraphBatch& batch, std::size_t source) {
  std::vector<std::vector<std::size_t>> adj(batch.n_nodes());
  for (const auto& [a, b] : batch.undirected_edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<int> dist(batch.n_nodes(), -1);
  std::queue<std::size_t> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (auto v : adj[u])
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
  }
  return dist;
}

std::vector<double> random_unit(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(n);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = gauss(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
  } while (norm < 1e-12);
  for (auto& x : v) x /= norm;
  return v;
}

double row_distance(const std::vector<double>& a, const std::vector<double>& b,
                    std::size_t row, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = a[row * d + j] - b[row * d + j];
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace

void HopAccumulator::merge(const HopAccumulator& other) {
  for (const auto& [k, v] : other.sum) sum[k] += v;
  for (const auto& [k, c] : other.count) count[k] += c;
}

std::map<int, double> HopAccumulator::means() const {
  std::map<int, double> out;
  for (const auto& [k, s] : sum) out[k] = s / static_cast<double>(count.at(k));
  return out;
}

HopAccumulator hop_sensitivity_accumulate(const EmbedFn& embed, const GraphBatch& batch,
                                          const Tensor& x, const HopSensitivityOptions& opts) {
  if (opts.eps <= 0.0) throw Error("hop_sensitivity: eps must be positive");
  const std::size_t n = batch.n_nodes();
  const std::size_t din = x.cols();
  const Tensor base_emb = embed(x);
  const std::vector<double> base = base_emb.values();
  const std::size_t d = base_emb.cols();

  std::mt19937_64 rng(opts.seed);
  HopAccumulator acc;
  for (std::size_t u = 0; u < n; ++u) {
    const auto dist = bfs_hops(batch, u);
    for (int t = 0; t < opts.trials; ++t) {
      const auto dir = random_unit(din, rng);
      Tensor xp = x.detached_copy(false);
      auto& vals = xp.mutable_values();
      for (std::size_t j = 0; j < din; ++j) vals[u * din + j] += opts.eps * dir[j];
      const std::vector<double> pert = embed(xp).values();
      // per (source, trial): mean over targets at each hop, then one count,
      // so sources with many distant nodes do not dominate the average
      std::map<int, double> local_sum;
      std::map<int, std::size_t> local_n;
      for (std::size_t v = 0; v < n; ++v) {
        const int k = dist[v];
        if (k < 0 || k > opts.k_max) continue;
        const double s = row_distance(pert, base, v, d) / opts.eps;
        if (!std::isfinite(s)) throw Error("hop_sensitivity: non-finite sensitivity");
        local_sum[k] += s;
        local_n[k] += 1;
      }
      for (const auto& [k, s] : local_sum) {
        acc.sum[k] += s / static_cast<double>(local_n[k]);
        acc.count[k] += 1;
      }
    }
  }
  return acc;
}

std::map<int, double> hop_sensitivity(const ModelParams& params, const ModelConfig& cfg,
                                      const Molecule& mol, const HopSensitivityOptions& opts) {
  GraphBatch batch = build_batch({mol});
  EmbedFn embed = [&](const Tensor& x) { return node_embeddings(x, batch, params, cfg); };
  return hop_sensitivity_accumulate(embed, batch, batch.x, opts).means();
}

double dirichlet_energy(const Tensor& h,
                        const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  const std::size_t d = h.cols();
  const auto& v = h.values();
  double e = 0.0;
  for (const auto& [i, j] : edges) {
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = v[i * d + c] - v[j * d + c];
      e += diff * diff;
    }
  }
  return e;
}

PowerIterationResult jacobian_top_singular(
    const std::function<Tensor(const Tensor&)>& layer_fn, const Tensor& x, std::size_t iters,
    double tol, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = x.size();
  std::vector<double> v = random_unit(n, rng);
  const double delta = 1e-6;

  const std::vector<double> f0 = layer_fn(x.detached_copy(false)).values();

  auto jvp = [&](const std::vector<double>& dir) {
    Tensor xp = x.detached_copy(false);
    auto& vals = xp.mutable_values();
    for (std::size_t i = 0; i < n; ++i) vals[i] += delta * dir[i];
    const std::vector<double> f1 = layer_fn(xp).values();
    std::vector<double> out(f1.size());
    for (std::size_t i = 0; i < f1.size(); ++i) out[i] = (f1[i] - f0[i]) / delta;
    return out;
  };

  auto vjp = [&](const std::vector<double>& u) {
    Tensor leaf = x.detached_copy(true);
    Tensor y = layer_fn(leaf);
    Tensor weights = Tensor::constant(y.shape(), u);
    backward(sum_all(mul(y, weights)));
    return leaf.has_grad() ? leaf.grad() : std::vector<double>(n, 0.0);
  };

  PowerIterationResult res;
  double prev_sigma = -1.0;
  for (std::size_t it = 0; it < iters; ++it) {
    res.iterations = it + 1;
    const auto ju = jvp(v);
    double ju_norm = 0.0;
    for (double z : ju) ju_norm += z * z;
    res.sigma = std::sqrt(ju_norm);  // ||Jv|| with ||v|| = 1
    if (!std::isfinite(res.sigma)) throw Error("jacobian_top_singular: non-finite estimate");
    if (res.sigma < 1e-300) {
      res.converged = true;  // numerically zero operator
      return res;
    }
    auto w = vjp(ju);
    double w_norm = 0.0;
    for (double z : w) w_norm += z * z;
    w_norm = std::sqrt(w_norm);
    if (w_norm < 1e-300) {
      res.converged = true;
      return res;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / w_norm;
    if (prev_sigma >= 0.0 &&
        std::abs(res.sigma - prev_sigma) < tol * std::max(res.sigma, 1e-30)) {
      res.converged = true;
      return res;
    }
    prev_sigma = res.sigma;
  }
  return res;  // converged stays false; sigma holds the last estimate
}

SlopeFit fit_minmax_regression(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw Error("fit_minmax_regression: need at least two points");
  const auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
  const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
  const double xspan = *xmax_it - *xmin_it;
  if (xspan <= 0.0) throw Error("fit_minmax_regression: all x values identical");
  const double yspan = *ymax_it - *ymin_it;

  const std::size_t n = x.size();
  std::vector<double> xn(n), yn(n);
  for (std::size_t i = 0; i < n; ++i) {
    xn[i] = (x[i] - *xmin_it) / xspan;
    yn[i] = yspan > 0.0 ? (y[i] - *ymin_it) / yspan : 0.0;
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xn[i];
    my += yn[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xn[i] - mx) * (xn[i] - mx);
    sxy += (xn[i] - mx) * (yn[i] - my);
  }
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

DistancePoints embedding_vs_ecfp_points(const Checkpoint& checkpoint,
                                        const std::vector<CompoundRecord>& records,
                                        const std::vector<CliffPair>& pairs,
                                        const FpConfig& fp_cfg) {
  ModelParams params = checkpoint.to_params();

  std::vector<Molecule> mols;
  mols.reserve(records.size());
  for (const auto& r : records) mols.push_back(parse_smiles(r.smiles));
  std::vector<Fingerprint> fps;
  fps.reserve(mols.size());
  for (const auto& m : mols) fps.push_back(ecfp(m, fp_cfg));

  // pooled embeddings, batched
  const std::size_t chunk = 64;
  std::vector<std::vector<double>> pooled(mols.size());
  for (std::size_t start = 0; start < mols.size(); start += chunk) {
    const std::size_t end = std::min(mols.size(), start + chunk);
    std::vector<Molecule> part(mols.begin() + start, mols.begin() + end);
    GraphBatch batch = build_batch(part);
    ForwardResult f = model_forward(batch, params, checkpoint.model_config);
    const auto& vals = f.pooled.values();
    const std::size_t width = f.pooled.cols();
    for (std::size_t g = 0; g < part.size(); ++g)
      pooled[start + g].assign(vals.begin() + g * width, vals.begin() + (g + 1) * width);
  }

  DistancePoints pts;
  pts.x.reserve(pairs.size());
  pts.y.reserve(pairs.size());
  for (const auto& p : pairs) {
    pts.x.push_back(1.0 - tanimoto(fps[p.i], fps[p.j]));
    double s = 0.0;
    for (std::size_t c = 0; c < pooled[p.i].size(); ++c) {
      const double d = pooled[p.i][c] - pooled[p.j][c];
      s += d * d;
    }
    pts.y.push_back(std::sqrt(s));
  }
  return pts;
}

SlopeFit embedding_vs_ecfp_slope(const Checkpoint& checkpoint,
                                 const std::vector<CompoundRecord>& records,
                                 const std::vector<CliffPair>& pairs, const FpConfig& fp_cfg) {
  if (pairs.size() < 2) throw Error("embedding_vs_ecfp_slope: need at least two cliff pairs");
  DistancePoints pts = embedding_vs_ecfp_points(checkpoint, records, pairs, fp_cfg);
  return fit_minmax_regression(pts.x, pts.y);
}

std::vector<double> export_gate_scores(const Checkpoint& checkpoint, const Molecule& mol,
                                       std::size_t layer) {
  if (layer >= checkpoint.model_config.layers)
    throw Error("export_gate_scores: layer index out of range");
  if (!checkpoint.model_config.use_gating)
    throw Error("export_gate_scores: model has gating disabled");
  ModelParams params = checkpoint.to_params();
  GraphBatch batch = build_batch({mol});
  ForwardResult f = model_forward(batch, params, checkpoint.model_config, true);
  const Tensor& gate = f.trace.gate[layer];
  const std::size_t n = gate.rows(), d = gate.cols();
  const auto& v = gate.values();
  std::vector<double> score(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) score[i] += v[i * d + j];
    score[i] /= static_cast<double>(d);
  }
  const auto [mn, mx] = std::minmax_element(score.begin(), score.end());
  const double span = *mx - *mn;
  if (span <= 1e-15) return std::vector<double>(n, 0.5);
  const double lo = *mn;
  for (auto& s : score) s = (s - lo) / span;
  return score;
}

AnalysisReport analyze_model(const Checkpoint& checkpoint,
                             const std::vector<CompoundRecord>& records,
                             const AnalysisOptions& opts) {
  if (records.empty()) throw DataError("analyze_model: empty record set");
  ModelParams params = checkpoint.to_params();
  const ModelConfig& cfg = checkpoint.model_config;

  AnalysisReport report;
  const std::size_t probe_n = std::min(opts.max_molecules, records.size());
  std::vector<Molecule> probe_mols;
  for (std::size_t i = 0; i < probe_n; ++i) probe_mols.push_back(parse_smiles(records[i].smiles));

  // hop sensitivity across probe molecules
  HopAccumulator acc;
  for (const auto& mol : probe_mols) {
    GraphBatch batch = build_batch({mol});
    EmbedFn embed = [&](const Tensor& x) { return node_embeddings(x, batch, params, cfg); };
    acc.merge(hop_sensitivity_accumulate(embed, batch, batch.x, opts.hop));
  }
  report.hop_sensitivity = acc.means();

  // per-layer Dirichlet energy, averaged over probe molecules
  report.dirichlet.assign(cfg.layers + 1, 0.0);
  for (const auto& mol : probe_mols) {
    GraphBatch batch = build_batch({mol});
    ForwardResult f = model_forward(batch, params, cfg, true);
    for (std::size_t l = 0; l <= cfg.layers; ++l)
      report.dirichlet[l] += dirichlet_energy(f.trace.h[l], batch.undirected_edges);
  }
  for (auto& e : report.dirichlet) e /= static_cast<double>(probe_mols.size());

  // Jacobian of each filter layer at the first probe molecule
  {
    GraphBatch batch = build_batch({probe_mols.front()});
    ForwardResult f = model_forward(batch, params, cfg, true);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const Tensor h_in = f.trace.h[l];
      auto layer_fn = [&, l](const Tensor& h) {
        return graphcliff_filter(h, batch, params.filters[l], cfg, nullptr);
      };
      report.jacobian.push_back(
          jacobian_top_singular(layer_fn, h_in, 100, 1e-8, opts.seed + l));
    }
  }

  // distance regression over cliff pairs
  if (records.size() >= 2) {
    CliffAnnotation ann = annotate_cliffs(records, opts.cliff);
    if (ann.cliff_pairs.size() >= 2) {
      DistancePoints pts =
          embedding_vs_ecfp_points(checkpoint, records, ann.cliff_pairs, opts.cliff.fp);
      try {
        report.slope = fit_minmax_regression(pts.x, pts.y);
        // export the same normalization the fit uses
        const auto [xmn, xmx] = std::minmax_element(pts.x.begin(), pts.x.end());
        const auto [ymn, ymx] = std::minmax_element(pts.y.begin(), pts.y.end());
        const double xs = *xmx - *xmn, ys = *ymx - *ymn;
        report.scatter.x.reserve(pts.x.size());
        report.scatter.y.reserve(pts.y.size());
        for (std::size_t i = 0; i < pts.x.size(); ++i) {
          report.scatter.x.push_back((pts.x[i] - *xmn) / xs);
          report.scatter.y.push_back(ys > 0.0 ? (pts.y[i] - *ymn) / ys : 0.0);
        }
      } catch (const Error&) {
        report.slope.reset();  // degenerate x spread
      }
    }
  }

  if (cfg.use_gating) {
    for (const auto& mol : probe_mols)
      report.gate_scores.push_back(export_gate_scores(checkpoint, mol, opts.gate_layer));
  }
  return report;
}

}  // namespace graphcliff
