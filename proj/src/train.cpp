#include "graphcliff/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

namespace graphcliff {

namespace {

constexpr char kMagic[8] = {'G', 'C', 'L', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct Adam {
  double lr, beta1, beta2, eps;
  std::size_t t = 0;
  std::vector<std::vector<double>> m, v;

  Adam(const std::vector<std::pair<std::string, Tensor>>& params, const TrainConfig& cfg)
      : lr(cfg.learning_rate), beta1(cfg.beta1), beta2(cfg.beta2), eps(cfg.adam_eps) {
    for (const auto& [name, p] : params) {
      (void)name;
      m.emplace_back(p.size(), 0.0);
      v.emplace_back(p.size(), 0.0);
    }
  }

  void step(std::vector<std::pair<std::string, Tensor>>& params) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t p = 0; p < params.size(); ++p) {
      Tensor& w = params[p].second;
      if (!w.has_grad()) continue;
      const auto& g = w.grad();
      auto& val = w.mutable_values();
      for (std::size_t i = 0; i < val.size(); ++i) {
        m[p][i] = beta1 * m[p][i] + (1.0 - beta1) * g[i];
        v[p][i] = beta2 * v[p][i] + (1.0 - beta2) * g[i] * g[i];
        val[i] -= lr * (m[p][i] / bc1) / (std::sqrt(v[p][i] / bc2) + eps);
      }
    }
  }
};

void clip_gradients(std::vector<std::pair<std::string, Tensor>>& params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (auto& [name, p] : params) {
    (void)name;
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (auto& [name, p] : params) {
    (void)name;
    if (!p.has_grad()) continue;
    auto n = p.node();
    for (auto& g : n->grad) g *= s;
  }
}

std::vector<double> forward_batch(const ModelParams& params, const ModelConfig& cfg,
                                  const std::vector<Molecule>& mols) {
  GraphBatch batch = build_batch(mols);
  ForwardResult f = model_forward(batch, params, cfg);
  return f.prediction.values();
}

double rmse_of(const std::vector<double>& pred, const std::vector<double>& y) {
  double sse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - y[i];
    sse += d * d;
  }
  return std::sqrt(sse / static_cast<double>(pred.size()));
}

// predictions in label units
std::vector<double> predict_records(const ModelParams& params, const ModelConfig& cfg,
                                    double y_mean, double y_std,
                                    const std::vector<Molecule>& mols,
                                    std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(mols.size());
  for (std::size_t start = 0; start < mols.size(); start += batch_size) {
    const std::size_t end = std::min(mols.size(), start + batch_size);
    std::vector<Molecule> chunk(mols.begin() + start, mols.begin() + end);
    for (double p : forward_batch(params, cfg, chunk)) out.push_back(p * y_std + y_mean);
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw Error("TrainConfig: batch_size must be positive");
  if (learning_rate <= 0.0) throw Error("TrainConfig: learning_rate must be positive");
  if (val_frac < 0.0 || val_frac >= 0.5) throw Error("TrainConfig: val_frac must lie in [0,0.5)");
  if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
    throw Error("TrainConfig: betas must lie in (0,1)");
  if (adam_eps <= 0.0) throw Error("TrainConfig: adam_eps must be positive");
}

Checkpoint Checkpoint::from_params(const ModelParams& params, const ModelConfig& cfg,
                                   std::uint64_t seed, double y_mean, double y_std,
                                   std::vector<EpochStats> history) {
  Checkpoint ck;
  ck.model_config = cfg;
  ck.seed = seed;
  ck.y_mean = y_mean;
  ck.y_std = y_std;
  ck.history = std::move(history);
  for (const auto& [name, t] : params.named()) ck.arrays.push_back({name, t.detached_copy()});
  return ck;
}

ModelParams Checkpoint::to_params() const {
  ModelParams fresh = init_params(model_config, seed);
  auto report = warm_start(fresh, *this);
  if (!report.left_fresh.empty())
    throw Error("checkpoint is missing array '" + report.left_fresh.front() + "'");
  return fresh;
}

WarmStartReport warm_start(ModelParams& params, const Checkpoint& source) {
  WarmStartReport rep;
  auto named = params.named();
  std::vector<bool> used(source.arrays.size(), false);
  for (auto& [name, tensor] : named) {
    bool found = false;
    for (std::size_t i = 0; i < source.arrays.size(); ++i) {
      if (source.arrays[i].first != name) continue;
      const Tensor& src = source.arrays[i].second;
      if (src.shape() != tensor.shape())
        throw Error("warm start: shape conflict on '" + name + "'");
      tensor.mutable_values() = src.values();
      used[i] = true;
      found = true;
      rep.loaded++;
      break;
    }
    if (!found) rep.left_fresh.push_back(name);
  }
  for (std::size_t i = 0; i < source.arrays.size(); ++i)
    if (!used[i]) rep.ignored_extras.push_back(source.arrays[i].first);
  return rep;
}

TrainResult train_model(const std::vector<CompoundRecord>& records, const TrainConfig& cfg,
                        const ModelConfig& model_cfg, const Checkpoint* warm_start_from) {
  cfg.validate();
  model_cfg.validate();

  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split.value_or(Split::train) == Split::train) train_idx.push_back(i);
  if (train_idx.empty()) throw DataError("train_model: empty train split");

  std::mt19937_64 rng(cfg.seed);
  std::shuffle(train_idx.begin(), train_idx.end(), rng);
  const auto n_val =
      static_cast<std::size_t>(std::floor(cfg.val_frac * static_cast<double>(train_idx.size())));
  std::vector<std::size_t> val_idx(train_idx.begin(), train_idx.begin() + n_val);
  train_idx.erase(train_idx.begin(), train_idx.begin() + n_val);

  std::vector<Molecule> mols(records.size());
  std::vector<std::size_t> all_used = train_idx;
  all_used.insert(all_used.end(), val_idx.begin(), val_idx.end());
  for (auto i : all_used) mols[i] = parse_smiles(records[i].smiles);

  double y_mean = 0.0;
  for (auto i : train_idx) y_mean += records[i].pki;
  y_mean /= static_cast<double>(train_idx.size());
  double y_var = 0.0;
  for (auto i : train_idx) {
    const double d = records[i].pki - y_mean;
    y_var += d * d;
  }
  double y_std = std::sqrt(y_var / static_cast<double>(train_idx.size()));
  if (y_std < 1e-12) y_std = 1.0;

  ModelParams params = init_params(model_cfg, cfg.seed);
  TrainResult result;
  if (warm_start_from) result.warm_start_report = warm_start(params, *warm_start_from);

  auto named = params.named();
  Adam opt(named, cfg);

  auto val_mols = [&]() {
    std::vector<Molecule> v;
    for (auto i : val_idx) v.push_back(mols[i]);
    return v;
  }();
  std::vector<double> val_y;
  for (auto i : val_idx) val_y.push_back(records[i].pki);

  double best_metric = std::numeric_limits<double>::infinity();
  ModelParams best_params = params.clone();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double sse_std = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(train_idx.size(), start + cfg.batch_size);
      std::vector<Molecule> batch_mols;
      std::vector<double> batch_y;
      for (std::size_t k = start; k < end; ++k) {
        batch_mols.push_back(mols[train_idx[k]]);
        batch_y.push_back((records[train_idx[k]].pki - y_mean) / y_std);
      }
      GraphBatch batch = build_batch(batch_mols);
      ForwardResult f = model_forward(batch, params, model_cfg);
      Tensor target = Tensor::constant({batch_y.size(), 1}, batch_y);
      Tensor loss = mse(f.prediction, target);
      const double loss_v = loss.scalar_value();
      if (!std::isfinite(loss_v))
        throw NumericError("train_model: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch offset " + std::to_string(start));
      sse_std += loss_v * static_cast<double>(batch_y.size());

      for (auto& [name, p] : named) {
        (void)name;
        p.zero_grad();
      }
      backward(loss);
      clip_gradients(named, cfg.clip_norm);
      opt.step(named);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_rmse = std::sqrt(sse_std / static_cast<double>(train_idx.size())) * y_std;
    stats.val_rmse = kNan;
    stats.train_eval_rmse = kNan;

    if (!val_idx.empty()) {
      auto pred = predict_records(params, model_cfg, y_mean, y_std, val_mols, cfg.batch_size);
      stats.val_rmse = rmse_of(pred, val_y);
    }
    if (cfg.track_train_eval) {
      std::vector<Molecule> tm;
      std::vector<double> ty;
      for (auto i : train_idx) {
        tm.push_back(mols[i]);
        ty.push_back(records[i].pki);
      }
      auto pred = predict_records(params, model_cfg, y_mean, y_std, tm, cfg.batch_size);
      stats.train_eval_rmse = rmse_of(pred, ty);
    }
    result.history.push_back(stats);

    const double metric = !val_idx.empty() ? stats.val_rmse : stats.train_rmse;
    if (metric < best_metric) {
      best_metric = metric;
      best_params = params.clone();
      since_best = 0;
    } else {
      ++since_best;
      if (cfg.patience > 0 && since_best >= cfg.patience) break;
    }
    if (cfg.stop_at_train_rmse > 0.0 && stats.train_rmse < cfg.stop_at_train_rmse) break;
  }

  if (cfg.epochs == 0) best_params = params.clone();
  result.checkpoint = Checkpoint::from_params(best_params, model_cfg, cfg.seed, y_mean, y_std,
                                              result.history);
  return result;
}

std::vector<double> predict(const Checkpoint& checkpoint,
                            const std::vector<CompoundRecord>& records) {
  if (checkpoint.feature_spec_version != kFeatureSpecVersion)
    throw Error("predict: feature-spec version mismatch");
  ModelParams params = checkpoint.to_params();
  std::vector<Molecule> mols;
  mols.reserve(records.size());
  for (const auto& r : records) mols.push_back(parse_smiles(r.smiles));
  return predict_records(params, checkpoint.model_config, checkpoint.y_mean, checkpoint.y_std,
                         mols, 64);
}

EvalResult evaluate(const Checkpoint& checkpoint, const std::vector<CompoundRecord>& records) {
  if (records.empty()) throw DataError("evaluate: empty record set");
  auto pred = predict(checkpoint, records);
  EvalResult out;
  out.n = records.size();
  double sse = 0.0, sse_cliff = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double d = pred[i] - records[i].pki;
    sse += d * d;
    if (records[i].cliff.value_or(false)) {
      sse_cliff += d * d;
      out.n_cliff++;
    }
  }
  out.rmse = std::sqrt(sse / static_cast<double>(out.n));
  if (out.n_cliff > 0)
    out.rmse_cliff = std::sqrt(sse_cliff / static_cast<double>(out.n_cliff));
  return out;
}

// ---- checkpoint container ---------------------------------------------------

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw Error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is) {
  const std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

nlohmann::json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double json_double(const nlohmann::json& j) {
  if (j.is_null()) return kNan;
  return j.get<double>();
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["feature_spec_version"] = ck.feature_spec_version;
  manifest["model_config"] = {
      {"d", ck.model_config.d},
      {"layers", ck.model_config.layers},
      {"cheb_k", ck.model_config.cheb_k},
      {"pool_ratio", ck.model_config.pool_ratio},
      {"use_short", ck.model_config.use_short},
      {"use_long", ck.model_config.use_long},
      {"use_gating", ck.model_config.use_gating},
  };
  manifest["seed"] = ck.seed;
  manifest["y_mean"] = ck.y_mean;
  manifest["y_std"] = ck.y_std;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : ck.history)
    hist.push_back({{"epoch", h.epoch},
                    {"train_rmse", number_or_null(h.train_rmse)},
                    {"val_rmse", number_or_null(h.val_rmse)},
                    {"train_eval_rmse", number_or_null(h.train_eval_rmse)}});
  manifest["history"] = std::move(hist);
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& [name, t] : ck.arrays)
    arrays.push_back({{"name", name}, {"shape", t.shape()}});
  manifest["params"] = std::move(arrays);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint: " + path);
  os.write(kMagic, 8);
  put_u32(os, kFormatVersion);
  const std::string m = manifest.dump();
  put_u64(os, m.size());
  os.write(m.data(), static_cast<std::streamsize>(m.size()));
  for (const auto& [name, t] : ck.arrays) {
    (void)name;
    put_u64(os, t.size());
    for (double v : t.values()) put_f64(os, v);
  }
  if (!os) throw Error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw Error("checkpoint: bad magic in " + path);
  const std::uint32_t format = get_u32(is);
  if (format != kFormatVersion)
    throw Error("checkpoint: unsupported format version " + std::to_string(format));
  const std::uint64_t mlen = get_u64(is);
  std::string m(mlen, '\0');
  if (!is.read(m.data(), static_cast<std::streamsize>(mlen)))
    throw Error("checkpoint: truncated manifest");
  nlohmann::json manifest = nlohmann::json::parse(m);

  Checkpoint ck;
  ck.feature_spec_version = manifest.at("feature_spec_version").get<int>();
  if (ck.feature_spec_version != kFeatureSpecVersion)
    throw Error("checkpoint: feature-spec version mismatch (file " +
                std::to_string(ck.feature_spec_version) + ", tool " +
                std::to_string(kFeatureSpecVersion) + ")");
  const auto& mc = manifest.at("model_config");
  ck.model_config.d = mc.at("d").get<std::size_t>();
  ck.model_config.layers = mc.at("layers").get<std::size_t>();
  ck.model_config.cheb_k = mc.at("cheb_k").get<std::size_t>();
  ck.model_config.pool_ratio = mc.at("pool_ratio").get<double>();
  ck.model_config.use_short = mc.at("use_short").get<bool>();
  ck.model_config.use_long = mc.at("use_long").get<bool>();
  ck.model_config.use_gating = mc.at("use_gating").get<bool>();
  ck.seed = manifest.at("seed").get<std::uint64_t>();
  ck.y_mean = manifest.at("y_mean").get<double>();
  ck.y_std = manifest.at("y_std").get<double>();
  for (const auto& h : manifest.at("history")) {
    EpochStats s;
    s.epoch = h.at("epoch").get<std::size_t>();
    s.train_rmse = json_double(h.at("train_rmse"));
    s.val_rmse = json_double(h.at("val_rmse"));
    s.train_eval_rmse = json_double(h.at("train_eval_rmse"));
    ck.history.push_back(s);
  }

  const auto& arrays = manifest.at("params");
  for (const auto& a : arrays) {
    const std::string name = a.at("name").get<std::string>();
    Shape shape = a.at("shape").get<Shape>();
    std::size_t expected = 1;
    for (auto d : shape) expected *= d;
    const std::uint64_t count = get_u64(is);
    if (count != expected)
      throw Error("checkpoint: array '" + name + "' length " + std::to_string(count) +
                  " does not match manifest shape");
    std::vector<double> vals(count);
    for (auto& v : vals) v = get_f64(is);
    ck.arrays.push_back({name, Tensor::constant(std::move(shape), std::move(vals))});
  }
  return ck;
}

}  // namespace graphcliff
