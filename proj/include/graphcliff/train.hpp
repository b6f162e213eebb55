#pragma once

// Regression training (Adam on MSE), metrics, checkpointing, warm-start.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graphcliff/cliff.hpp"
#include "graphcliff/graphnn.hpp"

namespace graphcliff {

class NumericError : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double val_frac = 0.1;     // carved out of the train split
  std::size_t patience = 30;  // early stop on val RMSE; 0 disables
  double clip_norm = 5.0;     // global gradient norm; <= 0 disables
  // When set, history carries an exact post-epoch RMSE over the training
  // subset (costs one extra forward pass per epoch).
  bool track_train_eval = false;
  // Stop once the running train RMSE drops below this value; 0 disables.
  double stop_at_train_rmse = 0.0;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_rmse = 0.0;       // running, from training batches
  double val_rmse = 0.0;         // NaN when no validation subset
  double train_eval_rmse = 0.0;  // NaN unless track_train_eval
};

struct Checkpoint {
  int feature_spec_version = kFeatureSpecVersion;
  ModelConfig model_config;
  std::uint64_t seed = 0;
  double y_mean = 0.0;
  double y_std = 1.0;
  std::vector<EpochStats> history;
  std::vector<std::pair<std::string, Tensor>> arrays;  // canonical order

  static Checkpoint from_params(const ModelParams& params, const ModelConfig& cfg,
                                std::uint64_t seed, double y_mean, double y_std,
                                std::vector<EpochStats> history = {});
  // Rebuilds parameters; every canonical array must be present with the
  // right shape.
  ModelParams to_params() const;
};

struct WarmStartReport {
  std::size_t loaded = 0;
  std::vector<std::string> ignored_extras;
  std::vector<std::string> left_fresh;  // names absent from the checkpoint
};

// Copies arrays whose name and shape match into `params`; a matching name
// with a conflicting shape is an error; extra arrays are ignored (reported).
WarmStartReport warm_start(ModelParams& params, const Checkpoint& source);

struct TrainResult {
  Checkpoint checkpoint;  // best-validation parameters
  std::vector<EpochStats> history;
  WarmStartReport warm_start_report;
};

TrainResult train_model(const std::vector<CompoundRecord>& records, const TrainConfig& cfg,
                        const ModelConfig& model_cfg,
                        const Checkpoint* warm_start_from = nullptr);

struct EvalResult {
  double rmse = 0.0;
  std::optional<double> rmse_cliff;  // absent when no cliff compounds
  std::size_t n = 0;
  std::size_t n_cliff = 0;
};

EvalResult evaluate(const Checkpoint& checkpoint, const std::vector<CompoundRecord>& records);
std::vector<double> predict(const Checkpoint& checkpoint,
                            const std::vector<CompoundRecord>& records);

// Portable container: magic + format version + length-prefixed JSON manifest
// + little-endian 64-bit-float arrays, length-prefixed, in manifest order.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace graphcliff
