#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "m2rec/checkpoint.hpp"
#include "m2rec/evaluation.hpp"
#include "m2rec/loss.hpp"
#include "m2rec/model.hpp"
#include "m2rec/optimizer.hpp"

namespace m2rec {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_train = 2048;
  std::size_t batch_eval = 4096;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  LossMode loss_mode = LossMode::kSoftmaxCe;
  double theta = 0.9;
  std::size_t layers = 1;
  std::size_t d = 64;
  std::size_t d_state = 32;
  std::size_t expand = 4;
  std::size_t conv_width = 2;
  std::size_t dt_rank = 0;  // 0: ceil(d / 16)
  double dropout = 0.2;
  Discretization discretization = Discretization::kZoh;
  std::size_t max_len = 200;
  bool spectral_filter = true;
  FilterMode filter_mode = FilterMode::kElementwise;
  Fusion fusion = Fusion::kGate;
  bool tie_output = false;
  bool all_positions = false;
  double clip_norm = 5.0;
  std::size_t patience = 10;
  std::string early_stop_metric = "ndcg@10";
  // Stop as soon as the validation metric reaches the value (empty: never).
  std::string target_metric;
  double target_value = 1.0;
  std::vector<std::size_t> ks = kDefaultCutoffs;
  std::size_t threads = 1;
  std::size_t shard_rows = 4096;  // window rows per forward/backward pass
  std::string variant = "full";

  void validate() const;
  ModelConfig model_config(std::size_t num_items, std::size_t semantic_dim) const;
  nlohmann::json to_json() const;
  // Keys absent from j keep the values of `base`; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
  static TrainConfig from_json(const nlohmann::json& j);
};

// Ablation variants: "full", "w/o GM" (semantic gate branch removed),
// "rp Con" (concatenation + linear instead of the gate), "w/o Ada" (theta = 1,
// W still learned), "w/o AFFT" (spectral filter bypassed).
inline const std::vector<std::string> kAblationVariants = {"full", "w/o GM", "rp Con", "w/o Ada",
                                                           "w/o AFFT"};
TrainConfig apply_variant(TrainConfig config, const std::string& variant);

std::string to_string(LossMode m);
std::string to_string(Discretization m);
std::string to_string(FilterMode m);
std::string to_string(Fusion m);

struct EpochRecord {
  std::size_t epoch = 0;
  std::optional<double> train_loss;  // absent for the initial evaluation
  std::size_t steps = 0;
  nlohmann::json valid;

  nlohmann::json to_json() const;
  static EpochRecord from_json(const nlohmann::json& j);
};

// Deterministic 64-bit mixing of several integers (splitmix64 chain).
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

class Trainer {
 public:
  Trainer(TrainConfig config, std::shared_ptr<const Split> split,
          std::shared_ptr<const Matrix> semantic = nullptr);

  // Continue from a checkpoint written by checkpoint(); the split must match.
  static Trainer resume(const CheckpointFile& file, std::shared_ptr<const Split> split,
                        std::shared_ptr<const Matrix> semantic = nullptr);

  using EpochCallback = std::function<void(const EpochRecord&)>;

  // Trains up to `epochs` more epochs (config().epochs when absent), stopping
  // early on patience or the target metric.
  void run(std::optional<std::size_t> epochs = std::nullopt, const EpochCallback& on_epoch = {});

  // One pass over the shuffled training windows; returns the mean batch loss.
  double train_epoch();
  MetricReport evaluate(std::span<const WindowRef> windows) const;

  const TrainConfig& config() const { return config_; }
  const Model& model() const { return model_; }
  Model best_model() const;
  std::size_t epoch() const { return epoch_; }
  std::size_t best_epoch() const { return best_epoch_; }
  const nlohmann::json& best_metrics() const { return best_metrics_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  const std::string& stop_reason() const { return stop_reason_; }
  nlohmann::json history_json() const;

  // best = true stores the best-validation parameters (and the optimizer
  // state captured with them); otherwise the current state.
  CheckpointFile checkpoint(bool best) const;

 private:
  void record_validation(std::optional<double> loss, std::size_t steps);
  EvalOptions eval_options() const;

  TrainConfig config_;
  std::shared_ptr<const Split> split_;
  std::shared_ptr<const Matrix> semantic_;
  Model model_;
  Adam adam_;
  std::size_t epoch_ = 0;
  std::vector<EpochRecord> history_;

  Params best_params_;
  Adam best_adam_;
  std::size_t best_epoch_ = 0;
  double best_score_ = -std::numeric_limits<double>::infinity();
  nlohmann::json best_metrics_;
  std::size_t bad_epochs_ = 0;
  std::string stop_reason_;
};

// Rebuilds the model stored in a checkpoint. The semantic table comes from
// the checkpoint unless one is supplied.
Model load_model(const CheckpointFile& file, std::shared_ptr<const Matrix> semantic = nullptr);
TrainConfig checkpoint_config(const CheckpointFile& file);

}  // namespace m2rec
