#include "m2rec/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <set>

#include "m2rec/error.hpp"
#include "m2rec/log.hpp"
#include "m2rec/parallel.hpp"

namespace m2rec {
namespace {

template <typename E>
E parse_enum(const std::string& key, const std::string& value,
             std::initializer_list<std::pair<const char*, E>> table) {
  for (const auto& [name, e] : table)
    if (value == name) return e;
  std::string options;
  for (const auto& [name, e] : table) options += std::string(options.empty() ? "" : ", ") + name;
  throw ParameterError("config: " + key + " must be one of " + options + ", got '" + value + "'");
}

LossMode parse_loss(const std::string& v) {
  return parse_enum<LossMode>("loss_mode", v,
                              {{"softmax_ce", LossMode::kSoftmaxCe},
                               {"bce_all_items", LossMode::kBceAllItems}});
}
Discretization parse_discretization(const std::string& v) {
  return parse_enum<Discretization>("discretization", v,
                                    {{"zoh", Discretization::kZoh},
                                     {"paper_variant", Discretization::kPaper}});
}
FilterMode parse_filter_mode(const std::string& v) {
  return parse_enum<FilterMode>("filter_mode", v,
                                {{"elementwise", FilterMode::kElementwise},
                                 {"dense", FilterMode::kDense}});
}
Fusion parse_fusion(const std::string& v) {
  return parse_enum<Fusion>("fusion", v,
                            {{"gate", Fusion::kGate},
                             {"concat", Fusion::kConcat},
                             {"temporal_only", Fusion::kTemporalOnly}});
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

const std::string kParam = "param/";
const std::string kMoment1 = "adam.m/";
const std::string kMoment2 = "adam.v/";
const std::string kSemantic = "semantic/raw";

void store(CheckpointFile& file, const std::string& prefix, const Params& p) {
  const_cast<Params&>(p).visit([&](const std::string& name, Matrix& m) {
    file.tensors[prefix + name] = StoredTensor{m, DType::kF64};
  });
}

void restore(const CheckpointFile& file, const std::string& prefix, Params& p) {
  p.visit([&](const std::string& name, Matrix& m) {
    const Matrix& t = file.tensor(prefix + name);
    if (t.rows() != m.rows() || t.cols() != m.cols())
      throw FormatError("checkpoint: tensor " + prefix + name + " has the wrong shape");
    m = t;
  });
}

}  // namespace

std::string to_string(LossMode m) { return m == LossMode::kSoftmaxCe ? "softmax_ce" : "bce_all_items"; }
std::string to_string(Discretization m) { return m == Discretization::kZoh ? "zoh" : "paper_variant"; }
std::string to_string(FilterMode m) { return m == FilterMode::kElementwise ? "elementwise" : "dense"; }
std::string to_string(Fusion m) {
  switch (m) {
    case Fusion::kGate: return "gate";
    case Fusion::kConcat: return "concat";
    case Fusion::kTemporalOnly: return "temporal_only";
  }
  return "gate";
}

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ull;
  for (std::uint64_t p : parts) h = splitmix(h ^ splitmix(p));
  return h;
}

void TrainConfig::validate() const {
  const auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ParameterError(std::string("config: ") + name + " must be positive");
  };
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("config: lr must be positive");
  positive(batch_train, "batch_train");
  positive(batch_eval, "batch_eval");
  positive(d, "d");
  positive(d_state, "d_state");
  positive(expand, "expand");
  positive(conv_width, "conv_width");
  positive(max_len, "max_len");
  positive(threads, "threads");
  positive(shard_rows, "shard_rows");
  if (!(theta > 0.0 && theta <= 1.0)) throw ParameterError("config: theta must lie in (0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("config: dropout must lie in [0, 1)");
  if (clip_norm < 0.0) throw ParameterError("config: clip_norm must be non-negative");
  if (ks.empty()) throw ParameterError("config: ks must not be empty");
  for (std::size_t k : ks) positive(k, "every cutoff in ks");
  const auto has_metric = [&](const std::string& name) {
    const auto at = name.find('@');
    if (at == std::string::npos) return false;
    const std::string kind = name.substr(0, at);
    if (kind != "hr" && kind != "ndcg" && kind != "mrr") return false;
    try {
      return std::find(ks.begin(), ks.end(), std::stoul(name.substr(at + 1))) != ks.end();
    } catch (const std::exception&) {
      return false;
    }
  };
  if (!has_metric(early_stop_metric))
    throw ParameterError("config: early_stop_metric '" + early_stop_metric + "' is not computed");
  if (!target_metric.empty() && !has_metric(target_metric))
    throw ParameterError("config: target_metric '" + target_metric + "' is not computed");
  if (std::find(kAblationVariants.begin(), kAblationVariants.end(), variant) == kAblationVariants.end())
    throw ParameterError("config: unknown variant '" + variant + "'");
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

ModelConfig TrainConfig::model_config(std::size_t num_items, std::size_t semantic_dim) const {
  ModelConfig m;
  m.num_items = num_items;
  m.max_len = max_len;
  m.dims.model = d;
  m.dims.state = d_state;
  m.dims.expand = expand;
  m.dims.conv_width = conv_width;
  m.dims.dt_rank = dt_rank;
  m.layers = layers;
  m.spectral_filter = spectral_filter;
  m.theta = theta;
  m.filter_mode = filter_mode;
  m.discretization = discretization;
  m.fusion = fusion;
  m.semantic_dim = fusion == Fusion::kTemporalOnly ? 0 : semantic_dim;
  m.dropout = dropout;
  m.tie_output = tie_output;
  m.all_positions = all_positions;
  return m;
}

nlohmann::json TrainConfig::to_json() const {
  return {
      {"lr", lr},
      {"batch_train", batch_train},
      {"batch_eval", batch_eval},
      {"epochs", epochs},
      {"seed", seed},
      {"loss_mode", to_string(loss_mode)},
      {"theta", theta},
      {"layers", layers},
      {"d", d},
      {"d_state", d_state},
      {"expand", expand},
      {"conv_width", conv_width},
      {"dt_rank", dt_rank},
      {"dropout", dropout},
      {"discretization", to_string(discretization)},
      {"max_len", max_len},
      {"spectral_filter", spectral_filter},
      {"filter_mode", to_string(filter_mode)},
      {"fusion", to_string(fusion)},
      {"tie_output", tie_output},
      {"all_positions", all_positions},
      {"clip_norm", clip_norm},
      {"patience", patience},
      {"early_stop_metric", early_stop_metric},
      {"target_metric", target_metric},
      {"target_value", target_value},
      {"ks", ks},
      {"threads", threads},
      {"shard_rows", shard_rows},
      {"variant", variant},
  };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& base) {
  if (!j.is_object()) throw ParameterError("config: expected a JSON object");
  TrainConfig c = base;
  const std::set<std::string> known = [] {
    std::set<std::string> s;
    const nlohmann::json defaults = TrainConfig{}.to_json();
    for (const auto& [k, v] : defaults.items()) s.insert(k);
    return s;
  }();
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ParameterError("config: unknown key '" + k + "'");
  try {
    const auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("lr", c.lr);
    get("batch_train", c.batch_train);
    get("batch_eval", c.batch_eval);
    get("epochs", c.epochs);
    get("seed", c.seed);
    if (j.contains("loss_mode")) c.loss_mode = parse_loss(j.at("loss_mode").get<std::string>());
    get("theta", c.theta);
    get("layers", c.layers);
    get("d", c.d);
    get("d_state", c.d_state);
    get("expand", c.expand);
    get("conv_width", c.conv_width);
    get("dt_rank", c.dt_rank);
    get("dropout", c.dropout);
    if (j.contains("discretization"))
      c.discretization = parse_discretization(j.at("discretization").get<std::string>());
    get("max_len", c.max_len);
    get("spectral_filter", c.spectral_filter);
    if (j.contains("filter_mode")) c.filter_mode = parse_filter_mode(j.at("filter_mode").get<std::string>());
    if (j.contains("fusion")) c.fusion = parse_fusion(j.at("fusion").get<std::string>());
    get("tie_output", c.tie_output);
    get("all_positions", c.all_positions);
    get("clip_norm", c.clip_norm);
    get("patience", c.patience);
    get("early_stop_metric", c.early_stop_metric);
    get("target_metric", c.target_metric);
    get("target_value", c.target_value);
    get("ks", c.ks);
    get("threads", c.threads);
    get("shard_rows", c.shard_rows);
    get("variant", c.variant);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig apply_variant(TrainConfig c, const std::string& variant) {
  if (variant == "full") {
  } else if (variant == "w/o GM") {
    c.fusion = Fusion::kTemporalOnly;
  } else if (variant == "rp Con") {
    c.fusion = Fusion::kConcat;
  } else if (variant == "w/o Ada") {
    c.theta = 1.0;
  } else if (variant == "w/o AFFT") {
    c.spectral_filter = false;
  } else {
    throw ParameterError("unknown ablation variant '" + variant + "'");
  }
  c.variant = variant;
  return c;
}

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss ? nlohmann::json(*train_loss) : nlohmann::json(nullptr);
  j["steps"] = steps;
  j["valid"] = valid;
  return j;
}

EpochRecord EpochRecord::from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  if (!j.at("train_loss").is_null()) r.train_loss = j.at("train_loss").get<double>();
  r.steps = j.at("steps").get<std::size_t>();
  r.valid = j.at("valid");
  return r;
}

Trainer::Trainer(TrainConfig config, std::shared_ptr<const Split> split,
                 std::shared_ptr<const Matrix> semantic)
    : config_(std::move(config)),
      split_(std::move(split)),
      semantic_(config_.fusion == Fusion::kTemporalOnly ? nullptr : std::move(semantic)),
      model_(config_.model_config(split_->data().num_items(),
                                  semantic_ ? static_cast<std::size_t>(semantic_->cols()) : 0),
             semantic_, mix_seed({config_.seed, 0x1417})),
      adam_(AdamConfig{config_.lr}, model_.params()),
      best_params_(model_.params()),
      best_adam_(adam_) {
  config_.validate();
  if (split_->max_len() != config_.max_len)
    throw ContractError("trainer: split window length differs from max_len");
  if (split_->train().empty()) throw DatasetError("trainer: no training windows");
  if (split_->valid().empty()) throw DatasetError("trainer: no validation windows");
  log::info("model has ", model_.params().count(), " trainable values");
}

EvalOptions Trainer::eval_options() const {
  EvalOptions o;
  o.ks = config_.ks;
  o.batch = config_.batch_eval;
  o.shard_rows = config_.shard_rows;
  o.threads = config_.threads;
  return o;
}

MetricReport Trainer::evaluate(std::span<const WindowRef> windows) const {
  return rank_and_score(model_, *split_, windows, eval_options());
}

Model Trainer::best_model() const {
  return Model(model_.config(), model_.semantic_raw(), best_params_);
}

void Trainer::record_validation(std::optional<double> loss, std::size_t steps) {
  const MetricReport report = evaluate(split_->valid());
  EpochRecord rec;
  rec.epoch = epoch_;
  rec.train_loss = loss;
  rec.steps = steps;
  rec.valid = report.to_json();
  history_.push_back(rec);
  const double score = report.metric(config_.early_stop_metric);
  if (score > best_score_) {
    best_score_ = score;
    best_epoch_ = epoch_;
    best_params_ = model_.params();
    best_adam_ = adam_;
    best_metrics_ = rec.valid;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
  }
}

double Trainer::train_epoch() {
  std::vector<WindowRef> order = split_->train();
  std::mt19937_64 rng(mix_seed({config_.seed, 0x5eed, epoch_ + 1}));
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t per_shard = std::max<std::size_t>(1, config_.shard_rows / config_.max_len);
  const std::size_t threads = std::max<std::size_t>(1, config_.threads);
  Params total = Params::zeros_like(model_.params());
  std::vector<Params> shard_grads(threads, total);
  std::vector<double> shard_loss(threads);
  double loss_sum = 0.0;
  std::size_t batches = 0;

  for (std::size_t start = 0; start < order.size(); start += config_.batch_train) {
    const std::size_t stop = std::min(order.size(), start + config_.batch_train);
    SequenceBatch batch =
        make_batch(*split_, std::span<const WindowRef>(order).subspan(start, stop - start));
    batch.dropout_seeds.resize(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b)
      batch.dropout_seeds[b] = mix_seed({config_.seed, epoch_ + 1, batches, b});

    double normalizer;
    if (config_.loss_mode == LossMode::kSoftmaxCe) {
      normalizer = static_cast<double>(model_.score_rows(batch, Mode::kTrain).size());
    } else {
      normalizer = static_cast<double>(std::set<std::uint32_t>(batch.users.begin(), batch.users.end()).size());
    }

    total.visit([](const std::string&, Matrix& m) { m.setZero(); });
    double batch_loss_value = 0.0;
    const std::size_t shards = (batch.size() + per_shard - 1) / per_shard;
    // Shards run in waves of `threads`; each wave is summed in shard order, so
    // the result does not depend on the thread count.
    for (std::size_t wave = 0; wave < shards; wave += threads) {
      const std::size_t n = std::min(threads, shards - wave);
      parallel_for(n, threads, [&](std::size_t i, std::size_t) {
        const std::size_t s = wave + i;
        const SequenceBatch part =
            slice(batch, s * per_shard, std::min(batch.size(), (s + 1) * per_shard));
        Model::Cache cache;
        const Matrix scores = model_.forward(part, Mode::kTrain, &cache);
        std::vector<ItemId> targets;
        targets.reserve(cache.rows.size());
        for (const auto& r : cache.rows) targets.push_back(r.target);
        Matrix d_scores;
        shard_loss[i] = batch_loss(scores, targets, config_.loss_mode, normalizer, &d_scores).value;
        shard_grads[i].visit([](const std::string&, Matrix& m) { m.setZero(); });
        model_.backward(part, cache, d_scores, shard_grads[i]);
      });
      for (std::size_t i = 0; i < n; ++i) {
        accumulate(total, shard_grads[i]);
        batch_loss_value += shard_loss[i];
      }
    }
    check_finite(total);
    clip_global_norm(total, config_.clip_norm);
    adam_.step(model_.params(), total);
    loss_sum += batch_loss_value;
    ++batches;
  }
  ++epoch_;
  return batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
}

void Trainer::run(std::optional<std::size_t> epochs, const EpochCallback& on_epoch) {
  if (history_.empty()) {
    record_validation(std::nullopt, 0);
    if (on_epoch) on_epoch(history_.back());
  }
  const std::size_t budget = epochs.value_or(config_.epochs);
  stop_reason_ = "epoch budget";
  for (std::size_t i = 0; i < budget; ++i) {
    if (!config_.target_metric.empty() && !history_.empty() &&
        history_.back().valid.at(config_.target_metric).get<double>() >= config_.target_value) {
      stop_reason_ = "target " + config_.target_metric + " reached";
      break;
    }
    if (bad_epochs_ >= config_.patience && config_.patience > 0) {
      stop_reason_ = "early stopping";
      break;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const double loss = train_epoch();
    record_validation(loss, adam_.steps());
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto& v = history_.back().valid;
    log::info("epoch ", epoch_, " loss ", loss, " valid hr@1 ", v.value("hr@1", -1.0), " ",
              config_.early_stop_metric, " ", v.at(config_.early_stop_metric).get<double>(),
              " (", secs, " s)");
    if (on_epoch) on_epoch(history_.back());
  }
  if (!config_.target_metric.empty() &&
      history_.back().valid.at(config_.target_metric).get<double>() >= config_.target_value)
    stop_reason_ = "target " + config_.target_metric + " reached";
  else if (config_.patience > 0 && bad_epochs_ >= config_.patience)
    stop_reason_ = "early stopping";
}

nlohmann::json Trainer::history_json() const {
  nlohmann::json h = nlohmann::json::array();
  for (const auto& r : history_) h.push_back(r.to_json());
  return h;
}

CheckpointFile Trainer::checkpoint(bool best) const {
  CheckpointFile file;
  const Params& params = best ? best_params_ : model_.params();
  const Adam& adam = best ? best_adam_ : adam_;
  file.meta["format"] = "m2rec";
  file.meta["kind"] = best ? "best" : "last";
  file.meta["config"] = config_.to_json();
  file.meta["num_items"] = split_->data().num_items();
  file.meta["semantic_dim"] = model_.config().semantic_dim;
  file.meta["epoch"] = best ? best_epoch_ : epoch_;
  file.meta["optimizer_steps"] = adam.steps();
  file.meta["metrics"] = best ? best_metrics_ : history_.empty() ? nlohmann::json() : history_.back().valid;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : history_)
    if (!best || r.epoch <= best_epoch_) hist.push_back(r.to_json());
  file.meta["history"] = hist;
  file.meta["best"] = {{"epoch", best_epoch_},
                       {"score", best_score_},
                       {"metrics", best_metrics_},
                       {"bad_epochs", best ? 0 : bad_epochs_}};
  store(file, kParam, params);
  store(file, kMoment1, adam.first_moment());
  store(file, kMoment2, adam.second_moment());
  if (semantic_) file.tensors[kSemantic] = StoredTensor{*semantic_, DType::kF32};
  return file;
}

TrainConfig checkpoint_config(const CheckpointFile& file) {
  if (file.meta.value("format", "") != "m2rec") throw FormatError("checkpoint: not an m2rec model");
  return TrainConfig::from_json(file.meta.at("config"));
}

Model load_model(const CheckpointFile& file, std::shared_ptr<const Matrix> semantic) {
  const TrainConfig config = checkpoint_config(file);
  if (!semantic && file.has(kSemantic)) semantic = std::make_shared<const Matrix>(file.tensor(kSemantic));
  const auto num_items = file.meta.at("num_items").get<std::size_t>();
  const auto semantic_dim = file.meta.at("semantic_dim").get<std::size_t>();
  if (semantic_dim > 0 && !semantic) throw FormatError("checkpoint: semantic table missing");
  const ModelConfig mc = config.model_config(num_items, semantic_dim);
  Model shape(mc, mc.uses_semantic() ? semantic : nullptr, std::uint64_t{0});
  Params params = shape.params();
  restore(file, kParam, params);
  return Model(mc, mc.uses_semantic() ? semantic : nullptr, std::move(params));
}

Trainer Trainer::resume(const CheckpointFile& file, std::shared_ptr<const Split> split,
                        std::shared_ptr<const Matrix> semantic) {
  const TrainConfig config = checkpoint_config(file);
  if (!semantic && file.has(kSemantic)) semantic = std::make_shared<const Matrix>(file.tensor(kSemantic));
  if (file.meta.at("num_items").get<std::size_t>() != split->data().num_items())
    throw ContractError("resume: checkpoint catalogue size differs from the dataset");
  Trainer t(config, std::move(split), std::move(semantic));
  restore(file, kParam, t.model_.params());
  restore(file, kMoment1, t.adam_.first_moment());
  restore(file, kMoment2, t.adam_.second_moment());
  t.adam_.set_steps(file.meta.at("optimizer_steps").get<std::size_t>());
  t.epoch_ = file.meta.at("epoch").get<std::size_t>();
  for (const auto& r : file.meta.at("history")) t.history_.push_back(EpochRecord::from_json(r));
  const auto& best = file.meta.at("best");
  t.best_epoch_ = best.at("epoch").get<std::size_t>();
  t.best_score_ = best.at("score").is_null() ? -std::numeric_limits<double>::infinity()
                                             : best.at("score").get<double>();
  t.best_metrics_ = best.at("metrics");
  t.bad_epochs_ = best.at("bad_epochs").get<std::size_t>();
  // only the parameters in the file are known; a "last" checkpoint taken after
  // the best epoch no longer carries the best ones
  t.best_params_ = t.model_.params();
  t.best_adam_ = t.adam_;
  if (t.best_epoch_ != t.epoch_)
    log::warn("resuming from a non-best checkpoint: best parameters of epoch ", t.best_epoch_,
              " are not stored in it");
  return t;
}

}  // namespace m2rec
