#include "m2rec/model.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "m2rec/embeddings.hpp"
#include "m2rec/error.hpp"

namespace m2rec {
namespace {

constexpr double kInitStd = 0.02;

Matrix normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, kInitStd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix zeros(const Matrix& m) { return Matrix::Zero(m.rows(), m.cols()); }

}  // namespace

void ModelConfig::validate() const {
  if (num_items == 0) throw ParameterError("model: empty catalogue");
  if (max_len == 0) throw ParameterError("model: max_len must be positive");
  if (dims.model == 0 || dims.state == 0 || dims.expand == 0 || dims.conv_width == 0)
    throw ParameterError("model: dimensions must be positive");
  if (spectral_filter) retained_bins(theta, max_len);
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("model: dropout must lie in [0, 1)");
  if (tie_output && fusion == Fusion::kConcat)
    throw ParameterError("model: weight tying needs a fused dimension equal to d");
}

std::vector<std::pair<std::string, Matrix*>> Params::named() {
  std::vector<std::pair<std::string, Matrix*>> out;
  visit([&](const std::string& name, Matrix& m) { out.emplace_back(name, &m); });
  return out;
}

Params Params::zeros_like(const Params& o) {
  Params p;
  p.item_embedding = zeros(o.item_embedding);
  p.filter_re = zeros(o.filter_re);
  p.filter_im = zeros(o.filter_im);
  for (const auto& layer : o.layers) p.layers.push_back(AffmLayerParams::zeros_like(layer));
  p.semantic_proj = zeros(o.semantic_proj);
  p.semantic_bias = zeros(o.semantic_bias);
  p.alpha = zeros(o.alpha);
  p.beta = zeros(o.beta);
  p.out_w = zeros(o.out_w);
  p.out_b = zeros(o.out_b);
  return p;
}

std::size_t Params::count() const {
  std::size_t n = 0;
  const_cast<Params*>(this)->visit(
      [&](const std::string&, Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

SequenceBatch make_batch(const Split& split, std::span<const WindowRef> refs) {
  SequenceBatch batch;
  batch.length = split.max_len();
  batch.items.resize(refs.size() * batch.length);
  batch.first_valid.reserve(refs.size());
  for (std::size_t b = 0; b < refs.size(); ++b) {
    const WindowRef& ref = refs[b];
    ItemId* row = batch.items.data() + b * batch.length;
    split.fill_input(ref, row);
    std::size_t fv = 0;
    while (fv < batch.length && row[fv] == kPaddingItem) ++fv;
    batch.first_valid.push_back(fv);
    batch.targets.push_back(split.data().users[ref.user].items[ref.end]);
    batch.users.push_back(ref.user);
    batch.history.push_back(ref.end);
  }
  return batch;
}

Model::Model(ModelConfig config, std::shared_ptr<const Matrix> semantic_raw, std::uint64_t seed)
    : config_(std::move(config)), semantic_(std::move(semantic_raw)) {
  config_.validate();
  if (semantic_ && config_.semantic_dim == 0)
    config_.semantic_dim = static_cast<std::size_t>(semantic_->cols());
  std::mt19937_64 rng(seed);
  const auto d = static_cast<Eigen::Index>(config_.dims.model);
  const auto v = static_cast<Eigen::Index>(config_.num_items) + 1;

  params_.item_embedding = normal(v, d, rng);
  params_.item_embedding.row(0).setZero();
  if (config_.spectral_filter) {
    const auto w = SpectralFilterParams::identity(config_.max_len, config_.dims.model,
                                                  config_.theta, config_.filter_mode);
    params_.filter_re = w.w_re;
    params_.filter_im = w.w_im;
  }
  for (std::size_t i = 0; i < config_.layers; ++i)
    params_.layers.push_back(AffmLayerParams::init(config_.dims, rng));
  if (config_.uses_semantic()) {
    params_.semantic_proj = normal(static_cast<Eigen::Index>(config_.semantic_dim), d, rng);
    params_.semantic_bias = Matrix::Zero(1, d);
  }
  if (config_.fusion == Fusion::kGate) {
    params_.alpha = Matrix::Constant(1, 1, kInitialGate);
    params_.beta = Matrix::Constant(1, 1, kInitialGate);
  }
  if (!config_.tie_output) {
    params_.out_w = normal(static_cast<Eigen::Index>(config_.fused_dim()), v, rng);
    params_.out_w.col(0).setZero();
  }
  params_.out_b = Matrix::Zero(1, v);
  check_params();
}

Model::Model(ModelConfig config, std::shared_ptr<const Matrix> semantic_raw, Params params)
    : config_(std::move(config)), semantic_(std::move(semantic_raw)), params_(std::move(params)) {
  config_.validate();
  if (semantic_ && config_.semantic_dim == 0)
    config_.semantic_dim = static_cast<std::size_t>(semantic_->cols());
  check_params();
}

void Model::check_params() {
  const auto d = static_cast<Eigen::Index>(config_.dims.model);
  const auto v = static_cast<Eigen::Index>(config_.num_items) + 1;
  const auto fail = [](const std::string& what) { throw ContractError("model: " + what); };
  if (params_.item_embedding.rows() != v || params_.item_embedding.cols() != d)
    fail("item embedding shape does not match the catalogue");
  if (params_.layers.size() != config_.layers) fail("layer count mismatch");
  if (config_.spectral_filter) {
    filter_ = std::make_shared<const SpectralFilterKernel>(config_.max_len, config_.dims.model,
                                                           config_.theta, config_.filter_mode);
    filter_->check_weights(params_.filter_re, params_.filter_im);
  }
  if (config_.uses_semantic()) {
    if (!semantic_) fail("semantic table required by the configuration");
    if (semantic_->rows() != v) fail("semantic table rows do not match the catalogue");
    if (params_.semantic_proj.rows() != semantic_->cols() || params_.semantic_proj.cols() != d)
      fail("semantic projection shape mismatch");
  }
  if (config_.fusion == Fusion::kGate && (params_.alpha.size() != 1 || params_.beta.size() != 1))
    fail("gate scalars missing");
  if (!config_.tie_output &&
      (params_.out_w.rows() != static_cast<Eigen::Index>(config_.fused_dim()) ||
       params_.out_w.cols() != v))
    fail("output projection shape mismatch");
  if (params_.out_b.cols() != v) fail("output bias shape mismatch");
}

std::vector<ScoreRow> Model::score_rows(const SequenceBatch& batch, Mode mode) const {
  std::vector<ScoreRow> rows;
  const std::size_t len = batch.length;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t fv = batch.first_valid[b];
    if (fv >= len) throw ContractError("model: window has no valid position");
    if (mode == Mode::kTrain && config_.all_positions) {
      for (std::size_t t = fv; t + 1 < len; ++t) rows.push_back({b, t, batch.items[b * len + t + 1]});
    }
    rows.push_back({b, len - 1, batch.targets[b]});
  }
  return rows;
}

Matrix Model::forward(const SequenceBatch& batch, Mode mode, Cache* cache) const {
  const std::size_t len = batch.length;
  if (len != config_.max_len) throw ContractError("model: batch length differs from max_len");
  if (batch.items.size() != batch.size() * len || batch.first_valid.size() != batch.size())
    throw ContractError("model: malformed batch");
  const auto d = static_cast<Eigen::Index>(config_.dims.model);
  const bool train = mode == Mode::kTrain;

  Cache local;
  Cache& c = cache != nullptr ? *cache : local;
  c.rows = score_rows(batch, mode);
  c.layout = RowLayout::packed(len, batch.first_valid);
  const RowLayout& layout = c.layout;
  const auto total = static_cast<Eigen::Index>(layout.rows());

  c.embedded.resize(total, d);
  const auto v = params_.item_embedding.rows();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const ItemId* items = batch.items.data() + b * len + batch.first_valid[b];
    for (std::size_t t = 0; t < layout.size(b); ++t) {
      const ItemId item = items[t];
      if (item < 0 || item >= v) throw LookupError("model: item index out of range");
      c.embedded.row(static_cast<Eigen::Index>(layout.begin(b) + t)) =
          params_.item_embedding.row(item);
    }
  }
  if (train && config_.dropout > 0.0) {
    if (batch.dropout_seeds.size() != batch.size())
      throw ContractError("model: training batch without dropout seeds");
    c.dropout.resize(total, d);
    for (std::size_t b = 0; b < batch.size(); ++b)
      dropout_mask(batch.dropout_seeds[b], config_.dropout,
                   c.dropout.middleRows(static_cast<Eigen::Index>(layout.begin(b)),
                                        static_cast<Eigen::Index>(layout.size(b))));
    c.embedded.array() *= c.dropout.array();
  } else {
    c.dropout.resize(0, 0);
  }

  if (filter_) {
    c.filtered.resize(total, d);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto base = static_cast<Eigen::Index>(layout.begin(b));
      const auto n = static_cast<Eigen::Index>(layout.size(b));
      filter_->forward(c.embedded.middleRows(base, n), params_.filter_re, params_.filter_im,
                       batch.first_valid[b], c.filtered.middleRows(base, n));
    }
  } else {
    c.filtered = c.embedded;
  }

  c.layers.resize(config_.layers);
  Matrix h = c.filtered;
  Matrix next;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    affm_layer_forward(params_.layers[l], config_.dims, config_.discretization, layout, h,
                       &c.layers[l], next);
    h.swap(next);
  }
  c.output = h;

  const auto n_rows = static_cast<Eigen::Index>(c.rows.size());
  c.e_m.resize(n_rows, d);
  for (Eigen::Index r = 0; r < n_rows; ++r)
    c.e_m.row(r) = h.row(packed_row(batch, c.rows[static_cast<std::size_t>(r)], layout));
  if (config_.uses_semantic()) {
    c.semantic_rows.resize(n_rows, semantic_->cols());
    for (Eigen::Index r = 0; r < n_rows; ++r) {
      const ScoreRow& s = c.rows[static_cast<std::size_t>(r)];
      c.semantic_rows.row(r) = semantic_->row(batch.items[s.window * len + s.t]);
    }
    c.e_l.noalias() = c.semantic_rows * params_.semantic_proj;
    c.e_l.rowwise() += params_.semantic_bias.row(0);
  } else {
    c.e_l = Matrix::Zero(n_rows, d);
  }

  switch (config_.fusion) {
    case Fusion::kGate:
      c.z = params_.alpha(0, 0) * c.e_l + params_.beta(0, 0) * c.e_m;
      break;
    case Fusion::kConcat:
      c.z.resize(n_rows, 2 * d);
      c.z << c.e_l, c.e_m;
      break;
    case Fusion::kTemporalOnly:
      c.z = c.e_m;
      break;
  }

  Matrix scores;
  if (config_.tie_output)
    scores.noalias() = c.z * params_.item_embedding.transpose();
  else
    scores.noalias() = c.z * params_.out_w;
  scores.rowwise() += params_.out_b.row(0);
  scores.col(0).setConstant(-std::numeric_limits<double>::infinity());
  return scores;
}

void Model::backward(const SequenceBatch& batch, const Cache& c, const Matrix& d_scores_in,
                     Params& g) const {
  const std::size_t len = batch.length;
  const auto d = static_cast<Eigen::Index>(config_.dims.model);
  const RowLayout& layout = c.layout;
  const auto total = static_cast<Eigen::Index>(layout.rows());
  const auto n_rows = static_cast<Eigen::Index>(c.rows.size());
  if (d_scores_in.rows() != n_rows || d_scores_in.cols() != params_.out_b.cols())
    throw ContractError("model: score gradient shape mismatch");
  if (layout.windows() != batch.size()) throw ContractError("model: cache from another batch");

  Matrix d_scores = d_scores_in;
  d_scores.col(0).setZero();
  g.out_b.row(0) += d_scores.colwise().sum();
  Matrix dz;
  if (config_.tie_output) {
    g.item_embedding.noalias() += d_scores.transpose() * c.z;
    dz.noalias() = d_scores * params_.item_embedding;
  } else {
    g.out_w.noalias() += c.z.transpose() * d_scores;
    dz.noalias() = d_scores * params_.out_w.transpose();
  }

  Matrix d_el;
  Matrix d_em;
  switch (config_.fusion) {
    case Fusion::kGate:
      g.alpha(0, 0) += dz.cwiseProduct(c.e_l).sum();
      g.beta(0, 0) += dz.cwiseProduct(c.e_m).sum();
      d_el = params_.alpha(0, 0) * dz;
      d_em = params_.beta(0, 0) * dz;
      break;
    case Fusion::kConcat:
      d_el = dz.leftCols(d);
      d_em = dz.rightCols(d);
      break;
    case Fusion::kTemporalOnly:
      d_em = dz;
      break;
  }
  if (config_.uses_semantic()) {
    g.semantic_proj.noalias() += c.semantic_rows.transpose() * d_el;
    g.semantic_bias.row(0) += d_el.colwise().sum();
  }

  Matrix d_h = Matrix::Zero(total, d);
  for (Eigen::Index r = 0; r < n_rows; ++r)
    d_h.row(packed_row(batch, c.rows[static_cast<std::size_t>(r)], layout)) += d_em.row(r);

  Matrix d_in;
  for (std::size_t l = config_.layers; l-- > 0;) {
    affm_layer_backward(params_.layers[l], config_.dims, config_.discretization, layout,
                        c.layers[l], d_h, d_in, g.layers[l]);
    d_h.swap(d_in);
  }

  Matrix d_emb(total, d);
  if (filter_) {
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto base = static_cast<Eigen::Index>(layout.begin(b));
      const auto n = static_cast<Eigen::Index>(layout.size(b));
      filter_->backward(c.embedded.middleRows(base, n), d_h.middleRows(base, n),
                        params_.filter_re, params_.filter_im, batch.first_valid[b],
                        d_emb.middleRows(base, n), g.filter_re, g.filter_im);
    }
  } else {
    d_emb = d_h;
  }
  if (c.dropout.size() != 0) d_emb.array() *= c.dropout.array();

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const ItemId* items = batch.items.data() + b * len + batch.first_valid[b];
    for (std::size_t t = 0; t < layout.size(b); ++t)
      if (items[t] != kPaddingItem)
        g.item_embedding.row(items[t]) += d_emb.row(static_cast<Eigen::Index>(layout.begin(b) + t));
  }
}

Eigen::Index Model::packed_row(const SequenceBatch& batch, const ScoreRow& s,
                               const RowLayout& layout) {
  return static_cast<Eigen::Index>(layout.begin(s.window) + s.t - batch.first_valid[s.window]);
}

Matrix Model::temporal_embedding(const SequenceBatch& batch, std::size_t window) const {
  SequenceBatch one;
  one.length = batch.length;
  one.items.assign(batch.items.begin() + static_cast<std::ptrdiff_t>(window * batch.length),
                   batch.items.begin() + static_cast<std::ptrdiff_t>((window + 1) * batch.length));
  one.first_valid = {batch.first_valid[window]};
  one.targets = {batch.targets[window]};
  Cache c;
  forward(one, Mode::kEval, &c);
  const auto valid = c.output.rows();
  Matrix full = Matrix::Zero(static_cast<Eigen::Index>(batch.length), c.output.cols());
  full.bottomRows(valid) = c.output;
  return full;
}

}  // namespace m2rec

namespace m2rec {

SequenceBatch slice(const SequenceBatch& batch, std::size_t begin, std::size_t end) {
  if (begin > end || end > batch.size()) throw ContractError("slice: range outside the batch");
  SequenceBatch out;
  out.length = batch.length;
  const auto off = [](std::size_t i) { return static_cast<std::ptrdiff_t>(i); };
  out.items.assign(batch.items.begin() + off(begin * batch.length),
                   batch.items.begin() + off(end * batch.length));
  const auto copy = [&](const auto& src, auto& dst) {
    if (src.size() == batch.size()) dst.assign(src.begin() + off(begin), src.begin() + off(end));
  };
  copy(batch.first_valid, out.first_valid);
  copy(batch.targets, out.targets);
  copy(batch.users, out.users);
  copy(batch.history, out.history);
  copy(batch.dropout_seeds, out.dropout_seeds);
  return out;
}

void accumulate(Params& into, const Params& from) {
  auto dst = into.named();
  auto src = const_cast<Params&>(from).named();
  if (dst.size() != src.size()) throw ContractError("accumulate: parameter sets differ");
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].second += *src[i].second;
}

}  // namespace m2rec
