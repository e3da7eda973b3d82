#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "m2rec/affm.hpp"
#include "m2rec/dataset.hpp"
#include "m2rec/gate_head.hpp"
#include "m2rec/spectral_filter.hpp"
#include "m2rec/types.hpp"

namespace m2rec {

struct ModelConfig {
  std::size_t num_items = 0;
  std::size_t max_len = 200;
  AffmDims dims;
  std::size_t layers = 1;
  bool spectral_filter = true;
  double theta = 0.9;
  FilterMode filter_mode = FilterMode::kElementwise;
  Discretization discretization = Discretization::kZoh;
  Fusion fusion = Fusion::kGate;
  std::size_t semantic_dim = 0;  // 0: no semantic table
  double dropout = 0.2;
  bool tie_output = false;       // score with E^(1) instead of a separate matrix
  bool all_positions = false;    // training loss over every position, not only the last

  void validate() const;
  bool uses_semantic() const { return semantic_dim > 0 && fusion != Fusion::kTemporalOnly; }
  std::size_t fused_dim() const { return fusion == Fusion::kConcat ? 2 * dims.model : dims.model; }
};

// Every trainable tensor. Absent components are left empty and skipped by visit().
struct Params {
  Matrix item_embedding;  // (|V| + 1) x d, row 0 frozen at zero
  Matrix filter_re;
  Matrix filter_im;
  std::vector<AffmLayerParams> layers;
  Matrix semantic_proj;   // d_l x d
  Matrix semantic_bias;   // 1 x d
  Matrix alpha;           // 1 x 1
  Matrix beta;            // 1 x 1
  Matrix out_w;           // fused_dim x (|V| + 1); empty when tied
  Matrix out_b;           // 1 x (|V| + 1)

  template <typename F>
  void visit(F&& f) {
    const auto emit = [&](const std::string& name, Matrix& m) {
      if (m.size() > 0) f(name, m);
    };
    emit("item_embedding", item_embedding);
    emit("filter.w_re", filter_re);
    emit("filter.w_im", filter_im);
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].visit("affm." + std::to_string(i) + ".", emit);
    emit("semantic.proj", semantic_proj);
    emit("semantic.bias", semantic_bias);
    emit("gate.alpha", alpha);
    emit("gate.beta", beta);
    emit("head.out_w", out_w);
    emit("head.out_b", out_b);
  }

  std::vector<std::pair<std::string, Matrix*>> named();
  static Params zeros_like(const Params& other);
  std::size_t count() const;
};

// Windows laid out for batched evaluation: row b * length + t.
struct SequenceBatch {
  std::size_t length = 0;
  std::vector<ItemId> items;
  std::vector<std::size_t> first_valid;
  std::vector<ItemId> targets;
  std::vector<std::uint32_t> users;
  std::vector<std::size_t> history;
  std::vector<std::uint64_t> dropout_seeds;  // only read in training mode

  std::size_t size() const { return first_valid.size(); }
};

SequenceBatch make_batch(const Split& split, std::span<const WindowRef> refs);

enum class Mode { kTrain, kEval };

// A scored position: window b, timestep t, and the item expected next.
struct ScoreRow {
  std::size_t window;
  std::size_t t;
  ItemId target;
};

class Model {
 public:
  Model(ModelConfig config, std::shared_ptr<const Matrix> semantic_raw, std::uint64_t seed);
  Model(ModelConfig config, std::shared_ptr<const Matrix> semantic_raw, Params params);

  const ModelConfig& config() const { return config_; }
  const Params& params() const { return params_; }
  Params& params() { return params_; }
  const std::shared_ptr<const Matrix>& semantic_raw() const { return semantic_; }

  // Per-row tensors hold only valid positions, packed as described by layout.
  struct Cache {
    RowLayout layout;
    Matrix embedded;  // after dropout
    Matrix dropout;   // mask (empty when unused)
    Matrix filtered;
    std::vector<AffmLayerCache> layers;
    Matrix output;  // last layer output
    std::vector<ScoreRow> rows;
    Matrix semantic_rows;  // raw semantic rows of scored items
    Matrix e_l;
    Matrix e_m;
    Matrix z;
  };

  std::vector<ScoreRow> score_rows(const SequenceBatch& batch, Mode mode) const;

  // Scores (rows x (|V| + 1)) for the rows given by score_rows(); column 0 is -inf.
  Matrix forward(const SequenceBatch& batch, Mode mode, Cache* cache = nullptr) const;

  // d_scores matches forward()'s output; column 0 is ignored. Accumulates into grads.
  void backward(const SequenceBatch& batch, const Cache& cache, const Matrix& d_scores,
                Params& grads) const;

  // E^(m) for one window (T x d) in evaluation mode.
  Matrix temporal_embedding(const SequenceBatch& batch, std::size_t window) const;

 private:
  void check_params();
  static Eigen::Index packed_row(const SequenceBatch& batch, const ScoreRow& s,
                                 const RowLayout& layout);

  ModelConfig config_;
  std::shared_ptr<const Matrix> semantic_;
  Params params_;
  std::shared_ptr<const SpectralFilterKernel> filter_;
};

}  // namespace m2rec

namespace m2rec {

// Windows [begin, end) of a batch.
SequenceBatch slice(const SequenceBatch& batch, std::size_t begin, std::size_t end);

// into += from, tensor by tensor.
void accumulate(Params& into, const Params& from);

}  // namespace m2rec
