#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "m2rec/dataset.hpp"
#include "m2rec/model.hpp"

namespace m2rec {

// 1-based rank of `target` among items 1..n of a score row whose entry 0 is
// the padding item. Items scoring equal to the target rank ahead of it only
// when their index is smaller.
std::size_t target_rank(std::span<const double> scores, ItemId target);

struct MetricValues {
  std::size_t users = 0;
  std::map<std::size_t, double> hr;
  std::map<std::size_t, double> ndcg;
  std::map<std::size_t, double> mrr;
};

// Users are bucketed by history length (events before the target, before
// window truncation). `disjoint` partitions the users; `cumulative` holds
// the "< 100 / < 200 / < 300" reading.
struct MetricReport {
  std::vector<std::size_t> ks;
  MetricValues overall;
  std::vector<std::pair<std::string, MetricValues>> disjoint;
  std::vector<std::pair<std::string, MetricValues>> cumulative;

  double hr(std::size_t k) const { return overall.hr.at(k); }
  double ndcg(std::size_t k) const { return overall.ndcg.at(k); }
  double mrr(std::size_t k) const { return overall.mrr.at(k); }
  // "hr@10" style lookup
  double metric(const std::string& name) const;

  nlohmann::json to_json() const;
};

inline const std::vector<std::size_t> kDefaultCutoffs = {1, 5, 10, 20};

// Metrics from precomputed ranks; histories feed the buckets.
MetricReport metrics_from_ranks(std::span<const std::size_t> ranks,
                                std::span<const std::size_t> histories,
                                std::span<const std::size_t> ks);

struct EvalOptions {
  std::vector<std::size_t> ks = kDefaultCutoffs;
  std::size_t batch = 4096;
  std::size_t shard_rows = 4096;  // rows per forward pass
  std::size_t threads = 1;
};

// Full-catalogue ranking of each window's target. Throws EvaluationError on
// an empty window list.
MetricReport rank_and_score(const Model& model, const Split& split,
                            std::span<const WindowRef> windows, const EvalOptions& options);

struct RobustnessPoint {
  double level;
  MetricReport report;
};

// Perturbs the ID-embedding table (padding row excluded) at each level,
// evaluates, and leaves the model untouched.
std::vector<RobustnessPoint> robustness_sweep(const Model& model, const Split& split,
                                              std::span<const WindowRef> windows,
                                              std::span<const double> levels, std::uint64_t seed,
                                              const EvalOptions& options);

struct TimingRow {
  std::size_t length;
  double filter_seconds;  // median over reps
  double scan_seconds;
};

// Forward time of the spectral filter and of the selective scan for a batch
// of random sequences at each length.
std::vector<TimingRow> timing_bench(std::span<const std::size_t> lengths, std::size_t reps,
                                    std::size_t d = 64, std::size_t batch = 32,
                                    std::uint64_t seed = 1);

}  // namespace m2rec
