#include "m2rec/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include "m2rec/error.hpp"
#include "m2rec/parallel.hpp"

namespace m2rec {
namespace {

struct Bucket {
  const char* name;
  std::size_t lo;
  std::size_t hi;  // exclusive
};

constexpr std::size_t kNoLimit = static_cast<std::size_t>(-1);
constexpr Bucket kDisjoint[] = {
    {"[0,100)", 0, 100}, {"[100,200)", 100, 200}, {"[200,300)", 200, 300}, {">=300", 300, kNoLimit}};
constexpr Bucket kCumulative[] = {{"<100", 0, 100}, {"<200", 0, 200}, {"<300", 0, 300}};

MetricValues aggregate(std::span<const std::size_t> ranks, std::span<const std::size_t> histories,
                       std::span<const std::size_t> ks, std::size_t lo, std::size_t hi) {
  MetricValues v;
  for (std::size_t k : ks) v.hr[k] = v.ndcg[k] = v.mrr[k] = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (histories[i] < lo || histories[i] >= hi) continue;
    ++v.users;
    const std::size_t r = ranks[i];
    for (std::size_t k : ks) {
      if (r > k) continue;
      v.hr[k] += 1.0;
      v.ndcg[k] += 1.0 / std::log2(static_cast<double>(r) + 1.0);
      v.mrr[k] += 1.0 / static_cast<double>(r);
    }
  }
  if (v.users > 0) {
    const double n = static_cast<double>(v.users);
    for (std::size_t k : ks) {
      v.hr[k] /= n;
      v.ndcg[k] /= n;
      v.mrr[k] /= n;
    }
  }
  return v;
}

nlohmann::json values_json(const MetricValues& v) {
  nlohmann::json j;
  j["users"] = v.users;
  for (const auto& [k, x] : v.hr) j["hr@" + std::to_string(k)] = x;
  for (const auto& [k, x] : v.ndcg) j["ndcg@" + std::to_string(k)] = x;
  for (const auto& [k, x] : v.mrr) j["mrr@" + std::to_string(k)] = x;
  return j;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::size_t target_rank(std::span<const double> scores, ItemId target) {
  if (target < 1 || static_cast<std::size_t>(target) >= scores.size())
    throw EvaluationError("target_rank: target outside the catalogue");
  const double s = scores[static_cast<std::size_t>(target)];
  if (std::isnan(s)) throw NumericError("target_rank: NaN score");
  std::size_t ahead = 0;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    const double x = scores[j];
    if (std::isnan(x)) throw NumericError("target_rank: NaN score");
    if (x > s || (x == s && j < static_cast<std::size_t>(target))) ++ahead;
  }
  return ahead + 1;
}

double MetricReport::metric(const std::string& name) const {
  const auto at = name.find('@');
  if (at == std::string::npos) throw ParameterError("metric name must look like hr@10: " + name);
  const std::string kind = name.substr(0, at);
  const std::size_t k = std::stoul(name.substr(at + 1));
  const std::map<std::size_t, double>* table = kind == "hr"     ? &overall.hr
                                               : kind == "ndcg" ? &overall.ndcg
                                               : kind == "mrr"  ? &overall.mrr
                                                                : nullptr;
  if (table == nullptr || table->count(k) == 0)
    throw ParameterError("metric not computed: " + name);
  return table->at(k);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = values_json(overall);
  j["k"] = ks;
  nlohmann::json d = nlohmann::json::object();
  for (const auto& [name, v] : disjoint) d[name] = values_json(v);
  nlohmann::json c = nlohmann::json::object();
  for (const auto& [name, v] : cumulative) c[name] = values_json(v);
  j["buckets"] = {{"disjoint", d}, {"cumulative", c}};
  return j;
}

MetricReport metrics_from_ranks(std::span<const std::size_t> ranks,
                                std::span<const std::size_t> histories,
                                std::span<const std::size_t> ks) {
  if (ranks.empty()) throw EvaluationError("evaluation: no users to score");
  if (histories.size() != ranks.size()) throw ContractError("evaluation: one history per rank");
  if (ks.empty()) throw ParameterError("evaluation: no cutoffs requested");
  for (std::size_t k : ks)
    if (k == 0) throw ParameterError("evaluation: cutoff must be positive");
  MetricReport r;
  r.ks.assign(ks.begin(), ks.end());
  r.overall = aggregate(ranks, histories, ks, 0, kNoLimit);
  for (const auto& b : kDisjoint) r.disjoint.emplace_back(b.name, aggregate(ranks, histories, ks, b.lo, b.hi));
  for (const auto& b : kCumulative)
    r.cumulative.emplace_back(b.name, aggregate(ranks, histories, ks, b.lo, b.hi));
  return r;
}

MetricReport rank_and_score(const Model& model, const Split& split,
                            std::span<const WindowRef> windows, const EvalOptions& options) {
  if (windows.empty()) throw EvaluationError("evaluation: empty window set");
  const std::size_t per_shard = std::max<std::size_t>(1, options.shard_rows / split.max_len());
  const std::size_t shards = (windows.size() + per_shard - 1) / per_shard;
  std::vector<std::size_t> ranks(windows.size());
  std::vector<std::size_t> histories(windows.size());
  parallel_for(shards, options.threads, [&](std::size_t s, std::size_t) {
    const std::size_t begin = s * per_shard;
    const std::size_t end = std::min(windows.size(), begin + per_shard);
    const SequenceBatch batch = make_batch(split, windows.subspan(begin, end - begin));
    const Matrix scores = model.forward(batch, Mode::kEval);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      ranks[begin + b] = target_rank(
          std::span<const double>(scores.row(static_cast<Eigen::Index>(b)).data(),
                                  static_cast<std::size_t>(scores.cols())),
          batch.targets[b]);
      histories[begin + b] = batch.history[b];
    }
  });
  return metrics_from_ranks(ranks, histories, options.ks);
}

std::vector<RobustnessPoint> robustness_sweep(const Model& model, const Split& split,
                                              std::span<const WindowRef> windows,
                                              std::span<const double> levels, std::uint64_t seed,
                                              const EvalOptions& options) {
  std::vector<RobustnessPoint> out;
  const Matrix& table = model.params().item_embedding;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == 0.0) {
      out.push_back({levels[i], rank_and_score(model, split, windows, options)});
      continue;
    }
    Model noisy = model;
    const Matrix body = table.bottomRows(table.rows() - 1);
    noisy.params().item_embedding.bottomRows(table.rows() - 1) =
        inject_gaussian_noise(body, levels[i], seed + i);
    out.push_back({levels[i], rank_and_score(noisy, split, windows, options)});
  }
  return out;
}

std::vector<TimingRow> timing_bench(std::span<const std::size_t> lengths, std::size_t reps,
                                    std::size_t d, std::size_t batch, std::uint64_t seed) {
  if (reps == 0) throw ParameterError("timing_bench: reps must be positive");
  std::vector<TimingRow> rows;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  AffmDims dims;
  dims.model = d;
  const auto layer = AffmLayerParams::init(dims, rng);
  for (std::size_t len : lengths) {
    const auto total = static_cast<Eigen::Index>(len * batch);
    Matrix x(total, static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    Matrix u(total, static_cast<Eigen::Index>(dims.inner()));
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = normal(rng);
    const auto w = SpectralFilterParams::identity(len, d, 0.9);
    SpectralFilterKernel kernel(len, d, 0.9, FilterMode::kElementwise);
    Matrix out(total, static_cast<Eigen::Index>(d));
    Matrix y(total, static_cast<Eigen::Index>(dims.inner()));
    const auto tl = static_cast<Eigen::Index>(len);

    std::vector<double> ft;
    std::vector<double> st;
    for (std::size_t r = 0; r < reps; ++r) {
      auto t0 = std::chrono::steady_clock::now();
      for (std::size_t b = 0; b < batch; ++b) {
        const auto base = static_cast<Eigen::Index>(b) * tl;
        kernel.forward(x.middleRows(base, tl), w.w_re, w.w_im, 0, out.middleRows(base, tl));
      }
      auto t1 = std::chrono::steady_clock::now();
      for (std::size_t b = 0; b < batch; ++b) {
        const auto base = static_cast<Eigen::Index>(b) * tl;
        y.middleRows(base, tl) = selective_scan(u.middleRows(base, tl), layer, dims, Discretization::kZoh);
      }
      auto t2 = std::chrono::steady_clock::now();
      ft.push_back(std::chrono::duration<double>(t1 - t0).count());
      st.push_back(std::chrono::duration<double>(t2 - t1).count());
    }
    rows.push_back({len, median(ft), median(st)});
  }
  return rows;
}

}  // namespace m2rec
