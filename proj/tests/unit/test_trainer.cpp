#include <doctest.h>

#include <filesystem>

#include "m2rec/checkpoint.hpp"
#include "m2rec/error.hpp"
#include "m2rec/trainer.hpp"

using namespace m2rec;

namespace {

std::shared_ptr<const Split> synthetic_split(std::uint64_t seed, double noise = 0.1) {
  SyntheticOptions o;
  o.num_users = 24;
  o.length = 30;
  o.noise_prob = noise;
  o.seed = seed;
  return std::make_shared<const Split>(std::make_shared<const InteractionDataset>(generate_synthetic(o)),
                                       10);
}

TrainConfig tiny(std::uint64_t seed) {
  TrainConfig c;
  c.d = 12;
  c.d_state = 4;
  c.expand = 2;
  c.max_len = 10;
  c.batch_train = 64;
  c.lr = 5e-3;
  c.seed = seed;
  c.epochs = 3;
  c.shard_rows = 200;
  return c;
}

bool same_params(Params a, Params b) {
  std::vector<Matrix> rhs;
  b.visit([&](const std::string&, Matrix& m) { rhs.push_back(m); });
  bool same = true;
  std::size_t i = 0;
  a.visit([&](const std::string&, Matrix& m) { same = same && i < rhs.size() && m == rhs[i++]; });
  return same && i == rhs.size();
}

}  // namespace

TEST_CASE("seed mixing") {
  CHECK(mix_seed({1, 2, 3}) == mix_seed({1, 2, 3}));
  CHECK(mix_seed({1, 2, 3}) != mix_seed({1, 3, 2}));
  CHECK(mix_seed({0}) != mix_seed({0, 0}));
}

TEST_CASE("config JSON round trip and validation") {
  TrainConfig c = tiny(4);
  c.loss_mode = LossMode::kBceAllItems;
  c.discretization = Discretization::kPaper;
  c.filter_mode = FilterMode::kDense;
  c.ks = {1, 10};
  c.target_metric = "hr@1";
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());

  const TrainConfig partial = TrainConfig::from_json({{"d", 32}}, c);
  CHECK(partial.d == 32);
  CHECK(partial.d_state == c.d_state);
  CHECK_THROWS_AS(TrainConfig::from_json({{"no_such_key", 1}}), ParameterError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"d", "wide"}}), ParameterError);

  TrainConfig bad = tiny(1);
  bad.theta = 0.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = tiny(1);
  bad.early_stop_metric = "ndcg@7";
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = tiny(1);
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("ablation variants") {
  const TrainConfig base = tiny(1);
  CHECK(apply_variant(base, "w/o GM").fusion == Fusion::kTemporalOnly);
  CHECK(apply_variant(base, "rp Con").fusion == Fusion::kConcat);
  CHECK(apply_variant(base, "w/o Ada").theta == 1.0);
  CHECK(!apply_variant(base, "w/o AFFT").spectral_filter);
  CHECK(apply_variant(base, "full").to_json().dump() ==
        [&] {
          TrainConfig c = base;
          c.variant = "full";
          return c.to_json().dump();
        }());
  CHECK_THROWS_AS(apply_variant(base, "w/o everything"), ParameterError);
}

TEST_CASE("zero epochs leaves the initial model") {
  const auto split = synthetic_split(1);
  Trainer t(tiny(5), split);
  const Params init = t.model().params();
  t.run(0);
  CHECK(t.epoch() == 0);
  REQUIRE(t.history().size() == 1);
  CHECK(!t.history()[0].train_loss.has_value());
  CHECK(same_params(t.model().params(), init));
  CHECK(same_params(t.best_model().params(), init));
  CHECK(t.history()[0].valid == t.evaluate(split->valid()).to_json());

  Trainer fresh(tiny(5), split);
  CHECK(same_params(fresh.model().params(), init));
  Trainer other(tiny(6), split);
  CHECK(!same_params(other.model().params(), init));
}

TEST_CASE("training is deterministic and independent of the thread count") {
  const auto split = synthetic_split(2);
  Trainer a(tiny(7), split);
  Trainer b(tiny(7), split);
  TrainConfig threaded = tiny(7);
  threaded.threads = 3;
  Trainer c(threaded, split);
  a.run(2);
  b.run(2);
  c.run(2);
  CHECK(same_params(a.model().params(), b.model().params()));
  CHECK(same_params(a.model().params(), c.model().params()));
  CHECK(a.history_json() == b.history_json());
}

TEST_CASE("resume continues exactly") {
  const auto split = synthetic_split(3);
  const auto path = std::filesystem::temp_directory_path() / "m2rec_test_resume.ckpt";

  Trainer straight(tiny(8), split);
  straight.run(3);

  Trainer first(tiny(8), split);
  first.run(2);
  write_checkpoint(path, first.checkpoint(false));

  SUBCASE("zero further epochs reproduces the metrics") {
    Trainer resumed = Trainer::resume(read_checkpoint(path), split);
    resumed.run(0);
    CHECK(resumed.epoch() == 2);
    CHECK(resumed.evaluate(split->test()).to_json() == first.evaluate(split->test()).to_json());
    CHECK(same_params(resumed.model().params(), first.model().params()));
  }
  SUBCASE("one more epoch matches an uninterrupted run") {
    Trainer resumed = Trainer::resume(read_checkpoint(path), split);
    resumed.run(1);
    CHECK(resumed.epoch() == 3);
    CHECK(same_params(resumed.model().params(), straight.model().params()));
    CHECK(resumed.history_json() == straight.history_json());
  }
  SUBCASE("the stored model loads on its own") {
    const Model m = load_model(read_checkpoint(path));
    CHECK(same_params(m.params(), first.model().params()));
    CHECK(rank_and_score(m, *split, split->test(), EvalOptions{}).to_json() ==
          first.evaluate(split->test()).to_json());
  }
  SUBCASE("a different catalogue is rejected") {
    SyntheticOptions o;
    o.num_items = 9;
    o.num_users = 10;
    o.length = 20;
    auto other = std::make_shared<const Split>(
        std::make_shared<const InteractionDataset>(generate_synthetic(o)), 10);
    CHECK_THROWS_AS(Trainer::resume(read_checkpoint(path), other), ContractError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("training loss falls over ten epochs") {
  std::size_t falling = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto split = synthetic_split(10 + seed, 0.0);
    TrainConfig c = tiny(seed);
    c.patience = 0;
    Trainer t(c, split);
    t.run(10);
    REQUIRE(t.history().size() == 11);
    falling += *t.history()[10].train_loss < *t.history()[1].train_loss;
  }
  CHECK(falling >= 2);
}

TEST_CASE("early stopping and target metric") {
  const auto split = synthetic_split(4, 0.0);
  TrainConfig c = tiny(2);
  c.target_metric = "hr@20";
  c.target_value = 0.0;  // met by the initial evaluation
  Trainer t(c, split);
  t.run(5);
  CHECK(t.epoch() == 0);
  CHECK(t.stop_reason().find("target") != std::string::npos);

  TrainConfig p = tiny(2);
  p.patience = 1;
  p.lr = 1e-9;  // nothing improves
  Trainer s(p, split);
  s.run(5);
  CHECK(s.epoch() < 5);
  CHECK(s.stop_reason() == "early stopping");
}

TEST_CASE("trainer preconditions") {
  const auto split = synthetic_split(1);
  TrainConfig c = tiny(1);
  c.max_len = 11;
  CHECK_THROWS_AS(Trainer(c, split), ContractError);
}
