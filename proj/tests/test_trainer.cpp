#include <cmath>

#include "comatch/synthetic.hpp"
#include "comatch/trainer.hpp"
#include "doctest.h"

using namespace comatch;

namespace {

SyntheticSpec toy_spec(std::size_t n, std::uint64_t seed = 7) {
  SyntheticSpec spec;
  spec.content_words = 10;
  spec.number_words = 5;
  spec.antonym_pairs = 3;
  spec.filler_words = 5;
  spec.min_len = 4;
  spec.max_len = 6;
  spec.num_examples = n;
  spec.seed = seed;
  return spec;
}

MatcherModel toy_model(const SyntheticSpec& spec, std::uint64_t seed = 1,
                       std::size_t d_model = 8) {
  EncoderConfig ecfg;
  ecfg.num_layers = 1;
  ecfg.d_model = d_model;
  ecfg.d_ff = 2 * d_model;
  ecfg.num_heads = 2;
  ecfg.replacement_schedule = {0.5};
  ecfg.max_seq_len = 2 * spec.max_len + 3;
  ecfg.vocab_size = spec.vocab_size();
  MatcherConfig mcfg;
  Rng rng(seed);
  return init_matcher(ecfg, mcfg, rng);
}

std::vector<Tensor> param_copy(MatcherModel& model) {
  std::vector<Tensor> out;
  visit_params(model, [&](const std::string&, Tensor& t) { out.push_back(t.detached_copy()); });
  return out;
}

double batch_loss(MatcherModel& model, const std::vector<PairExample>& batch) {
  double sum = 0.0;
  for (const PairExample& ex : batch) {
    Graph g;
    MatcherParams bound = bind_params(g, model.params);
    sum += g.cross_entropy(pair_logits(g, bound, model.encoder_cfg, model.matcher_cfg, ex),
                           ex.label)
               .item();
  }
  return sum / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters untouched") {
  SyntheticSpec spec = toy_spec(8);
  auto data = generate(spec);
  MatcherModel model = toy_model(spec);
  const std::vector<Tensor> before = param_copy(model);

  Adam opt(0.0, 0.9, 0.999, 1e-8);
  for (int step = 1; step <= 3; ++step) train_on_batch(model, data, opt, 1.0, step);

  std::size_t i = 0;
  bool all_equal = true;
  visit_params(model, [&](const std::string&, Tensor& t) {
    for (std::size_t k = 0; k < t.size(); ++k)
      if (t.at(k) != before[i].at(k)) all_equal = false;
    ++i;
  });
  CHECK(all_equal);
}

TEST_CASE("loss strictly decreases over the first five steps on a fixed batch") {
  SyntheticSpec spec = toy_spec(16);
  auto batch = generate(spec);
  MatcherModel model = toy_model(spec);
  Adam opt(1e-3, 0.9, 0.999, 1e-8);
  double prev = train_on_batch(model, batch, opt, 1.0, 1);
  for (int step = 2; step <= 5; ++step) {
    const double loss = train_on_batch(model, batch, opt, 1.0, step);
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("a single example is memorized") {
  SyntheticSpec spec = toy_spec(1);
  auto data = generate(spec);
  MatcherModel model = toy_model(spec, 1, 16);
  Adam opt(1e-3, 0.9, 0.999, 1e-8);
  double loss = batch_loss(model, data);
  for (int step = 1; step <= 200; ++step) loss = train_on_batch(model, data, opt, 1.0, step);
  CHECK(batch_loss(model, data) < 0.01);
}

TEST_CASE("a tiny Adam step never hurts the batch it was computed on") {
  SyntheticSpec spec = toy_spec(6);
  auto batch = generate(spec);
  for (std::uint64_t init = 0; init < 20; ++init) {
    MatcherModel model = toy_model(spec, 100 + init, 4);
    const double before = batch_loss(model, batch);
    Adam opt(1e-5, 0.9, 0.999, 1e-8);
    train_on_batch(model, batch, opt, 1.0, 1);
    const double after = batch_loss(model, batch);
    CHECK(after <= before + 1e-10);
  }
}

TEST_CASE("seeded training runs produce identical loss curves") {
  SyntheticSpec spec = toy_spec(24);
  auto data = generate(spec);
  std::vector<PairExample> train_set(data.begin(), data.begin() + 18);
  std::vector<PairExample> dev_set(data.begin() + 18, data.end());

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 6;
  cfg.seed = 9;

  MatcherModel m1 = toy_model(spec, 2);
  MatcherModel m2 = toy_model(spec, 2);
  TrainReport r1 = train(m1, train_set, dev_set, cfg);
  TrainReport r2 = train(m2, train_set, dev_set, cfg);
  REQUIRE(r1.step_loss.size() == r2.step_loss.size());
  for (std::size_t i = 0; i < r1.step_loss.size(); ++i) CHECK(r1.step_loss[i] == r2.step_loss[i]);
  CHECK(r1.dev_accuracy == r2.dev_accuracy);
  CHECK(r1.best_epoch == r2.best_epoch);
}

TEST_CASE("divergence is reported with the offending step") {
  SyntheticSpec spec = toy_spec(4);
  auto data = generate(spec);
  MatcherModel model = toy_model(spec);
  model.params.head.w.at(0) = std::numeric_limits<double>::quiet_NaN();
  Adam opt(1e-3, 0.9, 0.999, 1e-8);
  CHECK_THROWS_WITH_AS(train_on_batch(model, data, opt, 1.0, 7),
                       "training diverged at step 7: loss is not finite", DivergenceError);
}

TEST_CASE("dataset split is deterministic and disjoint") {
  SyntheticSpec spec = toy_spec(50);
  auto data = generate(spec);
  std::vector<PairExample> train_a, dev_a, train_b, dev_b;
  split_dataset(data, 0.2, 11, train_a, dev_a);
  split_dataset(data, 0.2, 11, train_b, dev_b);
  CHECK(train_a.size() == 40);
  CHECK(dev_a.size() == 10);
  REQUIRE(train_a.size() == train_b.size());
  for (std::size_t i = 0; i < train_a.size(); ++i)
    CHECK(train_a[i].tokens_q == train_b[i].tokens_q);
}

TEST_CASE("ablation variant list is exactly the grid plus baseline") {
  AttentionConfig base;
  auto variants = ablation_variants(base);
  REQUIRE(variants.size() == 9);
  std::vector<std::string> names;
  for (const auto& v : variants) names.push_back(composition_label(v));
  const std::vector<std::string> expected{
      "tanh_sigmoid",    "tanh_sigmoid_center_e", "tanh_sigmoid_center_n",
      "tanh_tanh",       "tanh_arctan",           "sigmoid_tanh",
      "sigmoid_arctan",  "sigmoid_sigmoid",       "softmax_baseline",
  };
  CHECK(names == expected);
}

TEST_CASE("ablation trains every variant on identical shards") {
  SyntheticSpec spec = toy_spec(30, 19);
  auto data = generate(spec);
  std::vector<PairExample> train_set(data.begin(), data.begin() + 20);
  std::vector<PairExample> dev_set(data.begin() + 20, data.begin() + 25);
  std::vector<PairExample> test_set(data.begin() + 25, data.end());

  MatcherModel proto = toy_model(spec);
  TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.batch_size = 10;
  AblationResult result =
      run_ablation(proto.encoder_cfg, proto.matcher_cfg, tcfg, train_set, dev_set, test_set);
  REQUIRE(result.rows.size() == 9);
  CHECK(result.rows.front().name == "tanh_sigmoid");
  CHECK(result.rows.back().name == "softmax_baseline");
  for (const auto& row : result.rows) {
    CHECK(row.dev_accuracy >= 0.0);
    CHECK(row.test_accuracy >= 0.0);
    CHECK(row.dev_accuracy <= 1.0);
    CHECK(row.test_accuracy <= 1.0);
  }
}
