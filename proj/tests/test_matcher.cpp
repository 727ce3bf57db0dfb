#include <cmath>

#include "comatch/gradcheck.hpp"
#include "comatch/matcher.hpp"
#include "comatch/rng.hpp"
#include "doctest.h"

using namespace comatch;

namespace {

EncoderConfig tiny_encoder(std::size_t vocab = 16) {
  EncoderConfig cfg;
  cfg.num_layers = 2;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.num_heads = 2;
  cfg.replacement_schedule = {0.5, 0.5};
  cfg.max_seq_len = 24;
  cfg.vocab_size = vocab;
  return cfg;
}

MatcherModel tiny_model(EncodingMode mode, bool symmetric = false, std::uint64_t seed = 5) {
  MatcherConfig mcfg;
  mcfg.encoding = mode;
  mcfg.symmetric_features = symmetric;
  Rng rng(seed);
  return init_matcher(tiny_encoder(), mcfg, rng);
}

}  // namespace

TEST_CASE("classify produces num_classes logits and rejects empty input") {
  MatcherModel model = tiny_model(EncodingMode::Cross);
  PairExample ex{{4, 5, 6}, {7, 8}, 1, "none"};
  CHECK(classify(model, ex).size() == 2);

  PairExample empty_q{{}, {4}, 0, "none"};
  CHECK_THROWS_AS(classify(model, empty_q), ValueError);
  PairExample empty_p{{4}, {}, 0, "none"};
  CHECK_THROWS_AS(classify(model, empty_p), ValueError);
}

TEST_CASE("identical pair in siamese mode aligns to itself") {
  MatcherModel model = tiny_model(EncodingMode::Siamese);
  const std::vector<std::size_t> toks{4, 9, 6, 11};
  Graph g;
  MatcherParams bound = bind_params(g, model.params);
  std::vector<std::size_t> ids{kClsToken};
  ids.insert(ids.end(), toks.begin(), toks.end());
  Tensor hq = encode(g, bound.encoder, model.encoder_cfg, ids, {}, {});
  Tensor hp = encode(g, bound.encoder, model.encoder_cfg, ids, {}, {});
  AttendResult res = attend(g, hq, hp, bound.attend_proj, model.encoder_cfg.attention);
  // shared encoder + shared projections + identical inputs: the |a-b|
  // feature block vanishes exactly
  for (std::size_t i = 0; i < res.a_hat.size(); ++i)
    CHECK(res.a_hat.at(i) == res.b_hat.at(i));
}

TEST_CASE("symmetrized siamese features make the pair order invisible") {
  MatcherModel model = tiny_model(EncodingMode::Siamese, /*symmetric=*/true);
  PairExample ex{{4, 5, 6}, {7, 8, 9, 10}, 0, "none"};
  PairExample flipped{ex.tokens_p, ex.tokens_q, 0, "none"};
  const std::vector<double> qp = classify(model, ex);
  const std::vector<double> pq = classify(model, flipped);
  REQUIRE(qp.size() == pq.size());
  for (std::size_t i = 0; i < qp.size(); ++i) CHECK(qp[i] == pq[i]);
}

TEST_CASE("pair loss gradients pass the finite-difference oracle") {
  for (EncodingMode mode : {EncodingMode::Cross, EncodingMode::Siamese}) {
    MatcherModel model = tiny_model(mode, false, 11);
    PairExample ex{{4, 5, 6}, {7, 8, 9}, 1, "none"};

    NamedParams named;
    visit_params(model, [&](const std::string& name, Tensor& t) { named.emplace_back(name, &t); });
    auto f = [&](Graph& g, const std::vector<Tensor>& leaves) {
      MatcherParams bound = model.params;
      std::size_t i = 0;
      visit_params(bound, "model", [&](const std::string&, Tensor& t) { t = leaves[i++]; });
      Tensor logits = pair_logits(g, bound, model.encoder_cfg, model.matcher_cfg, ex);
      return g.cross_entropy(logits, ex.label);
    };
    GradCheckReport rep = finite_diff_check(f, named);
    CHECK(rep.coords_checked > 400);
    CHECK(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("classification is deterministic") {
  MatcherModel model = tiny_model(EncodingMode::Cross);
  PairExample ex{{4, 5, 6, 7}, {8, 9}, 1, "swap_num"};
  const std::vector<double> a = classify(model, ex);
  const std::vector<double> b = classify(model, ex);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("metrics from predictions") {
  std::vector<PairExample> data{
      {{4}, {5}, 1, "none"},    {{4}, {6}, 0, "swap_num"}, {{4}, {7}, 1, "none"},
      {{5}, {6}, 0, "swap_ant"}, {{5}, {7}, 1, "overlap_high"},
  };

  SUBCASE("all correct") {
    Metrics m = evaluate_predictions(data, {1, 0, 1, 0, 1}, 2);
    CHECK(m.accuracy() == 1.0);
    CHECK(m.confusion[0][0] == 2);
    CHECK(m.confusion[1][1] == 3);
  }

  SUBCASE("single-class predictor on a balanced set is at chance") {
    std::vector<PairExample> balanced{
        {{4}, {5}, 1, "none"}, {{4}, {6}, 0, "none"}, {{5}, {6}, 1, "none"}, {{5}, {7}, 0, "none"}};
    Metrics m = evaluate_predictions(balanced, {1, 1, 1, 1}, 2);
    CHECK(m.accuracy() == 0.5);
  }

  SUBCASE("per-tag counts recombine exactly to the overall tally") {
    Metrics m = evaluate_predictions(data, {1, 1, 1, 0, 0}, 2);
    std::size_t correct = 0, total = 0;
    for (const auto& [tag, stats] : m.per_tag) {
      correct += stats.correct;
      total += stats.total;
    }
    CHECK(correct == m.correct);
    CHECK(total == m.total);
  }

  SUBCASE("empty dataset is a domain error") {
    CHECK_THROWS_AS(evaluate_predictions({}, {}, 2), ValueError);
  }

  SUBCASE("out-of-range labels are rejected") {
    std::vector<PairExample> bad{{{4}, {5}, 2, "none"}};
    CHECK_THROWS_AS(evaluate_predictions(bad, {0}, 2), ValueError);
  }
}

TEST_CASE("matcher config validation") {
  MatcherConfig cfg;
  cfg.num_classes = 4;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg.num_classes = 3;
  CHECK_NOTHROW(cfg.validate());
  cfg.symmetric_features = true;  // requires siamese
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg.encoding = EncodingMode::Siamese;
  CHECK_NOTHROW(cfg.validate());
}
