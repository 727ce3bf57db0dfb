#include "comatch/matcher.hpp"

#include <cmath>

namespace comatch {

namespace {

Tensor mean_rows_weights(std::size_t n) {
  return Tensor::full({1, n}, 1.0 / static_cast<double>(n));
}

Tensor select_row_weights(std::size_t n, std::size_t row) {
  Tensor w = Tensor::zeros({1, n});
  w.at(0, row) = 1.0;
  return w;
}

Tensor pool_rows(Graph& g, const Tensor& x, Pooling pooling) {
  const std::size_t n = x.rows();
  return g.matmul(pooling == Pooling::Cls ? select_row_weights(n, 0) : mean_rows_weights(n), x);
}

}  // namespace

std::string encoding_name(EncodingMode m) { return m == EncodingMode::Cross ? "cross" : "siamese"; }

EncodingMode encoding_from(const std::string& name) {
  if (name == "cross") return EncodingMode::Cross;
  if (name == "siamese") return EncodingMode::Siamese;
  throw ValueError("unknown encoding mode '" + name + "' (cross, siamese)");
}

std::string pooling_name(Pooling p) { return p == Pooling::Cls ? "cls" : "mean"; }

Pooling pooling_from(const std::string& name) {
  if (name == "cls") return Pooling::Cls;
  if (name == "mean") return Pooling::Mean;
  throw ValueError("unknown pooling '" + name + "' (cls, mean)");
}

void MatcherConfig::validate() const {
  if (num_classes != 2 && num_classes != 3) {
    throw ValueError("matcher: num_classes must be 2 or 3, got " + std::to_string(num_classes));
  }
  if (symmetric_features && encoding != EncodingMode::Siamese) {
    throw ValueError("matcher: symmetric_features requires siamese encoding");
  }
}

MatcherModel init_matcher(const EncoderConfig& ecfg, const MatcherConfig& mcfg, Rng& rng) {
  ecfg.validate();
  mcfg.validate();
  MatcherModel model;
  model.encoder_cfg = ecfg;
  model.matcher_cfg = mcfg;
  model.params.encoder = init_encoder(ecfg, rng);

  const std::size_t d = ecfg.d_model;
  if (mcfg.encoding == EncodingMode::Siamese) {
    auto wide = [&](Tensor& t) {
      t = Tensor::zeros({d, d});
      const double sd = std::sqrt(1.0 / static_cast<double>(d));
      for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal(0.0, sd);
    };
    wide(model.params.attend_proj.w_e);
    model.params.attend_proj.shared = ecfg.attention.share_projections;
    if (!model.params.attend_proj.shared) wide(model.params.attend_proj.w_n);
  }

  const std::size_t feature_width =
      mcfg.encoding == EncodingMode::Cross ? d : (mcfg.symmetric_features ? 3 * d : 4 * d);
  const double sd = std::sqrt(2.0 / static_cast<double>(feature_width + mcfg.num_classes));
  model.params.head.w = Tensor::zeros({feature_width, mcfg.num_classes});
  for (std::size_t i = 0; i < model.params.head.w.size(); ++i)
    model.params.head.w.at(i) = rng.normal(0.0, sd);
  model.params.head.b = Tensor::zeros({mcfg.num_classes});
  return model;
}

void visit_params(MatcherParams& params, const std::string& prefix, const ParamVisitor& fn) {
  visit_params(params.encoder, prefix + ".encoder", fn);
  if (params.attend_proj.w_e.size() > 0) fn(prefix + ".attend.w_e", params.attend_proj.w_e);
  if (params.attend_proj.w_n.size() > 0) fn(prefix + ".attend.w_n", params.attend_proj.w_n);
  visit_params(params.head, prefix + ".head", fn);
}

void visit_params(MatcherModel& model, const ParamVisitor& fn) {
  visit_params(model.params, "model", fn);
}

MatcherParams bind_params(Graph& g, const MatcherParams& params) {
  MatcherParams bound = params;
  visit_params(bound, "model", [&g](const std::string&, Tensor& t) { t = g.input(t); });
  return bound;
}

Tensor pair_logits(Graph& g, const MatcherParams& params, const EncoderConfig& ecfg,
                   const MatcherConfig& mcfg, const PairExample& ex, PairTraces* traces) {
  if (ex.tokens_q.empty() || ex.tokens_p.empty()) {
    throw ValueError("classify: both sequences must be non-empty");
  }

  if (mcfg.encoding == EncodingMode::Cross) {
    // [CLS] q [SEP] p [SEP], segment 0 over the q half, 1 over the p half.
    std::vector<std::size_t> ids;
    std::vector<std::size_t> segs;
    ids.push_back(kClsToken);
    segs.push_back(0);
    for (std::size_t t : ex.tokens_q) {
      ids.push_back(t);
      segs.push_back(0);
    }
    ids.push_back(kSepToken);
    segs.push_back(0);
    const std::size_t p_start = ids.size();
    for (std::size_t t : ex.tokens_p) {
      ids.push_back(t);
      segs.push_back(1);
    }
    ids.push_back(kSepToken);
    segs.push_back(1);

    if (traces) {
      for (std::size_t i = 0; i < ex.tokens_q.size(); ++i) traces->q_positions.push_back(1 + i);
      for (std::size_t i = 0; i < ex.tokens_p.size(); ++i)
        traces->p_positions.push_back(p_start + i);
    }
    Tensor h = encode(g, params.encoder, ecfg, ids, segs, {}, traces ? &traces->encoder : nullptr);
    return apply_linear(g, pool_rows(g, h, mcfg.pooling), params.head);
  }

  // Siamese: encode each side with shared weights, align through the
  // standalone cross-attention, then pool both aligned sequences.
  auto with_cls = [](const std::vector<std::size_t>& toks) {
    std::vector<std::size_t> ids{kClsToken};
    ids.insert(ids.end(), toks.begin(), toks.end());
    return ids;
  };
  const std::vector<std::size_t> q_ids = with_cls(ex.tokens_q);
  const std::vector<std::size_t> p_ids = with_cls(ex.tokens_p);
  if (traces) {
    for (std::size_t i = 0; i < ex.tokens_q.size(); ++i) traces->q_positions.push_back(1 + i);
    for (std::size_t i = 0; i < ex.tokens_p.size(); ++i) traces->p_positions.push_back(1 + i);
  }
  Tensor hq = encode(g, params.encoder, ecfg, q_ids, {}, {}, traces ? &traces->encoder : nullptr);
  Tensor hp = encode(g, params.encoder, ecfg, p_ids, {}, {});
  AttendResult aligned =
      attend(g, hq, hp, params.attend_proj, ecfg.attention, traces != nullptr);
  if (traces) traces->attend = aligned.trace;

  Tensor a_pool = pool_rows(g, aligned.a_hat, mcfg.pooling);
  Tensor b_pool = pool_rows(g, aligned.b_hat, mcfg.pooling);
  Tensor diff = g.abs(g.sub(a_pool, b_pool));
  Tensor prod = g.mul(a_pool, b_pool);
  Tensor features = mcfg.symmetric_features
                        ? g.concat_cols({g.add(a_pool, b_pool), diff, prod})
                        : g.concat_cols({a_pool, b_pool, diff, prod});
  return apply_linear(g, features, params.head);
}

std::vector<double> classify(const MatcherModel& model, const PairExample& ex,
                             PairTraces* traces) {
  Graph g;
  Tensor logits =
      pair_logits(g, model.params, model.encoder_cfg, model.matcher_cfg, ex, traces);
  return logits.values();
}

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

Metrics evaluate_predictions(const std::vector<PairExample>& dataset,
                             const std::vector<std::size_t>& predictions,
                             std::size_t num_classes) {
  if (dataset.empty()) throw ValueError("evaluate: empty dataset");
  if (dataset.size() != predictions.size()) {
    throw ValueError("evaluate: prediction count does not match dataset size");
  }
  Metrics m;
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const PairExample& ex = dataset[i];
    if (ex.label >= num_classes) {
      throw ValueError("evaluate: label " + std::to_string(ex.label) + " out of range");
    }
    const std::size_t pred = predictions[i];
    ++m.total;
    ++m.per_tag[ex.tag].total;
    if (pred < num_classes) ++m.confusion[ex.label][pred];
    if (pred == ex.label) {
      ++m.correct;
      ++m.per_tag[ex.tag].correct;
    }
  }
  return m;
}

Metrics evaluate(const MatcherModel& model, const std::vector<PairExample>& dataset) {
  if (dataset.empty()) throw ValueError("evaluate: empty dataset");
  std::vector<std::size_t> preds;
  preds.reserve(dataset.size());
  for (const PairExample& ex : dataset) preds.push_back(argmax(classify(model, ex)));
  return evaluate_predictions(dataset, preds, model.matcher_cfg.num_classes);
}

}  // namespace comatch
