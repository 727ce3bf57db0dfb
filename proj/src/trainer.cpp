#include "comatch/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "comatch/rng.hpp"

namespace comatch {

namespace {

std::vector<Tensor*> collect_params(MatcherModel& model) {
  std::vector<Tensor*> out;
  visit_params(model, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<Tensor> snapshot(MatcherModel& model) {
  std::vector<Tensor> copy;
  visit_params(model, [&](const std::string&, Tensor& t) { copy.push_back(t.detached_copy()); });
  return copy;
}

void restore(MatcherModel& model, const std::vector<Tensor>& saved) {
  std::size_t i = 0;
  visit_params(model, [&](const std::string&, Tensor& t) { t = saved[i++].detached_copy(); });
}

}  // namespace

void TrainConfig::validate() const {
  if (lr < 0.0) throw ValueError("training: lr must be nonnegative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ValueError("training: beta1/beta2 must lie in [0,1)");
  }
  if (epsilon <= 0.0) throw ValueError("training: epsilon must be positive");
  if (batch_size == 0) throw ValueError("training: batch_size must be positive");
  if (epochs == 0) throw ValueError("training: epochs must be positive");
  if (dev_fraction < 0.0 || dev_fraction >= 1.0) {
    throw ValueError("training: dev_fraction must lie in [0,1)");
  }
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) throw ValueError("adam: param/grad count mismatch");
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      m_[p].assign(params[p]->size(), 0.0);
      v_[p].assign(params[p]->size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    const Tensor& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.at(i);
      m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * gi;
      v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m_[p][i] / bc1;
      const double vhat = v_[p][i] / bc2;
      w.at(i) -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
    }
  }
}

double train_on_batch(MatcherModel& model, const std::vector<PairExample>& batch, Adam& opt,
                      double clip_norm, std::size_t step_index) {
  if (batch.empty()) throw ValueError("train: empty batch");
  std::vector<Tensor*> params = collect_params(model);
  std::vector<Tensor> grad_acc;
  grad_acc.reserve(params.size());
  for (Tensor* p : params) grad_acc.push_back(Tensor::zeros(p->shape));

  double loss_sum = 0.0;
  for (const PairExample& ex : batch) {
    Graph g;
    MatcherParams bound = bind_params(g, model.params);
    Tensor logits = pair_logits(g, bound, model.encoder_cfg, model.matcher_cfg, ex);
    Tensor loss = g.cross_entropy(logits, ex.label);
    loss_sum += loss.item();
    g.backward(loss);
    std::size_t i = 0;
    visit_params(bound, "model", [&](const std::string&, Tensor& leaf) {
      Tensor grad = g.gradient(leaf);
      for (std::size_t k = 0; k < grad.size(); ++k) grad_acc[i].at(k) += grad.at(k);
      ++i;
    });
  }

  const double mean_loss = loss_sum / static_cast<double>(batch.size());
  if (!std::isfinite(mean_loss)) {
    throw DivergenceError("training diverged at step " + std::to_string(step_index) +
                          ": loss is not finite");
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  double norm_sq = 0.0;
  for (Tensor& gacc : grad_acc) {
    for (std::size_t k = 0; k < gacc.size(); ++k) {
      gacc.at(k) *= inv;
      norm_sq += gacc.at(k) * gacc.at(k);
    }
  }
  if (clip_norm > 0.0) {
    const double norm = std::sqrt(norm_sq);
    if (norm > clip_norm) {
      const double shrink = clip_norm / norm;
      for (Tensor& gacc : grad_acc)
        for (std::size_t k = 0; k < gacc.size(); ++k) gacc.at(k) *= shrink;
    }
  }
  opt.step(params, grad_acc);
  return mean_loss;
}

TrainReport train(MatcherModel& model, const std::vector<PairExample>& train_set,
                  const std::vector<PairExample>& dev_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || dev_set.empty()) {
    throw ValueError("train: train and dev splits must be non-empty");
  }

  Adam opt(cfg);
  Rng rng(cfg.seed);
  TrainReport report;
  std::vector<Tensor> best = snapshot(model);
  report.best_dev_accuracy = -1.0;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<PairExample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
      const double loss = train_on_batch(model, batch, opt, cfg.clip_norm, ++step);
      report.step_loss.push_back(loss);
      epoch_loss += loss;
      ++batches;
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));

    const double dev_acc = evaluate(model, dev_set).accuracy();
    report.dev_accuracy.push_back(dev_acc);
    if (dev_acc > report.best_dev_accuracy) {
      report.best_dev_accuracy = dev_acc;
      report.best_epoch = epoch;
      best = snapshot(model);
    }
  }
  report.steps = step;
  restore(model, best);
  return report;
}

void split_dataset(const std::vector<PairExample>& all, double dev_fraction, std::uint64_t seed,
                   std::vector<PairExample>& train_out, std::vector<PairExample>& dev_out) {
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed ^ 0x51177ee5ULL);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  const std::size_t n_dev = static_cast<std::size_t>(dev_fraction * static_cast<double>(all.size()));
  train_out.clear();
  dev_out.clear();
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < n_dev) {
      dev_out.push_back(all[order[i]]);
    } else {
      train_out.push_back(all[order[i]]);
    }
  }
}

std::vector<AttentionConfig> ablation_variants(const AttentionConfig& base) {
  auto make = [&](Squash fe, Squash fn, NormVariant v) {
    AttentionConfig c = base;
    c.mode = AttentionMode::Combined;
    c.f_e = fe;
    c.f_n = fn;
    c.variant = v;
    return c;
  };
  std::vector<AttentionConfig> variants{
      make(Squash::Tanh, Squash::Sigmoid, NormVariant::None),
      make(Squash::Tanh, Squash::Sigmoid, NormVariant::CenterE),
      make(Squash::Tanh, Squash::Sigmoid, NormVariant::CenterN),
      make(Squash::Tanh, Squash::Tanh, NormVariant::None),
      make(Squash::Tanh, Squash::Arctan, NormVariant::None),
      make(Squash::Sigmoid, Squash::Tanh, NormVariant::None),
      make(Squash::Sigmoid, Squash::Arctan, NormVariant::None),
      make(Squash::Sigmoid, Squash::Sigmoid, NormVariant::None),
  };
  AttentionConfig baseline = base;
  baseline.mode = AttentionMode::SoftmaxBaseline;
  baseline.f_e = Squash::Tanh;
  baseline.f_n = Squash::Sigmoid;
  baseline.variant = NormVariant::None;
  variants.push_back(baseline);
  return variants;
}

AblationResult run_ablation(const EncoderConfig& ecfg, const MatcherConfig& mcfg,
                            const TrainConfig& tcfg, const std::vector<PairExample>& train_set,
                            const std::vector<PairExample>& dev_set,
                            const std::vector<PairExample>& test_set) {
  AblationResult result;
  for (const AttentionConfig& attn : ablation_variants(ecfg.attention)) {
    EncoderConfig variant_cfg = ecfg;
    variant_cfg.attention = attn;
    Rng init_rng(tcfg.seed);
    MatcherModel model = init_matcher(variant_cfg, mcfg, init_rng);
    TrainReport report = train(model, train_set, dev_set, tcfg);
    AblationRow row;
    row.name = composition_label(attn);
    row.dev_accuracy = report.best_dev_accuracy;
    row.test_accuracy = evaluate(model, test_set).accuracy();
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace comatch
