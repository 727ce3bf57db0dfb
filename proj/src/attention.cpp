#include "comatch/attention.hpp"

#include <cmath>

namespace comatch {

namespace {

constexpr double kMaskedScore = -1e9;

Tensor column_mask_matrix(std::size_t m, const std::vector<double>& mask) {
  Tensor mm = Tensor::zeros({m, mask.size()});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < mask.size(); ++j) mm.at(i, j) = mask[j] != 0.0 ? 1.0 : 0.0;
  return mm;
}

Tensor outer_valid_matrix(const std::vector<double>& mask) {
  Tensor mm = Tensor::zeros({mask.size(), mask.size()});
  for (std::size_t i = 0; i < mask.size(); ++i)
    for (std::size_t j = 0; j < mask.size(); ++j)
      mm.at(i, j) = (mask[i] != 0.0 && mask[j] != 0.0) ? 1.0 : 0.0;
  return mm;
}

void check_mask(const std::vector<double>& mask, std::size_t n, const char* who) {
  if (!mask.empty() && mask.size() != n) {
    throw ShapeError(std::string(who) + ": mask length " + std::to_string(mask.size()) +
                     " does not match sequence length " + std::to_string(n));
  }
}

Tensor apply_squash(Graph& g, Squash s, const Tensor& x) {
  switch (s) {
    case Squash::Tanh: return g.tanh(x);
    case Squash::Sigmoid: return g.sigmoid(x);
    case Squash::Arctan: return g.arctan(x);
  }
  throw ValueError("unknown squash");
}

}  // namespace

std::string squash_name(Squash s) {
  switch (s) {
    case Squash::Tanh: return "tanh";
    case Squash::Sigmoid: return "sigmoid";
    case Squash::Arctan: return "arctan";
  }
  return "?";
}

Squash squash_from(const std::string& name) {
  if (name == "tanh") return Squash::Tanh;
  if (name == "sigmoid") return Squash::Sigmoid;
  if (name == "arctan") return Squash::Arctan;
  throw ValueError("unknown squash function '" + name + "' (tanh, sigmoid, arctan)");
}

std::string variant_name(NormVariant v) {
  switch (v) {
    case NormVariant::None: return "none";
    case NormVariant::CenterN: return "center_n";
    case NormVariant::CenterE: return "center_e";
    case NormVariant::TwoSigmoid: return "two_sigmoid";
  }
  return "?";
}

NormVariant variant_from(const std::string& name) {
  if (name == "none") return NormVariant::None;
  if (name == "center_n") return NormVariant::CenterN;
  if (name == "center_e") return NormVariant::CenterE;
  if (name == "two_sigmoid") return NormVariant::TwoSigmoid;
  throw ValueError("unknown normalization variant '" + name +
                   "' (none, center_n, center_e, two_sigmoid)");
}

std::string mode_name(AttentionMode m) {
  return m == AttentionMode::Combined ? "combined" : "softmax_baseline";
}

AttentionMode mode_from(const std::string& name) {
  if (name == "combined") return AttentionMode::Combined;
  if (name == "softmax_baseline") return AttentionMode::SoftmaxBaseline;
  throw ValueError("unknown attention mode '" + name + "' (combined, softmax_baseline)");
}

void AttentionConfig::validate() const {
  if (!(alpha > 0.0)) throw ValueError("attention: alpha must be positive");
  if (!(beta > 0.0)) throw ValueError("attention: beta must be positive");
  if (f_e == Squash::Arctan) throw ValueError("attention: f_e must be tanh or sigmoid");
  if (num_heads == 0) throw ValueError("attention: num_heads must be positive");
  if (d_model == 0 || d_k == 0) throw ValueError("attention: d_model and d_k must be positive");
  if (d_model != num_heads * d_k) {
    throw ValueError("attention: d_model (" + std::to_string(d_model) + ") != num_heads (" +
                     std::to_string(num_heads) + ") * d_k (" + std::to_string(d_k) + ")");
  }
}

std::string composition_label(const AttentionConfig& cfg) {
  if (cfg.mode == AttentionMode::SoftmaxBaseline) return "softmax_baseline";
  std::string label = squash_name(cfg.f_e) + "_" + squash_name(cfg.f_n);
  if (cfg.variant != NormVariant::None) label += "_" + variant_name(cfg.variant);
  return label;
}

Tensor apply_linear(Graph& g, const Tensor& x, const Linear& lin) {
  Tensor y = g.matmul(x, lin.w);
  if (lin.b.size() > 0) y = g.add_rowvec(y, lin.b);
  return y;
}

ProjectionSet identity_projections(std::size_t d) {
  ProjectionSet p;
  p.w_e = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i) p.w_e.at(i, i) = 1.0;
  p.shared = true;
  return p;
}

Tensor affinity_matrix(Graph& g, const Tensor& a, const Tensor& b, double alpha) {
  if (a.cols() != b.cols()) {
    throw ShapeError("affinity_matrix: widths disagree: " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  }
  return g.scale(g.matmul(a, g.transpose(b)), alpha);
}

Tensor difference_matrix(Graph& g, const Tensor& a, const Tensor& b, double beta) {
  if (a.cols() != b.cols()) {
    throw ShapeError("difference_matrix: widths disagree: " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  }
  return g.scale(g.pairwise_l1(a, b), -beta);
}

Tensor center_mean(Graph& g, const Tensor& x, const Tensor* valid) {
  if (valid == nullptr) return g.sub_scalar(x, g.mean_all(x));
  double count = 0.0;
  for (double v : valid->values()) count += v != 0.0 ? 1.0 : 0.0;
  if (count == 0.0) return x;  // fully masked; nothing meaningful to center
  Tensor masked = g.mul(x, *valid);
  Tensor mean_valid = g.scale(g.mean_all(masked), static_cast<double>(x.size()) / count);
  return g.sub_scalar(x, mean_valid);
}

Tensor normalize_difference(Graph& g, const Tensor& n, NormVariant variant, const Tensor* valid) {
  if (variant == NormVariant::CenterN) return center_mean(g, n, valid);
  return n;
}

Tensor compose(Graph& g, const Tensor& e, const Tensor& n, const AttentionConfig& cfg,
               const Tensor* valid) {
  if (e.shape != n.shape) {
    throw ShapeError("compose: shapes disagree: " + shape_str(e.shape) + " vs " +
                     shape_str(n.shape));
  }
  Tensor e2 = cfg.variant == NormVariant::CenterE ? center_mean(g, e, valid) : e;
  Tensor gate = apply_squash(g, cfg.f_n, n);
  if (cfg.variant == NormVariant::TwoSigmoid) gate = g.scale(gate, 2.0);
  return g.mul(apply_squash(g, cfg.f_e, e2), gate);
}

AttendResult attend(Graph& g, const Tensor& a, const Tensor& b, const ProjectionSet& proj,
                    const AttentionConfig& cfg, bool want_trace) {
  if (a.cols() != b.cols()) {
    throw ShapeError("attend: widths disagree: " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  }
  Tensor pe_a = g.matmul(a, proj.e());
  Tensor pe_b = g.matmul(b, proj.e());
  Tensor pn_a = g.matmul(a, proj.n());
  Tensor pn_b = g.matmul(b, proj.n());
  const double dk = static_cast<double>(proj.e().cols());
  Tensor e = affinity_matrix(g, pe_a, pe_b, cfg.alpha);
  // Raw L1 grows linearly with width, so the difference side is scaled by
  // 1/sqrt(d_k) with beta on top.
  Tensor n_raw = difference_matrix(g, pn_a, pn_b, cfg.beta / std::sqrt(dk));
  Tensor n_norm = normalize_difference(g, n_raw, cfg.variant);
  Tensor m = compose(g, e, n_norm, cfg);

  AttendResult result;
  result.a_hat = g.matmul(m, b);
  result.b_hat = g.matmul(g.transpose(m), a);
  if (want_trace) {
    result.trace = CombinedAttentionTrace{e.detached_copy(), n_raw.detached_copy(),
                                          n_norm.detached_copy(), m.detached_copy()};
  }
  return result;
}

Tensor combined_head_matrix(Graph& g, const Tensor& q, const Tensor& k,
                            const AttentionConfig& cfg, const std::vector<double>& mask,
                            CombinedAttentionTrace* trace) {
  check_mask(mask, k.rows(), "combined_head_matrix");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor e = affinity_matrix(g, q, k, cfg.alpha * inv_sqrt);
  Tensor n_raw = difference_matrix(g, q, k, cfg.beta * inv_sqrt);

  Tensor valid;
  const bool masked = !mask.empty();
  if (masked) valid = outer_valid_matrix(mask);
  Tensor n_norm = normalize_difference(g, n_raw, cfg.variant, masked ? &valid : nullptr);
  Tensor m = compose(g, e, n_norm, cfg, masked ? &valid : nullptr);
  if (masked) m = g.mul(m, column_mask_matrix(m.rows(), mask));
  if (trace != nullptr) {
    *trace = CombinedAttentionTrace{e.detached_copy(), n_raw.detached_copy(),
                                    n_norm.detached_copy(), m.detached_copy()};
  }
  return m;
}

Tensor softmax_head_matrix(Graph& g, const Tensor& q, const Tensor& k,
                           const std::vector<double>& mask) {
  check_mask(mask, k.rows(), "softmax_head_matrix");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor scores = g.scale(g.matmul(q, g.transpose(k)), inv_sqrt);
  if (!mask.empty()) {
    Tensor bias = Tensor::zeros({q.rows(), k.rows()});
    for (std::size_t i = 0; i < q.rows(); ++i)
      for (std::size_t j = 0; j < k.rows(); ++j)
        if (mask[j] == 0.0) bias.at(i, j) = kMaskedScore;
    scores = g.add(scores, bias);
  }
  return g.softmax_rows(scores);
}

Tensor mixed_attention_heads(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                             const MultiHeadProjections& proj, const AttentionConfig& cfg,
                             std::size_t n_combined, const std::vector<double>& mask,
                             HeadTraces* traces) {
  cfg.validate();
  check_mask(mask, q.rows(), "mixed_attention_heads");
  if (proj.q.size() != cfg.num_heads || proj.k.size() != cfg.num_heads ||
      proj.v.size() != cfg.num_heads) {
    throw ShapeError("mixed_attention_heads: projection count does not match num_heads");
  }
  if (n_combined > cfg.num_heads) n_combined = cfg.num_heads;

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(cfg.num_heads);
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    Tensor qh = apply_linear(g, q, proj.q[h]);
    Tensor kh = apply_linear(g, k, proj.k[h]);
    Tensor vh = apply_linear(g, v, proj.v[h]);
    Tensor weights;
    if (h < n_combined) {
      CombinedAttentionTrace trace;
      weights = combined_head_matrix(g, qh, kh, cfg, mask, traces ? &trace : nullptr);
      if (traces) traces->push_back(std::move(trace));
    } else {
      weights = softmax_head_matrix(g, qh, kh, mask);
      if (traces) traces->push_back(std::nullopt);
    }
    head_outputs.push_back(g.matmul(weights, vh));
  }
  Tensor merged = head_outputs.size() == 1 ? head_outputs[0] : g.concat_cols(head_outputs);
  return apply_linear(g, merged, proj.out);
}

Tensor combined_attention_heads(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                                const MultiHeadProjections& proj, const AttentionConfig& cfg,
                                const std::vector<double>& mask, HeadTraces* traces) {
  return mixed_attention_heads(g, q, k, v, proj, cfg, cfg.num_heads, mask, traces);
}

Tensor softmax_attention_heads(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                               const MultiHeadProjections& proj,
                               const std::vector<double>& mask) {
  AttentionConfig cfg;
  cfg.num_heads = proj.q.size();
  cfg.d_k = proj.q.empty() ? 1 : proj.q[0].w.cols();
  cfg.d_model = cfg.num_heads * cfg.d_k;
  cfg.mode = AttentionMode::SoftmaxBaseline;
  return mixed_attention_heads(g, q, k, v, proj, cfg, 0, mask, nullptr);
}

}  // namespace comatch
