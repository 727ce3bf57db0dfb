#include "comatch/encoder.hpp"

#include <cmath>

namespace comatch {

namespace {

Tensor xavier(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::zeros({fan_in, fan_out});
  for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal(0.0, sd);
  return t;
}

Linear init_linear(Rng& rng, std::size_t in, std::size_t out) {
  return Linear{xavier(rng, in, out), Tensor::zeros({out})};
}

// Q/K/V maps follow the original transformer layout: weight only. A key bias
// is invisible to softmax heads (row-shift invariance), which would leave
// dead parameters with exactly-zero gradients.
Linear init_projection(Rng& rng, std::size_t in, std::size_t out) {
  return Linear{xavier(rng, in, out), Tensor()};
}

}  // namespace

std::vector<double> EncoderConfig::default_schedule(std::size_t layers) {
  const double lower[] = {0.5, 0.4, 0.3};
  std::vector<double> schedule(layers, 0.0);
  for (std::size_t i = 0; i < layers && i < 3; ++i) schedule[i] = lower[i];
  return schedule;
}

AttentionConfig EncoderConfig::effective_attention() const {
  AttentionConfig a = attention;
  a.num_heads = num_heads;
  a.d_model = d_model;
  a.d_k = d_k();
  return a;
}

std::size_t EncoderConfig::combined_heads_at(std::size_t layer) const {
  if (attention.mode == AttentionMode::SoftmaxBaseline) return 0;
  const double frac = layer < replacement_schedule.size() ? replacement_schedule[layer] : 0.0;
  const long r = std::lround(frac * static_cast<double>(num_heads));
  if (r <= 0) return 0;
  return std::min<std::size_t>(static_cast<std::size_t>(r), num_heads);
}

void EncoderConfig::validate() const {
  if (d_model == 0 || num_heads == 0) throw ValueError("encoder: d_model/num_heads must be positive");
  if (d_model % num_heads != 0) {
    throw ValueError("encoder: d_model (" + std::to_string(d_model) +
                     ") not divisible by num_heads (" + std::to_string(num_heads) + ")");
  }
  if (d_ff == 0) throw ValueError("encoder: d_ff must be positive");
  if (vocab_size == 0) throw ValueError("encoder: vocab_size must be positive");
  if (replacement_schedule.size() > num_layers) {
    throw ValueError("encoder: replacement schedule has " +
                     std::to_string(replacement_schedule.size()) + " entries for " +
                     std::to_string(num_layers) + " layers");
  }
  for (double f : replacement_schedule) {
    if (f < 0.0 || f > 1.0) throw ValueError("encoder: schedule fractions must lie in [0,1]");
  }
  effective_attention().validate();
}

EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderParams p;
  p.tok_embed = Tensor::zeros({cfg.vocab_size, cfg.d_model});
  for (std::size_t i = 0; i < p.tok_embed.size(); ++i) p.tok_embed.at(i) = rng.normal(0.0, 0.1);
  p.seg_embed = Tensor::zeros({2, cfg.d_model});
  for (std::size_t i = 0; i < p.seg_embed.size(); ++i) p.seg_embed.at(i) = rng.normal(0.0, 0.02);

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    BlockParams b;
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      b.attn.q.push_back(init_projection(rng, cfg.d_model, cfg.d_k()));
      b.attn.k.push_back(init_projection(rng, cfg.d_model, cfg.d_k()));
      b.attn.v.push_back(init_projection(rng, cfg.d_model, cfg.d_k()));
    }
    b.attn.out = init_linear(rng, cfg.d_model, cfg.d_model);
    b.ffn1 = init_linear(rng, cfg.d_model, cfg.d_ff);
    b.ffn2 = init_linear(rng, cfg.d_ff, cfg.d_model);
    b.ln1_gain = Tensor::full({cfg.d_model}, 1.0);
    b.ln1_bias = Tensor::zeros({cfg.d_model});
    b.ln2_gain = Tensor::full({cfg.d_model}, 1.0);
    b.ln2_bias = Tensor::zeros({cfg.d_model});
    p.blocks.push_back(std::move(b));
  }
  return p;
}

void visit_params(Linear& lin, const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".w", lin.w);
  if (lin.b.size() > 0) fn(prefix + ".b", lin.b);
}

void visit_params(MultiHeadProjections& proj, const std::string& prefix, const ParamVisitor& fn) {
  for (std::size_t h = 0; h < proj.q.size(); ++h) {
    const std::string head = prefix + ".head" + std::to_string(h);
    visit_params(proj.q[h], head + ".q", fn);
    visit_params(proj.k[h], head + ".k", fn);
    visit_params(proj.v[h], head + ".v", fn);
  }
  visit_params(proj.out, prefix + ".out", fn);
}

void visit_params(EncoderParams& params, const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".tok_embed", params.tok_embed);
  fn(prefix + ".seg_embed", params.seg_embed);
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    BlockParams& b = params.blocks[l];
    const std::string block = prefix + ".block" + std::to_string(l);
    visit_params(b.attn, block + ".attn", fn);
    visit_params(b.ffn1, block + ".ffn1", fn);
    visit_params(b.ffn2, block + ".ffn2", fn);
    fn(block + ".ln1.gain", b.ln1_gain);
    fn(block + ".ln1.bias", b.ln1_bias);
    fn(block + ".ln2.gain", b.ln2_gain);
    fn(block + ".ln2.bias", b.ln2_bias);
  }
}

Tensor sinusoid_positions(std::size_t n, std::size_t d) {
  Tensor pe = Tensor::zeros({n, d});
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; 2 * i < d; ++i) {
      const double rate = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * rate;
      pe.at(pos, 2 * i) = std::sin(angle);
      if (2 * i + 1 < d) pe.at(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Tensor embed(Graph& g, const EncoderParams& params, const EncoderConfig& cfg,
             const std::vector<std::size_t>& tokens, const std::vector<std::size_t>& segments) {
  if (tokens.size() > cfg.max_seq_len) {
    throw ValueError("embed: sequence length " + std::to_string(tokens.size()) +
                     " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  if (!segments.empty() && segments.size() != tokens.size()) {
    throw ValueError("embed: segment count does not match token count");
  }
  Tensor x = g.embed_rows(params.tok_embed, tokens);
  const std::vector<std::size_t> segs =
      segments.empty() ? std::vector<std::size_t>(tokens.size(), 0) : segments;
  x = g.add(x, g.embed_rows(params.seg_embed, segs));
  return g.add(x, sinusoid_positions(tokens.size(), cfg.d_model));
}

Tensor encoder_block(Graph& g, const BlockParams& params, const EncoderConfig& cfg,
                     const Tensor& x, const std::vector<double>& mask, std::size_t layer_index,
                     HeadTraces* traces) {
  const AttentionConfig attn_cfg = cfg.effective_attention();
  Tensor attn_out = mixed_attention_heads(g, x, x, x, params.attn, attn_cfg,
                                          cfg.combined_heads_at(layer_index), mask, traces);
  Tensor x1 = g.layer_norm(g.add(x, attn_out), params.ln1_gain, params.ln1_bias);
  Tensor ff = apply_linear(g, g.relu(apply_linear(g, x1, params.ffn1)), params.ffn2);
  return g.layer_norm(g.add(x1, ff), params.ln2_gain, params.ln2_bias);
}

Tensor encode(Graph& g, const EncoderParams& params, const EncoderConfig& cfg,
              const std::vector<std::size_t>& tokens, const std::vector<std::size_t>& segments,
              const std::vector<double>& mask, EncodeTraces* traces) {
  Tensor x = embed(g, params, cfg, tokens, segments);
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    HeadTraces layer_traces;
    x = encoder_block(g, params.blocks[l], cfg, x, mask, l, traces ? &layer_traces : nullptr);
    if (traces) traces->layers.push_back(std::move(layer_traces));
  }
  return x;
}

}  // namespace comatch
