#include <cmath>

#include "comatch/encoder.hpp"
#include "comatch/gradcheck.hpp"
#include "comatch/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace comatch;

namespace {

EncoderConfig tiny_config(std::size_t layers = 2, std::size_t d_model = 8,
                          std::size_t heads = 2) {
  EncoderConfig cfg;
  cfg.num_layers = layers;
  cfg.d_model = d_model;
  cfg.d_ff = 2 * d_model;
  cfg.num_heads = heads;
  cfg.replacement_schedule = EncoderConfig::default_schedule(layers);
  cfg.max_seq_len = 16;
  cfg.vocab_size = 12;
  return cfg;
}

NamedParams collect(EncoderParams& p) {
  NamedParams out;
  visit_params(p, "enc", [&](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
  return out;
}

EncoderParams bind_encoder(const EncoderParams& src, const std::vector<Tensor>& leaves) {
  EncoderParams copy = src;
  std::size_t i = 0;
  visit_params(copy, "enc", [&](const std::string&, Tensor& t) { t = leaves[i++]; });
  return copy;
}

oracle::Mat layer_norm_o(const oracle::Mat& x, const std::vector<double>& gain,
                         const std::vector<double>& bias, double eps = 1e-5) {
  oracle::Mat out = x;
  for (auto& row : out) {
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(row.size());
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = (row[j] - mu) * inv * gain[j] + bias[j];
  }
  return out;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.at(i) != b.at(i)) return false;
  return true;
}

}  // namespace

TEST_CASE("replacement schedule head counts") {
  EncoderConfig cfg = tiny_config(4, 8, 4);
  cfg.replacement_schedule = {0.5, 0.4, 0.3, 0.0};
  CHECK(cfg.combined_heads_at(0) == 2);  // round(2.0)
  CHECK(cfg.combined_heads_at(1) == 2);  // round(1.6)
  CHECK(cfg.combined_heads_at(2) == 1);  // round(1.2)
  CHECK(cfg.combined_heads_at(3) == 0);
  CHECK(cfg.combined_heads_at(9) == 0);  // past the schedule

  cfg.replacement_schedule = {1.0};
  CHECK(cfg.combined_heads_at(0) == 4);

  cfg.attention.mode = AttentionMode::SoftmaxBaseline;
  CHECK(cfg.combined_heads_at(0) == 0);

  CHECK(EncoderConfig::default_schedule(5) == std::vector<double>{0.5, 0.4, 0.3, 0.0, 0.0});
  CHECK(EncoderConfig::default_schedule(2) == std::vector<double>{0.5, 0.4});
}

TEST_CASE("embedding basics") {
  EncoderConfig cfg = tiny_config();
  Rng rng(1);
  EncoderParams params = init_encoder(cfg, rng);

  SUBCASE("empty sequence gives an empty matrix") {
    Graph g;
    Tensor x = embed(g, params, cfg, {}, {});
    CHECK(x.shape == Shape{0, cfg.d_model});
  }

  SUBCASE("repeated token at different positions differs by the positional term") {
    Graph g;
    Tensor x = embed(g, params, cfg, {5, 5}, {});
    bool any_diff = false;
    for (std::size_t j = 0; j < cfg.d_model; ++j)
      if (x.at(0, j) != x.at(1, j)) any_diff = true;
    CHECK(any_diff);
  }

  SUBCASE("sinusoid table matches the closed form") {
    Tensor pe = sinusoid_positions(4, 8);
    for (std::size_t i = 0; i < 4; ++i) CHECK(pe.at(0, 2 * i) == 0.0);   // sin(0)
    for (std::size_t i = 0; i < 4; ++i) CHECK(pe.at(0, 2 * i + 1) == 1.0);  // cos(0)
    for (std::size_t pos = 0; pos < 4; ++pos)
      for (std::size_t i = 0; i < 4; ++i) {
        const double angle = pos * std::pow(10000.0, -2.0 * double(i) / 8.0);
        CHECK(pe.at(pos, 2 * i) == doctest::Approx(std::sin(angle)).epsilon(1e-15));
        CHECK(pe.at(pos, 2 * i + 1) == doctest::Approx(std::cos(angle)).epsilon(1e-15));
      }
  }

  SUBCASE("out-of-vocabulary id is rejected") {
    Graph g;
    CHECK_THROWS_AS(embed(g, params, cfg, {cfg.vocab_size}, {}), ValueError);
  }

  SUBCASE("over-long sequence is rejected") {
    Graph g;
    std::vector<std::size_t> too_long(cfg.max_seq_len + 1, 1);
    CHECK_THROWS_AS(embed(g, params, cfg, too_long, {}), ValueError);
  }
}

TEST_CASE("block with fraction 0 equals the pure softmax block bit for bit") {
  EncoderConfig combined_cfg = tiny_config(1, 8, 2);
  combined_cfg.replacement_schedule = {0.0};
  EncoderConfig baseline_cfg = combined_cfg;
  baseline_cfg.attention.mode = AttentionMode::SoftmaxBaseline;

  Rng rng(7);
  EncoderParams params = init_encoder(combined_cfg, rng);
  Rng data_rng(8);
  Tensor x = Tensor::zeros({5, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x.at(i) = data_rng.uniform(-1.0, 1.0);

  Graph g1, g2;
  Tensor out_sched = encoder_block(g1, params.blocks[0], combined_cfg, x, {}, 0);
  Tensor out_base = encoder_block(g2, params.blocks[0], baseline_cfg, x, {}, 0);
  CHECK(bit_equal(out_sched, out_base));
}

TEST_CASE("block with fraction 1 and zero values reduces to the LN/FFN path") {
  EncoderConfig cfg = tiny_config(1, 8, 2);
  cfg.replacement_schedule = {1.0};
  Rng rng(9);
  EncoderParams params = init_encoder(cfg, rng);
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    params.blocks[0].attn.v[h].w = Tensor::zeros({8, 4});
  }
  params.blocks[0].attn.out.b = Tensor::zeros({8});

  Rng data_rng(10);
  Tensor x = Tensor::zeros({4, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x.at(i) = data_rng.uniform(-1.0, 1.0);

  Graph g;
  Tensor out = encoder_block(g, params.blocks[0], cfg, x, {}, 0);

  // Reference path with the attention contribution identically zero.
  Graph h;
  Tensor x1 = h.layer_norm(x, params.blocks[0].ln1_gain, params.blocks[0].ln1_bias);
  Tensor ff = apply_linear(h, h.relu(apply_linear(h, x1, params.blocks[0].ffn1)),
                           params.blocks[0].ffn2);
  Tensor ref = h.layer_norm(h.add(x1, ff), params.blocks[0].ln2_gain, params.blocks[0].ln2_bias);
  CHECK(bit_equal(out, ref));
}

TEST_CASE("mixed block matches a hand-composed oracle") {
  EncoderConfig cfg = tiny_config(1, 8, 2);
  cfg.replacement_schedule = {0.5};  // one combined head, one softmax head
  Rng rng(11);
  EncoderParams params = init_encoder(cfg, rng);
  Tensor x = Tensor::zeros({3, 8});
  Rng data_rng(12);
  for (std::size_t i = 0; i < x.size(); ++i) x.at(i) = data_rng.uniform(-1.0, 1.0);

  Graph g;
  Tensor out = encoder_block(g, params.blocks[0], cfg, x, {}, 0);

  const BlockParams& b = params.blocks[0];
  std::vector<oracle::HeadWeights> heads;
  for (std::size_t h = 0; h < 2; ++h) {
    oracle::HeadWeights w;
    w.wq = oracle::to_mat(b.attn.q[h].w);
    w.wk = oracle::to_mat(b.attn.k[h].w);
    w.wv = oracle::to_mat(b.attn.v[h].w);
    w.bq = b.attn.q[h].b.values();
    w.bk = b.attn.k[h].b.values();
    w.bv = b.attn.v[h].b.values();
    heads.push_back(std::move(w));
  }
  oracle::Mat xm = oracle::to_mat(x);
  oracle::Mat attn = oracle::mixed_heads(xm, xm, xm, heads, oracle::to_mat(b.attn.out.w),
                                         b.attn.out.b.values(), cfg.effective_attention(), 1, {});
  oracle::Mat x1 = xm;
  for (std::size_t i = 0; i < x1.size(); ++i)
    for (std::size_t j = 0; j < x1[i].size(); ++j) x1[i][j] += attn[i][j];
  x1 = layer_norm_o(x1, b.ln1_gain.values(), b.ln1_bias.values());
  oracle::Mat hmid = oracle::add_rowvec(oracle::matmul(x1, oracle::to_mat(b.ffn1.w)),
                                        b.ffn1.b.values());
  for (auto& row : hmid)
    for (double& v : row) v = v > 0.0 ? v : 0.0;
  oracle::Mat ff = oracle::add_rowvec(oracle::matmul(hmid, oracle::to_mat(b.ffn2.w)),
                                      b.ffn2.b.values());
  oracle::Mat ref = x1;
  for (std::size_t i = 0; i < ref.size(); ++i)
    for (std::size_t j = 0; j < ref[i].size(); ++j) ref[i][j] += ff[i][j];
  ref = layer_norm_o(ref, b.ln2_gain.values(), b.ln2_bias.values());

  CHECK(oracle::max_abs_diff(oracle::to_mat(out), ref) < 1e-10);
}

TEST_CASE("encode basics") {
  EncoderConfig cfg = tiny_config(2, 8, 2);
  Rng rng(13);
  EncoderParams params = init_encoder(cfg, rng);
  const std::vector<std::size_t> tokens{3, 7, 1, 4};

  SUBCASE("zero layers return the embedding unchanged") {
    EncoderConfig flat = cfg;
    flat.num_layers = 0;
    flat.replacement_schedule.clear();
    Rng r2(13);
    EncoderParams none = init_encoder(flat, r2);
    Graph g;
    Tensor enc = encode(g, none, flat, tokens, {}, {});
    Graph h;
    Tensor emb = embed(h, none, flat, tokens, {});
    CHECK(bit_equal(enc, emb));
  }

  SUBCASE("shape preservation and determinism") {
    for (std::size_t n : {1u, 3u, 6u}) {
      std::vector<std::size_t> toks(n, 2);
      Graph g;
      CHECK(encode(g, params, cfg, toks, {}, {}).shape == Shape{n, cfg.d_model});
    }
    Graph g1, g2;
    CHECK(bit_equal(encode(g1, params, cfg, tokens, {}, {}),
                    encode(g2, params, cfg, tokens, {}, {})));
  }

  SUBCASE("all-zero schedule equals the softmax baseline bit for bit") {
    EncoderConfig zero = cfg;
    zero.replacement_schedule.assign(cfg.num_layers, 0.0);
    EncoderConfig base = zero;
    base.attention.mode = AttentionMode::SoftmaxBaseline;
    Graph g1, g2;
    CHECK(bit_equal(encode(g1, params, zero, tokens, {}, {}),
                    encode(g2, params, base, tokens, {}, {})));
  }
}

TEST_CASE("masked padding cannot leak into unmasked positions") {
  for (NormVariant variant : {NormVariant::None, NormVariant::CenterN, NormVariant::CenterE}) {
    EncoderConfig cfg = tiny_config(2, 8, 2);
    cfg.replacement_schedule = {1.0, 0.5};
    cfg.attention.variant = variant;
    Rng rng(17);
    EncoderParams params = init_encoder(cfg, rng);

    std::vector<std::size_t> tokens{3, 7, 1, 4};
    std::vector<std::size_t> altered{3, 7, 1, 9};  // only the padded slot differs
    const std::vector<double> mask{1.0, 1.0, 1.0, 0.0};

    Graph g1, g2;
    Tensor a = encode(g1, params, cfg, tokens, {}, mask);
    Tensor b = encode(g2, params, cfg, altered, {}, mask);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < cfg.d_model; ++j) CHECK(a.at(i, j) == b.at(i, j));
  }
}

TEST_CASE("end-to-end encoder gradients pass the finite-difference oracle") {
  EncoderConfig cfg = tiny_config(2, 8, 2);
  cfg.replacement_schedule = {0.5, 0.5};
  Rng rng(23);
  EncoderParams params = init_encoder(cfg, rng);
  const std::vector<std::size_t> tokens{3, 7, 4};

  // Contract the mean-pooled output with a fixed random cofactor; a bare
  // mean over a layer-norm output is structurally zero and checks nothing.
  Rng cof_rng(29);
  Tensor pool = Tensor::full({1, tokens.size()}, 1.0 / static_cast<double>(tokens.size()));
  Tensor cof = Tensor::zeros({1, cfg.d_model});
  for (std::size_t i = 0; i < cof.size(); ++i) cof.at(i) = cof_rng.uniform(-1.0, 1.0);

  NamedParams named = collect(params);
  auto f = [&](Graph& g, const std::vector<Tensor>& leaves) {
    EncoderParams bound = bind_encoder(params, leaves);
    Tensor pooled = g.matmul(pool, encode(g, bound, cfg, tokens, {}, {}));
    return g.mean_all(g.mul(pooled, cof));
  };
  GradCheckReport rep = finite_diff_check(f, named);
  CHECK(rep.coords_checked > 500);
  CHECK(rep.max_rel_err < 1e-4);
}
