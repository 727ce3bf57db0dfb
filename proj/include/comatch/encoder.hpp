#pragma once

#include <functional>
#include <string>
#include <vector>

#include "comatch/attention.hpp"
#include "comatch/rng.hpp"
#include "comatch/tensor.hpp"

namespace comatch {

// Geometry and routing of the encoder stack. replacement_schedule holds the
// per-layer fraction of heads routed through combined attention; the default
// replaces heads in the three lowest layers at 50/40/30%.
struct EncoderConfig {
  std::size_t num_layers = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t num_heads = 4;
  std::vector<double> replacement_schedule;
  std::size_t max_seq_len = 64;
  std::size_t vocab_size = 0;
  AttentionConfig attention;

  static std::vector<double> default_schedule(std::size_t layers);

  std::size_t d_k() const { return num_heads == 0 ? 0 : d_model / num_heads; }
  // AttentionConfig with geometry filled in from this encoder.
  AttentionConfig effective_attention() const;
  // round(fraction * num_heads), clamped to [0, num_heads]; zero when the
  // whole model runs the softmax baseline.
  std::size_t combined_heads_at(std::size_t layer) const;
  void validate() const;
};

struct BlockParams {
  MultiHeadProjections attn;
  Linear ffn1;
  Linear ffn2;
  Tensor ln1_gain, ln1_bias;
  Tensor ln2_gain, ln2_bias;
};

struct EncoderParams {
  Tensor tok_embed;  // [vocab_size x d_model]
  Tensor seg_embed;  // [2 x d_model], segment offsets for pair inputs
  std::vector<BlockParams> blocks;
};

EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng);

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;
void visit_params(Linear& lin, const std::string& prefix, const ParamVisitor& fn);
void visit_params(MultiHeadProjections& proj, const std::string& prefix, const ParamVisitor& fn);
void visit_params(EncoderParams& params, const std::string& prefix, const ParamVisitor& fn);

// Fixed sin/cos position table, [n x d].
Tensor sinusoid_positions(std::size_t n, std::size_t d);

// Learned token embedding + fixed positional encoding + learned segment
// embedding. segments may be empty (treated as all zeros).
Tensor embed(Graph& g, const EncoderParams& params, const EncoderConfig& cfg,
             const std::vector<std::size_t>& tokens, const std::vector<std::size_t>& segments);

// Post-norm residual block: LN(x + MixedAttn(x)) then LN(x' + FFN(x')).
// layer_index selects how many heads run the combined mechanism.
Tensor encoder_block(Graph& g, const BlockParams& params, const EncoderConfig& cfg,
                     const Tensor& x, const std::vector<double>& mask, std::size_t layer_index,
                     HeadTraces* traces = nullptr);

struct EncodeTraces {
  std::vector<HeadTraces> layers;
};

Tensor encode(Graph& g, const EncoderParams& params, const EncoderConfig& cfg,
              const std::vector<std::size_t>& tokens, const std::vector<std::size_t>& segments,
              const std::vector<double>& mask, EncodeTraces* traces = nullptr);

}  // namespace comatch
