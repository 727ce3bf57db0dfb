#pragma once

#include <optional>
#include <string>
#include <vector>

#include "comatch/tensor.hpp"

namespace comatch {

enum class Squash { Tanh, Sigmoid, Arctan };
enum class NormVariant { None, CenterN, CenterE, TwoSigmoid };
enum class AttentionMode { Combined, SoftmaxBaseline };

std::string squash_name(Squash s);
Squash squash_from(const std::string& name);
std::string variant_name(NormVariant v);
NormVariant variant_from(const std::string& name);
std::string mode_name(AttentionMode m);
AttentionMode mode_from(const std::string& name);

// Configuration of the combined-attention mechanism: temperatures for the
// affinity and difference matrices, the squashing pair, the normalization
// variant, and head geometry. alpha/beta default to 1.
struct AttentionConfig {
  double alpha = 1.0;
  double beta = 1.0;
  Squash f_e = Squash::Tanh;     // affinity squash, tanh or sigmoid
  Squash f_n = Squash::Sigmoid;  // difference squash, sigmoid/tanh/arctan
  NormVariant variant = NormVariant::None;
  bool share_projections = true;
  std::size_t num_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_k = 16;
  AttentionMode mode = AttentionMode::Combined;

  void validate() const;
};

// Short machine-readable label of the composition, e.g. "tanh_sigmoid",
// "tanh_sigmoid_center_n", "softmax_baseline".
std::string composition_label(const AttentionConfig& cfg);

// Per-head snapshot of the attention pipeline, detached from the graph:
// affinity E, raw difference N (nonpositive), normalized difference, and the
// combined matrix M.
struct CombinedAttentionTrace {
  Tensor affinity;
  Tensor difference_raw;
  Tensor difference_norm;
  Tensor combined;
};

using HeadTraces = std::vector<std::optional<CombinedAttentionTrace>>;

// y = x w + b
struct Linear {
  Tensor w;
  Tensor b;
};

Tensor apply_linear(Graph& g, const Tensor& x, const Linear& lin);

// Projection maps for the standalone cross-attention path. When shared, w_n
// stays empty and w_e serves both the affinity and the difference side.
struct ProjectionSet {
  Tensor w_e;
  Tensor w_n;
  bool shared = true;

  const Tensor& e() const { return w_e; }
  const Tensor& n() const { return shared ? w_e : w_n; }
};

ProjectionSet identity_projections(std::size_t d);

// E[i][j] = alpha * dot(a_i, b_j). Inputs are already projected.
Tensor affinity_matrix(Graph& g, const Tensor& a, const Tensor& b, double alpha);

// N[i][j] = -beta * sum_k |a_ik - b_jk|. Inputs are already projected.
// Nonpositive by construction, which pins sigmoid(N) into (0, 0.5].
Tensor difference_matrix(Graph& g, const Tensor& a, const Tensor& b, double beta);

// x minus its global mean; with `valid` (0/1 constant matrix) the mean runs
// over valid entries only, so padding content cannot shift real scores.
Tensor center_mean(Graph& g, const Tensor& x, const Tensor* valid = nullptr);

// CenterN subtracts the global mean of n; every other variant passes n
// through (TwoSigmoid rescales inside compose()).
Tensor normalize_difference(Graph& g, const Tensor& n, NormVariant variant,
                            const Tensor* valid = nullptr);

// M = f_E(e') ⊙ gate(f_N(n)): e' is centered for CenterE, gate is doubled for
// TwoSigmoid, otherwise both pass through. n must already be normalized.
Tensor compose(Graph& g, const Tensor& e, const Tensor& n, const AttentionConfig& cfg,
               const Tensor* valid = nullptr);

struct AttendResult {
  Tensor a_hat;
  Tensor b_hat;
  std::optional<CombinedAttentionTrace> trace;
};

// Full standalone pipeline over two sequences (already embedded/encoded):
// project, build E and N, normalize, compose, then pool each sequence
// against the other: a_hat = M b, b_hat = M^T a. The difference matrix is
// scaled by 1/sqrt(d_k) on top of beta; the affinity keeps plain alpha.
AttendResult attend(Graph& g, const Tensor& a, const Tensor& b, const ProjectionSet& proj,
                    const AttentionConfig& cfg, bool want_trace = false);

// Per-head projections for the in-encoder attention path plus the output map.
struct MultiHeadProjections {
  std::vector<Linear> q;
  std::vector<Linear> k;
  std::vector<Linear> v;
  Linear out;
};

// Combined matrix for one head of projected inputs:
// M = compose(alpha QK^T / sqrt(d_k), normalize(-beta L1(Q,K) / sqrt(d_k))),
// with masked key columns forced to zero. mask is a key-validity vector
// (1 keep, 0 drop); empty means no masking.
Tensor combined_head_matrix(Graph& g, const Tensor& q, const Tensor& k,
                            const AttentionConfig& cfg, const std::vector<double>& mask,
                            CombinedAttentionTrace* trace = nullptr);

// Row-stochastic softmax attention for one head of projected inputs, with
// additive -inf style masking of invalid keys.
Tensor softmax_head_matrix(Graph& g, const Tensor& q, const Tensor& k,
                           const std::vector<double>& mask);

// Multi-head pass routing the first n_combined heads through the combined
// mechanism and the rest through softmax, then concat + output projection.
// traces, when given, receives one entry per head (nullopt for softmax heads).
Tensor mixed_attention_heads(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                             const MultiHeadProjections& proj, const AttentionConfig& cfg,
                             std::size_t n_combined, const std::vector<double>& mask,
                             HeadTraces* traces = nullptr);

// All heads combined (the replacement mechanism).
Tensor combined_attention_heads(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                                const MultiHeadProjections& proj, const AttentionConfig& cfg,
                                const std::vector<double>& mask = {},
                                HeadTraces* traces = nullptr);

// All heads softmax (the baseline).
Tensor softmax_attention_heads(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                               const MultiHeadProjections& proj,
                               const std::vector<double>& mask = {});

}  // namespace comatch
