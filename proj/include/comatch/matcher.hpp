#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "comatch/encoder.hpp"

namespace comatch {

// Reserved ids at the bottom of every vocabulary.
inline constexpr std::size_t kPadToken = 0;
inline constexpr std::size_t kClsToken = 1;
inline constexpr std::size_t kSepToken = 2;
inline constexpr std::size_t kNumSpecialTokens = 3;

enum class EncodingMode { Cross, Siamese };
enum class Pooling { Cls, Mean };

std::string encoding_name(EncodingMode m);
EncodingMode encoding_from(const std::string& name);
std::string pooling_name(Pooling p);
Pooling pooling_from(const std::string& name);

// One sentence pair: raw token ids (no specials), a class label, and the
// perturbation tag used for robustness slicing.
struct PairExample {
  std::vector<std::size_t> tokens_q;
  std::vector<std::size_t> tokens_p;
  std::size_t label = 0;
  std::string tag = "none";  // none | swap_num | swap_ant | overlap_high
};

struct MatcherConfig {
  EncodingMode encoding = EncodingMode::Cross;
  Pooling pooling = Pooling::Mean;
  std::size_t num_classes = 2;
  // Siamese only: build the pooled feature as [a+b; |a-b|; a*b] so swapping
  // the pair cannot change the logits.
  bool symmetric_features = false;

  void validate() const;
};

struct MatcherParams {
  EncoderParams encoder;
  ProjectionSet attend_proj;  // siamese cross-attention maps; empty in cross mode
  Linear head;
};

struct MatcherModel {
  EncoderConfig encoder_cfg;
  MatcherConfig matcher_cfg;
  MatcherParams params;
};

MatcherModel init_matcher(const EncoderConfig& ecfg, const MatcherConfig& mcfg, Rng& rng);

void visit_params(MatcherParams& params, const std::string& prefix, const ParamVisitor& fn);
void visit_params(MatcherModel& model, const ParamVisitor& fn);

// Graph-bound copy of the parameters (each tensor becomes a leaf).
MatcherParams bind_params(Graph& g, const MatcherParams& params);

// Attention snapshots taken while classifying a pair, with the positions of
// the raw q/p tokens inside the encoder input, so [q x p] sub-matrices can be
// cut out of self-attention traces.
struct PairTraces {
  EncodeTraces encoder;                            // cross mode (and siamese q-side)
  std::optional<CombinedAttentionTrace> attend;    // siamese cross-attention
  std::vector<std::size_t> q_positions;
  std::vector<std::size_t> p_positions;
};

// Logits [1 x num_classes] for one pair using the given (possibly bound)
// parameters. Rejects empty sequences.
Tensor pair_logits(Graph& g, const MatcherParams& params, const EncoderConfig& ecfg,
                   const MatcherConfig& mcfg, const PairExample& ex, PairTraces* traces = nullptr);

// Convenience forward pass on a fresh graph.
std::vector<double> classify(const MatcherModel& model, const PairExample& ex,
                             PairTraces* traces = nullptr);

std::size_t argmax(const std::vector<double>& v);

struct TagStats {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy() const { return total == 0 ? 0.0 : double(correct) / double(total); }
};

// Counts are kept as integers so slice accuracies recombine exactly.
struct Metrics {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::map<std::string, TagStats> per_tag;
  std::vector<std::vector<std::size_t>> confusion;  // [true label][predicted]

  double accuracy() const { return total == 0 ? 0.0 : double(correct) / double(total); }
};

Metrics evaluate_predictions(const std::vector<PairExample>& dataset,
                             const std::vector<std::size_t>& predictions,
                             std::size_t num_classes);
Metrics evaluate(const MatcherModel& model, const std::vector<PairExample>& dataset);

}  // namespace comatch
