#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "comatch/matcher.hpp"

namespace comatch {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 42;
  double clip_norm = 1.0;  // global-norm clip; <= 0 disables
  double dev_fraction = 0.1;

  void validate() const;
};

// Loss became non-finite; the message names the offending step.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double epsilon)
      : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  explicit Adam(const TrainConfig& cfg) : Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon) {}

  // params and grads aligned index by index; moments are kept per index.
  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

  std::size_t steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> dev_accuracy;
  std::vector<double> step_loss;
  std::size_t best_epoch = 0;
  double best_dev_accuracy = 0.0;
  std::size_t steps = 0;
};

// Mean loss of the batch at the current parameters, then one clipped Adam
// step on the accumulated gradients. Throws DivergenceError on non-finite
// loss, naming step_index.
double train_on_batch(MatcherModel& model, const std::vector<PairExample>& batch, Adam& opt,
                      double clip_norm, std::size_t step_index);

// Epoch loop with per-epoch dev accuracy and best-checkpoint retention: the
// parameters with the best dev accuracy are restored into the model before
// returning.
TrainReport train(MatcherModel& model, const std::vector<PairExample>& train_set,
                  const std::vector<PairExample>& dev_set, const TrainConfig& cfg);

// Deterministic shuffled split used by the CLI and the ablation runner.
void split_dataset(const std::vector<PairExample>& all, double dev_fraction, std::uint64_t seed,
                   std::vector<PairExample>& train_out, std::vector<PairExample>& dev_out);

struct AblationRow {
  std::string name;
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
};

// The eight composition variants plus the softmax baseline, in fixed order.
std::vector<AttentionConfig> ablation_variants(const AttentionConfig& base);

// Trains every variant from the same seed on byte-identical shards.
AblationResult run_ablation(const EncoderConfig& ecfg, const MatcherConfig& mcfg,
                            const TrainConfig& tcfg, const std::vector<PairExample>& train_set,
                            const std::vector<PairExample>& dev_set,
                            const std::vector<PairExample>& test_set);

}  // namespace comatch
