#pragma once

#include <string>

#include "json.hpp"

#include "comatch/synthetic.hpp"
#include "comatch/trainer.hpp"

namespace comatch {

// One JSON document drives every command: synthetic data spec, encoder
// geometry, attention mechanism, matcher head, and training loop. Every
// field has a default; unknown keys are rejected; the resolved document
// round-trips through to_json so runs can be reproduced from their reports.
struct RunConfig {
  SyntheticSpec synthetic;
  EncoderConfig encoder;
  MatcherConfig matcher;
  TrainConfig training;

  // Derives encoder.vocab_size from the synthetic vocabulary, fills the
  // default replacement schedule, syncs attention geometry, validates.
  void finalize();
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

// Versioned JSON checkpoint: the resolved config plus a flat map from
// parameter path to shape + row-major values.
void save_checkpoint(const std::string& path, const RunConfig& cfg, MatcherModel& model);
MatcherModel load_checkpoint(const std::string& path, RunConfig* cfg_out = nullptr);

}  // namespace comatch
