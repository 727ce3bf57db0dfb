#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "comatch/runconfig.hpp"

namespace comatch::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;        // bad flags, out-of-range layer/head
inline constexpr int kDataError = 2;    // malformed configs, datasets, checkpoints
inline constexpr int kCheckFailed = 3;  // gradcheck below the bar

// Bad command usage that is not a config/data problem.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenerateArgs {
  std::string spec_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  std::string config_path;
  std::string data_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

struct EvalArgs {
  std::string checkpoint_path;
  std::string data_path;
  std::string json_out;         // optional metrics JSON
  std::string compare_path;     // optional second checkpoint for per-tag deltas
};

struct GradcheckArgs {
  std::string config_path;  // optional; defaults apply when empty
  std::optional<std::uint64_t> seed;
};

struct AblateArgs {
  std::string config_path;
  std::string data_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
};

struct ExportAttentionArgs {
  std::string checkpoint_path;
  std::string pair;  // "tok tok ...|tok tok ..."
  std::size_t layer = 0;
  std::size_t head = 0;
  std::string out_path;
};

int run_generate(const GenerateArgs& args);
int run_train(const TrainArgs& args);
int run_eval(const EvalArgs& args);
int run_gradcheck(const GradcheckArgs& args);
int run_ablate(const AblateArgs& args);
int run_export_attention(const ExportAttentionArgs& args);

// Full argv entry point used by the binary.
int main(int argc, char** argv);

}  // namespace comatch::cli
