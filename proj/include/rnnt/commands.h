// rnnt/commands.h
//
// Operator-facing commands behind the CLI: data generation, the three
// training phases, evaluation, benchmarking, and a live stream demo.
// Commands throw std::invalid_argument for config/usage problems and
// std::runtime_error for runtime failures; the CLI maps these to exit
// codes 1 and 2.

#ifndef RNNT_COMMANDS_H_
#define RNNT_COMMANDS_H_

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rnnt/decode.h"
#include "rnnt/metrics.h"
#include "rnnt/model.h"
#include "rnnt/synthdata.h"
#include "rnnt/training.h"

namespace rnnt {

struct DataConfig {
  std::string dir = "runs/data";
  int languages = 2;
  int tokens_per_language = 6;
  int feature_dim = 8;
  int train_utterances_per_language = 300;
  int dev_utterances_per_language = 40;
  int eval_utterances_per_language = 50;
  int codeswitch_utterances = 30;
  int codeswitch_segments = 3;
  int codeswitch_tokens_per_segment = 2;
  // Switch-point pauses; intersentential switches carry a clear gap.
  int codeswitch_gap_min = 3;
  int codeswitch_gap_max = 5;
  int min_tokens = 3;
  int max_tokens = 6;
  double noise_std = 0.15;
  SilenceConfig silence;

  int vocab_size() const { return languages * tokens_per_language; }
};

struct RunConfig {
  uint64_t seed = 0;
  std::string out_dir = "runs/exp";
  DataConfig data;
  ModelConfig model;
  OptimizerConfig optimizer;
  LossConfig loss{5e-3, false};
  AugmentConfig augment;
  bool joint_ep_training = false;
  DecodeConfig decode;
  MicCloserConfig mic;

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static RunConfig load(const std::string& path);
  // Consistency across sections (input_dim vs feature geometry, vocab).
  void validate() const;
};

struct DatasetPaths {
  std::string train, dev, eval, eval_cs, manifest;
};
DatasetPaths dataset_paths(const std::string& dir);

void cmd_gen_data(const RunConfig& cfg);

// stage: "1", "eou" or "ep". init_checkpoint resolves relative to
// out_dir defaults when empty. Returns the written checkpoint path.
std::string cmd_train(const RunConfig& cfg, const std::string& stage,
                      const std::string& init_checkpoint = "");

struct EvalOptions {
  bool endpointing = true;   // run the mic-closing pass when possible
  bool force_lid = false;    // allow LID models on code-switch data
  bool write_table = false;  // emit the flat TSV row next to the report
};

struct EvalOutcome {
  MetricsReport report;
  std::optional<double> codeswitch_segment_accuracy;
  std::string report_path;
};
EvalOutcome cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                     const std::string& dataset_path, const EvalOptions& opts);

struct BenchmarkOutcome {
  nlohmann::json report;
  std::string report_path;
};
// Measures RT on the given checkpoint; --sweep adds formula-only rows
// for predictor/width variants and, when an EOU joint exists, an
// endpoint-latency sweep over decoder thresholds.
BenchmarkOutcome cmd_benchmark(const RunConfig& cfg,
                               const std::string& checkpoint_path,
                               const std::string& dataset_path, bool sweep);

// Prints the partials log live for one dataset record.
void cmd_stream(const RunConfig& cfg, const std::string& checkpoint_path,
                const std::string& dataset_path, int index, std::ostream& out);

// Shared eval helpers (also used by the acceptance suite).
struct UtteranceEval {
  std::string id;
  std::string language_tag;
  std::vector<int> ref_tokens;
  std::vector<int> hyp_tokens;        // full decode, EOU stripped
  double processing_seconds = 0.0;
  double audio_seconds = 0.0;
  std::optional<int> first_emission_frame;  // model frames
  std::optional<int> close_frame_raw;       // endpointing pass
  std::vector<int> hyp_tokens_endpointed;   // possibly cut off at the close
  int eos_frame = 0;
  std::vector<PartialsEntry> partials;
};

std::vector<UtteranceEval> evaluate_records(
    const Model& model, const FeatureStats& stats,
    const std::vector<UtteranceRecord>& records, const DecodeConfig& decode,
    const MicCloserConfig& mic, bool endpointing);

// Positions of reference tokens matched by an optimal unit-cost
// alignment against the hypothesis.
std::vector<bool> reference_matches(const std::vector<int>& ref,
                                    const std::vector<int>& hyp);

}  // namespace rnnt

#endif  // RNNT_COMMANDS_H_
