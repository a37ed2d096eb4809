// rnnt/decode.h
//
// Frame-synchronous streaming beam search over the recognition joint,
// EOU probability from the EOU joint, and acoustic/decoder microphone
// closing. One StreamState owns one utterance's decode; weights are
// shared immutably.

#ifndef RNNT_DECODE_H_
#define RNNT_DECODE_H_

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rnnt/model.h"
#include "rnnt/streaming.h"

namespace rnnt {

struct DecodeConfig {
  int beam_size = 4;
  int max_symbols_per_frame = 4;
  // p_eou conditions on the best hypothesis only; true switches to the
  // max over the beam.
  bool eou_over_beam = false;

  void validate() const;
};

enum class FusionRule { kEither, kAcousticOnly, kDecoderOnly };
const char* to_string(FusionRule rule);
FusionRule fusion_rule_from_string(const std::string& s);

struct MicCloserConfig {
  double acoustic_threshold = 0.9;
  int consecutive_frames = 2;
  double eou_threshold = 0.8;
  FusionRule fusion_rule = FusionRule::kEither;

  void validate() const;
};

enum class MicTrigger { kNone, kAcoustic, kDecoder };
const char* to_string(MicTrigger trigger);

struct MicDecision {
  bool close = false;
  int frame = -1;  // model input frame index of the close event
  MicTrigger trigger = MicTrigger::kNone;
};

// First frame at which either the final-silence posterior stayed at or
// above the acoustic threshold for m consecutive frames, or p_eou
// reached the decoder threshold, per the fusion rule. Acoustic wins
// ties. Histories are indexed by model input frame; p_eou entries are
// absent on frames without a completed encoder frame.
MicDecision mic_close_policy(
    const std::vector<double>& final_silence_posterior,
    const std::vector<std::optional<double>>& eou_probability,
    const MicCloserConfig& cfg);

struct Hypothesis {
  std::vector<int> tokens;  // no blanks
  double log_score = 0.0;
  Model::PredictorState pred;  // state after consuming `tokens`
};

// Expands the beam over one encoder frame: standard frame-synchronous
// search with up to max_symbols_per_frame emissions, log-sum-exp
// merging of identical token sequences, and pruning of expansions that
// do not beat their parent's blank continuation. Beam size 1 runs the
// equivalent greedy loop.
void advance_beam(const Model& model, const Tensor& enc_frame,
                  const DecodeConfig& cfg, std::vector<Hypothesis>& beam);

struct PartialsEntry {
  int frame = 0;   // model input frame index
  double ms = 0.0; // end-of-frame timestamp on the 10 ms raw clock
  std::vector<int> tokens;
  std::array<double, 4> ep_posterior{};
  std::optional<double> p_eou;
  bool mic_closed = false;
};

std::string format_partials_line(const PartialsEntry& entry);

struct StepOutput {
  std::vector<int> partial_best;
  std::array<double, 4> ep_posterior{};
  std::optional<double> p_eou;
  MicDecision mic;
};

struct FinalResult {
  std::vector<int> tokens;
  std::optional<int> close_frame;      // model input frames
  std::optional<int> close_frame_raw;  // 10 ms raw-clock units
  MicTrigger trigger = MicTrigger::kNone;
  std::vector<PartialsEntry> partials;
};

class StreamState {
 public:
  // endpointing = false ignores the mic closer entirely (full decode).
  StreamState(const Model& model, const DecodeConfig& decode,
              const MicCloserConfig& mic, bool endpointing = true);

  // Feeds one model input frame (1 x input_dim). Throws once the mic
  // has closed or after finalize.
  StepOutput step(const Tensor& frame);

  bool mic_closed() const { return closed_; }
  int frames_consumed() const { return encoder_.frames_consumed(); }

  // Best hypothesis, close bookkeeping, and the partials log. The
  // stream becomes immutable; a second call throws.
  FinalResult finalize();

 private:
  const Model& model_;
  DecodeConfig decode_;
  MicCloserConfig mic_;
  bool endpointing_;

  StreamingEncoder encoder_;
  std::vector<Hypothesis> beam_;
  std::vector<double> final_sil_history_;
  std::vector<std::optional<double>> eou_history_;
  std::vector<PartialsEntry> partials_;
  bool closed_ = false;
  int close_frame_ = -1;
  MicTrigger trigger_ = MicTrigger::kNone;
  bool finalized_ = false;
};

// Whole-utterance decode through the batch encoder; the oracle the
// streaming path must match bit-for-bit.
std::vector<int> decode_offline(const Model& model, const Tensor& input_frames,
                                const DecodeConfig& cfg);

// Strips a trailing in-vocabulary EOU token (S4-style models).
std::vector<int> strip_eou(std::vector<int> tokens, int eou_id);

}  // namespace rnnt

#endif  // RNNT_DECODE_H_
