// rnnt/synthdata.h
//
// Deterministic synthetic multilingual corpus. Token sequences are
// rendered to feature frames with an initial-silence prefix, optional
// short intermediate silences, and a final-silence tail. Per-frame
// endpointer labels follow the grammar 1* (0|2)* 3+.

#ifndef RNNT_SYNTHDATA_H_
#define RNNT_SYNTHDATA_H_

#include <random>
#include <string>
#include <vector>

#include "rnnt/tensor.h"

namespace rnnt {

// Frame endpointer classes.
inline constexpr int kEpSpeech = 0;
inline constexpr int kEpInitialSilence = 1;
inline constexpr int kEpIntermediateSilence = 2;
inline constexpr int kEpFinalSilence = 3;

inline constexpr int kTokenTemplateFrames = 4;

struct LanguageSpec {
  int language_id = 0;
  std::vector<int> token_ids;          // shared-vocabulary ids, 1-based
  std::vector<Tensor> token_templates; // one 4 x d prototype per token
  std::vector<double> unigram_weights; // sampling weights, same length

  int feature_dim() const {
    return token_templates.empty() ? 0 : token_templates.front().dim(1);
  }
};

struct UtteranceRecord {
  std::string id;
  std::string language_tag;  // "lang<k>" or "cs"; metadata only
  std::vector<int> tokens;   // target ids, no EOU
  Tensor frames;             // T x d raw feature frames (10 ms clock)
  std::vector<int> ep_labels;
  int eos_frame = 0;         // first final-silence frame index
};

struct SilenceConfig {
  int initial_min = 2;
  int initial_max = 5;
  double gap_probability = 0.25;  // chance of a pause between tokens
  int gap_min = 1;
  int gap_max = 2;
  int final_min = 18;
  int final_max = 28;
};

// Deterministic for a fixed rng state. Templates are drawn around a
// per-language cluster center so languages stay acoustically apart.
LanguageSpec make_language_spec(int language_id,
                                const std::vector<int>& vocab_slice, int d,
                                std::mt19937_64& rng);

UtteranceRecord synth_utterance(const LanguageSpec& spec, int num_tokens,
                                const SilenceConfig& silence, double noise_std,
                                std::mt19937_64& rng);

// Per-language segments separated by intermediate silence, one final
// tail. Segment languages alternate over `specs`.
UtteranceRecord synth_codeswitch_utterance(
    const std::vector<const LanguageSpec*>& specs, int per_segment_tokens,
    const SilenceConfig& silence, double noise_std, std::mt19937_64& rng);

// Checks the 1*(0|2)*3+ label grammar and eos consistency; throws on
// violation (generator self-check, also used when loading).
void validate_record(const UtteranceRecord& record);

// Line-delimited text dataset with a one-line header. Bit-exact
// round-trip; parse errors name the offending line.
void write_dataset(const std::vector<UtteranceRecord>& records,
                   const std::string& path);
std::vector<UtteranceRecord> read_dataset(const std::string& path);

}  // namespace rnnt

#endif  // RNNT_SYNTHDATA_H_
