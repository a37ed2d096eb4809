// rnnt/metrics.h
//
// Quality and latency measurement: WER, nearest-rank percentiles,
// endpoint latency, final-silence accuracy, real-time factors, and
// closed-form decoder cost accounting.

#ifndef RNNT_METRICS_H_
#define RNNT_METRICS_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rnnt/model.h"
#include "rnnt/tensor.h"

namespace rnnt {

// Levenshtein(sub+ins+del) / len(ref). An empty reference scores 0
// against an empty hypothesis and len(hyp)/1 otherwise.
double wer(const std::vector<int>& ref, const std::vector<int>& hyp);

// Sort ascending, return the element at 1-based index ceil(p * N),
// clamped to [1, N]. Always a member of the input.
double nearest_rank_percentile(std::vector<double> values, double p);

struct EpUtteranceResult {
  std::optional<int> close_frame;  // raw 10 ms units
  int eos_frame = 0;               // first true final-silence frame
};

struct EpLatencyReport {
  std::optional<double> ep50_ms;
  std::optional<double> ep90_ms;
  double early_endpoint_rate = 0.0;  // closed before eos
  double no_close_rate = 0.0;
  int measured = 0;  // utterances in the percentile pool
  int total = 0;
};

// latency_ms = (close_frame - eos_frame) * 10ms, measured relative to
// the first true final-silence frame. Early closes leave the
// percentile pool; never-closed utterances count separately.
EpLatencyReport ep_latency_report(const std::vector<EpUtteranceResult>& results);

// Over frames whose true label is final silence: fraction classified
// as final silence. Absent when no such frames exist.
std::optional<double> final_silence_accuracy(const Tensor& ep_logits,
                                             const std::vector<int>& labels);

struct RtReport {
  double rt50 = 0.0;
  double rt90 = 0.0;
};

// Per-utterance processing/audio ratios, nearest-rank percentiles.
RtReport rt_factor_report(
    const std::vector<std::pair<double, double>>& processing_audio_seconds);

// Multiply-accumulates per emitted token: one prediction-network
// advance plus one joint evaluation.
//   LSTM:      sum over layers of 4*(d_in + d_h)*d_h
//   embedding: context_size * d_pred^2 (context projection)
//   joint:     d_enc*J + d_pred*J + J*K
// predictor_layers = 0 degenerates to the joint-only count.
int64_t decoder_macs_per_step(const ModelConfig& cfg);

int64_t param_bytes(const ModelConfig& cfg, bool fp32 = false);

// Live-activation estimate for a streaming decode at a reference
// utterance length: per-layer conv and attention caches plus beam
// predictor state, 8 bytes per value.
int64_t activation_bytes_estimate(const ModelConfig& cfg, int input_frames,
                                  int beam_size);

struct MetricsReport {
  std::map<std::string, double> per_language_wer;
  double macro_avg_wer = 0.0;
  std::optional<EpLatencyReport> ep;
  std::optional<double> final_silence_acc;
  std::optional<double> wer_endpointed = {};
  std::optional<RtReport> rt;
  std::optional<double> median_first_emission_ms;
  int64_t param_bytes = 0;
  int64_t activation_bytes = 0;
  int64_t decoder_macs = 0;

  nlohmann::json to_json() const;
  // Flat single-row table (tab-separated) for plotting.
  static std::string table_header();
  std::string table_row(const std::string& label) const;
};

}  // namespace rnnt

#endif  // RNNT_METRICS_H_
