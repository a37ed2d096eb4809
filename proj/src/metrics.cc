// src/metrics.cc

#include "rnnt/metrics.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rnnt/frontend.h"
#include "rnnt/synthdata.h"

namespace rnnt {

double wer(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const size_t n = ref.size(), m = hyp.size();
  if (n == 0) return m == 0 ? 0.0 : static_cast<double>(m);
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(n);
}

double nearest_rank_percentile(std::vector<double> values, double p) {
  if (values.empty()) {
    throw std::invalid_argument("nearest_rank_percentile: empty list");
  }
  std::sort(values.begin(), values.end());
  const int n = static_cast<int>(values.size());
  int rank = static_cast<int>(std::ceil(p * n));
  rank = std::clamp(rank, 1, n);
  return values[static_cast<size_t>(rank - 1)];
}

EpLatencyReport ep_latency_report(const std::vector<EpUtteranceResult>& results) {
  EpLatencyReport report;
  report.total = static_cast<int>(results.size());
  if (results.empty()) return report;
  std::vector<double> latencies;
  int early = 0, never = 0;
  for (const auto& r : results) {
    if (!r.close_frame.has_value()) {
      ++never;
      continue;
    }
    const double ms = (*r.close_frame - r.eos_frame) * kRawFrameMs;
    if (ms < 0) {
      ++early;
    } else {
      latencies.push_back(ms);
    }
  }
  report.measured = static_cast<int>(latencies.size());
  report.early_endpoint_rate = static_cast<double>(early) / report.total;
  report.no_close_rate = static_cast<double>(never) / report.total;
  if (!latencies.empty()) {
    report.ep50_ms = nearest_rank_percentile(latencies, 0.5);
    report.ep90_ms = nearest_rank_percentile(latencies, 0.9);
  }
  return report;
}

std::optional<double> final_silence_accuracy(const Tensor& ep_logits,
                                             const std::vector<int>& labels) {
  if (ep_logits.rank() != 2 || ep_logits.dim(1) != 4 ||
      ep_logits.dim(0) != static_cast<int>(labels.size())) {
    throw std::invalid_argument("final_silence_accuracy: shape mismatch");
  }
  int64_t total = 0, correct = 0;
  for (int t = 0; t < ep_logits.dim(0); ++t) {
    if (labels[static_cast<size_t>(t)] != kEpFinalSilence) continue;
    int argmax = 0;
    for (int c = 1; c < 4; ++c) {
      if (ep_logits.at(t, c) > ep_logits.at(t, argmax)) argmax = c;
    }
    ++total;
    correct += argmax == kEpFinalSilence ? 1 : 0;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

RtReport rt_factor_report(
    const std::vector<std::pair<double, double>>& processing_audio_seconds) {
  if (processing_audio_seconds.empty()) {
    throw std::invalid_argument("rt_factor_report: no utterances");
  }
  std::vector<double> ratios;
  ratios.reserve(processing_audio_seconds.size());
  for (const auto& [proc, audio] : processing_audio_seconds) {
    if (audio <= 0) {
      throw std::invalid_argument("rt_factor_report: zero-length audio");
    }
    ratios.push_back(proc / audio);
  }
  return {nearest_rank_percentile(ratios, 0.5),
          nearest_rank_percentile(ratios, 0.9)};
}

int64_t decoder_macs_per_step(const ModelConfig& cfg) {
  const int64_t dp = cfg.predictor_dim;
  int64_t predictor = 0;
  if (cfg.predictor_kind == PredictorKind::kLstm) {
    for (int l = 0; l < cfg.predictor_layers; ++l) {
      predictor += 4 * (dp + dp) * dp;
    }
  } else {
    predictor = static_cast<int64_t>(cfg.predictor_context_size) * dp * dp;
  }
  const int64_t j = cfg.joint_dim;
  const int64_t joint = static_cast<int64_t>(cfg.encoder_out_dim()) * j +
                        dp * j + j * cfg.recognition_width();
  return predictor + joint;
}

int64_t param_bytes(const ModelConfig& cfg, bool fp32) {
  return Model::expected_param_count(cfg) * (fp32 ? 4 : 8);
}

int64_t activation_bytes_estimate(const ModelConfig& cfg, int input_frames,
                                  int beam_size) {
  const int64_t d0 = cfg.enc_dim();
  const int64_t k = cfg.conv_kernel_size;
  const int64_t t_full = std::max(1, input_frames);
  const int64_t t_half = std::max<int64_t>(1, t_full / 2);
  auto window = [&](int64_t t_rate) {
    return cfg.attention_left_context < 0
               ? t_rate
               : std::min<int64_t>(t_rate, cfg.attention_left_context + 1);
  };
  int64_t values = 0;
  // Block 0 caches: conv history + attention K/V per layer.
  values += cfg.b0_layers() * (k * d0 + 2 * window(t_full) * d0);
  for (int w : cfg.b1_widths()) {
    values += k * w + 2 * window(t_half) * w;
  }
  // Endpointer branch state.
  switch (cfg.ep_branch_kind) {
    case EpBranchKind::kStandaloneLstm:
    case EpBranchKind::kLstmBranch:
      values += 2 * cfg.ep_layers * cfg.ep_dim;
      break;
    case EpBranchKind::kConformerBranch:
      values += k * cfg.ep_dim + 2 * window(t_full) * cfg.ep_dim;
      break;
    case EpBranchKind::kProjectionOnly:
      break;
  }
  // Beam predictor state plus one set of per-frame temporaries.
  const int64_t per_hyp =
      cfg.predictor_kind == PredictorKind::kLstm
          ? 2 * cfg.predictor_layers * cfg.predictor_dim + cfg.predictor_dim
          : cfg.predictor_context_size + cfg.predictor_dim;
  values += beam_size * per_hyp;
  values += 4 * d0 + cfg.ffn_multiplier * d0;  // transient rows
  return values * 8;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["per_language_wer"] = per_language_wer;
  j["macro_avg_wer"] = macro_avg_wer;
  if (ep.has_value()) {
    nlohmann::json e;
    if (ep->ep50_ms.has_value()) e["ep50_ms"] = *ep->ep50_ms;
    if (ep->ep90_ms.has_value()) e["ep90_ms"] = *ep->ep90_ms;
    e["early_endpoint_rate"] = ep->early_endpoint_rate;
    e["no_close_rate"] = ep->no_close_rate;
    e["measured"] = ep->measured;
    e["total"] = ep->total;
    j["endpoint_latency"] = e;
  }
  if (final_silence_acc.has_value()) j["final_silence_accuracy"] = *final_silence_acc;
  if (wer_endpointed.has_value()) j["wer_endpointed"] = *wer_endpointed;
  if (rt.has_value()) {
    j["rt50"] = rt->rt50;
    j["rt90"] = rt->rt90;
  }
  if (median_first_emission_ms.has_value()) {
    j["median_first_emission_ms"] = *median_first_emission_ms;
  }
  j["param_bytes"] = param_bytes;
  j["activation_bytes"] = activation_bytes;
  j["decoder_macs_per_step"] = decoder_macs;
  return j;
}

std::string MetricsReport::table_header() {
  return "label\tmacro_wer\tep50_ms\tep90_ms\trt50\trt90\tdecoder_macs\t"
         "param_bytes";
}

std::string MetricsReport::table_row(const std::string& label) const {
  std::ostringstream os;
  auto opt = [](const std::optional<double>& v) {
    return v.has_value() ? std::to_string(*v) : std::string("-");
  };
  os << label << '\t' << macro_avg_wer << '\t'
     << (ep.has_value() ? opt(ep->ep50_ms) : "-") << '\t'
     << (ep.has_value() ? opt(ep->ep90_ms) : "-") << '\t'
     << (rt.has_value() ? std::to_string(rt->rt50) : "-") << '\t'
     << (rt.has_value() ? std::to_string(rt->rt90) : "-") << '\t'
     << decoder_macs << '\t' << param_bytes;
  return os.str();
}

}  // namespace rnnt
