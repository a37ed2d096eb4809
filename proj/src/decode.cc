// src/decode.cc

#include "rnnt/decode.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rnnt/ops.h"
#include "rnnt/pipeline.h"
#include "rnnt/transducer.h"

namespace rnnt {

void DecodeConfig::validate() const {
  if (beam_size < 1) throw std::invalid_argument("decode: beam_size < 1");
  if (max_symbols_per_frame < 1) {
    throw std::invalid_argument("decode: max_symbols_per_frame < 1");
  }
}

void MicCloserConfig::validate() const {
  if (acoustic_threshold <= 0 || acoustic_threshold >= 1) {
    throw std::invalid_argument("mic: acoustic_threshold outside (0, 1)");
  }
  if (eou_threshold <= 0 || eou_threshold >= 1) {
    throw std::invalid_argument("mic: eou_threshold outside (0, 1)");
  }
  if (consecutive_frames < 1) {
    throw std::invalid_argument("mic: consecutive_frames < 1");
  }
}

const char* to_string(FusionRule rule) {
  switch (rule) {
    case FusionRule::kEither: return "either";
    case FusionRule::kAcousticOnly: return "acoustic_only";
    case FusionRule::kDecoderOnly: return "decoder_only";
  }
  return "?";
}

FusionRule fusion_rule_from_string(const std::string& s) {
  if (s == "either") return FusionRule::kEither;
  if (s == "acoustic_only") return FusionRule::kAcousticOnly;
  if (s == "decoder_only") return FusionRule::kDecoderOnly;
  throw std::invalid_argument("unknown fusion rule: " + s);
}

const char* to_string(MicTrigger trigger) {
  switch (trigger) {
    case MicTrigger::kNone: return "none";
    case MicTrigger::kAcoustic: return "acoustic";
    case MicTrigger::kDecoder: return "decoder";
  }
  return "?";
}

MicDecision mic_close_policy(
    const std::vector<double>& final_silence_posterior,
    const std::vector<std::optional<double>>& eou_probability,
    const MicCloserConfig& cfg) {
  cfg.validate();
  if (final_silence_posterior.size() != eou_probability.size()) {
    throw std::invalid_argument("mic_close_policy: history lengths differ");
  }
  const bool use_acoustic = cfg.fusion_rule != FusionRule::kDecoderOnly;
  const bool use_decoder = cfg.fusion_rule != FusionRule::kAcousticOnly;
  int run = 0;
  for (size_t i = 0; i < final_silence_posterior.size(); ++i) {
    run = final_silence_posterior[i] >= cfg.acoustic_threshold ? run + 1 : 0;
    if (use_acoustic && run >= cfg.consecutive_frames) {
      return {true, static_cast<int>(i), MicTrigger::kAcoustic};
    }
    if (use_decoder && eou_probability[i].has_value() &&
        *eou_probability[i] >= cfg.eou_threshold) {
      return {true, static_cast<int>(i), MicTrigger::kDecoder};
    }
  }
  return {};
}

namespace {

// Log-probabilities over the recognition output for one hypothesis.
std::vector<double> recognition_log_probs(const Model& model,
                                          const Tensor& enc_frame,
                                          const Hypothesis& hyp) {
  Tensor logits = model.joint_logits(enc_frame, hyp.pred.output, false);
  Tensor lp = log_softmax(logits);
  return lp.vec();
}

struct Candidate {
  std::vector<int> tokens;
  double log_score;
  const Hypothesis* parent;
  int emitted;  // token appended to the parent
};

void greedy_advance(const Model& model, const Tensor& enc_frame,
                    const DecodeConfig& cfg, std::vector<Hypothesis>& beam) {
  Hypothesis hyp = std::move(beam.front());
  for (int s = 0; s < cfg.max_symbols_per_frame; ++s) {
    const auto lp = recognition_log_probs(model, enc_frame, hyp);
    int argmax = 0;
    for (size_t k = 1; k < lp.size(); ++k) {
      if (lp[k] > lp[static_cast<size_t>(argmax)]) argmax = static_cast<int>(k);
    }
    const bool terminal =
        model.config().eou_in_vocab && !hyp.tokens.empty() &&
        hyp.tokens.back() == model.config().eou_id();
    if (argmax == 0 || terminal) {
      hyp.log_score += lp[0];
      beam.front() = std::move(hyp);
      return;
    }
    hyp.log_score += lp[static_cast<size_t>(argmax)];
    hyp.tokens.push_back(argmax);
    hyp.pred = model.predictor_advance(hyp.pred, argmax);
  }
  // Emission budget exhausted: take the blank to the next frame.
  const auto lp = recognition_log_probs(model, enc_frame, hyp);
  hyp.log_score += lp[0];
  beam.front() = std::move(hyp);
}

}  // namespace

void advance_beam(const Model& model, const Tensor& enc_frame,
                  const DecodeConfig& cfg, std::vector<Hypothesis>& beam) {
  cfg.validate();
  if (beam.empty()) throw std::invalid_argument("advance_beam: empty beam");
  if (cfg.beam_size == 1) {
    greedy_advance(model, enc_frame, cfg, beam);
    return;
  }

  const int eou_id = model.config().eou_id();
  const bool eou_terminal = model.config().eou_in_vocab;

  // Hypotheses still expandable within this frame, keyed by tokens.
  std::map<std::vector<int>, Hypothesis> active;
  for (auto& hyp : beam) active.emplace(hyp.tokens, std::move(hyp));
  // Hypotheses that consumed the frame via blank.
  std::map<std::vector<int>, Hypothesis> settled;

  for (int s = 0; s <= cfg.max_symbols_per_frame; ++s) {
    std::vector<Candidate> candidates;
    for (auto& [tokens, hyp] : active) {
      const auto lp = recognition_log_probs(model, enc_frame, hyp);
      const double blank_score = hyp.log_score + lp[0];
      auto it = settled.find(tokens);
      if (it == settled.end()) {
        Hypothesis h = hyp;
        h.log_score = blank_score;
        settled.emplace(tokens, std::move(h));
      } else {
        it->second.log_score = log_sum_exp(it->second.log_score, blank_score);
      }
      if (s == cfg.max_symbols_per_frame) continue;
      const bool terminal =
          eou_terminal && !tokens.empty() && tokens.back() == eou_id;
      if (terminal) continue;
      for (size_t k = 1; k < lp.size(); ++k) {
        const double score = hyp.log_score + lp[k];
        // Expansions that lose to their parent's blank never lead the
        // beam; dropping them keeps the frame loop bounded.
        if (score <= blank_score) continue;
        Candidate cand;
        cand.tokens = tokens;
        cand.tokens.push_back(static_cast<int>(k));
        cand.log_score = score;
        cand.parent = &hyp;
        cand.emitted = static_cast<int>(k);
        candidates.push_back(std::move(cand));
      }
    }
    if (candidates.empty()) break;

    // Merge same-token candidates, keep the top beam_size.
    std::map<std::vector<int>, Candidate*> merged;
    for (auto& cand : candidates) {
      auto it = merged.find(cand.tokens);
      if (it == merged.end()) {
        merged.emplace(cand.tokens, &cand);
      } else {
        it->second->log_score = log_sum_exp(it->second->log_score, cand.log_score);
      }
    }
    std::vector<Candidate*> ranked;
    ranked.reserve(merged.size());
    for (auto& [tokens, cand] : merged) ranked.push_back(cand);
    std::sort(ranked.begin(), ranked.end(), [](const Candidate* a, const Candidate* b) {
      if (a->log_score != b->log_score) return a->log_score > b->log_score;
      return a->tokens < b->tokens;
    });
    if (static_cast<int>(ranked.size()) > cfg.beam_size) {
      ranked.resize(static_cast<size_t>(cfg.beam_size));
    }

    std::map<std::vector<int>, Hypothesis> next_active;
    for (const Candidate* cand : ranked) {
      Hypothesis h;
      h.tokens = cand->tokens;
      h.log_score = cand->log_score;
      h.pred = model.predictor_advance(cand->parent->pred, cand->emitted);
      next_active.emplace(h.tokens, std::move(h));
    }
    active = std::move(next_active);
  }

  std::vector<Hypothesis> merged;
  merged.reserve(settled.size());
  for (auto& [tokens, hyp] : settled) merged.push_back(std::move(hyp));
  std::sort(merged.begin(), merged.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.log_score != b.log_score) return a.log_score > b.log_score;
    return a.tokens < b.tokens;
  });
  if (static_cast<int>(merged.size()) > cfg.beam_size) {
    merged.resize(static_cast<size_t>(cfg.beam_size));
  }
  beam = std::move(merged);
}

std::string format_partials_line(const PartialsEntry& entry) {
  std::ostringstream os;
  os << entry.frame << '\t' << entry.ms << '\t';
  if (entry.tokens.empty()) {
    os << '-';
  } else {
    for (size_t i = 0; i < entry.tokens.size(); ++i) {
      if (i) os << ',';
      os << entry.tokens[i];
    }
  }
  os << '\t';
  for (int c = 0; c < 4; ++c) {
    if (c) os << ' ';
    os << entry.ep_posterior[static_cast<size_t>(c)];
  }
  os << '\t';
  if (entry.p_eou.has_value()) {
    os << *entry.p_eou;
  } else {
    os << '-';
  }
  os << '\t' << (entry.mic_closed ? 1 : 0);
  return os.str();
}

StreamState::StreamState(const Model& model, const DecodeConfig& decode,
                         const MicCloserConfig& mic, bool endpointing)
    : model_(model),
      decode_(decode),
      mic_(mic),
      endpointing_(endpointing),
      encoder_(model) {
  decode_.validate();
  mic_.validate();
  Hypothesis root;
  root.log_score = 0.0;
  root.pred = model_.predictor_initial_state();
  beam_.push_back(std::move(root));
}

StepOutput StreamState::step(const Tensor& frame) {
  if (finalized_) throw std::runtime_error("stream_step after finalize");
  if (closed_) {
    throw std::runtime_error("stream_step: microphone already closed at frame " +
                             std::to_string(close_frame_));
  }

  auto enc_step = encoder_.step(frame);
  const int frame_index = encoder_.frames_consumed() - 1;

  StepOutput out;
  {
    Tensor lp = log_softmax(enc_step.ep_logits);
    for (int c = 0; c < 4; ++c) {
      out.ep_posterior[static_cast<size_t>(c)] = std::exp(lp.at(0, c));
    }
  }
  final_sil_history_.push_back(out.ep_posterior[kEpFinalSilence]);

  if (enc_step.encoder_frame.has_value()) {
    advance_beam(model_, *enc_step.encoder_frame, decode_, beam_);
    const bool in_vocab = model_.config().eou_in_vocab;
    if (in_vocab || model_.config().has_eou_joint) {
      const int count = decode_.eou_over_beam ? static_cast<int>(beam_.size()) : 1;
      double best = 0.0;
      for (int i = 0; i < count; ++i) {
        Tensor logits = model_.joint_logits(
            *enc_step.encoder_frame, beam_[static_cast<size_t>(i)].pred.output,
            /*use_eou_joint=*/!in_vocab);
        Tensor lp = log_softmax(logits);
        best = std::max(best, std::exp(lp.at(0, lp.dim(1) - 1)));
      }
      out.p_eou = best;
    }
  }
  eou_history_.push_back(out.p_eou);

  if (endpointing_) {
    out.mic = mic_close_policy(final_sil_history_, eou_history_, mic_);
    if (out.mic.close) {
      closed_ = true;
      close_frame_ = out.mic.frame;
      trigger_ = out.mic.trigger;
    }
  }
  out.partial_best = beam_.front().tokens;

  PartialsEntry entry;
  entry.frame = frame_index;
  entry.ms = (frame_index + 1) * kRawFrameMs * kStackFactor;
  entry.tokens = out.partial_best;
  entry.ep_posterior = out.ep_posterior;
  entry.p_eou = out.p_eou;
  entry.mic_closed = closed_;
  partials_.push_back(std::move(entry));
  return out;
}

FinalResult StreamState::finalize() {
  if (finalized_) throw std::runtime_error("finalize called twice");
  finalized_ = true;
  FinalResult result;
  result.tokens = beam_.front().tokens;
  if (closed_) {
    result.close_frame = close_frame_;
    result.close_frame_raw = model_frame_to_raw_end(close_frame_);
    result.trigger = trigger_;
  }
  result.partials = partials_;
  return result;
}

std::vector<int> decode_offline(const Model& model, const Tensor& input_frames,
                                const DecodeConfig& cfg) {
  auto enc = model.encoder_forward(input_frames);
  std::vector<Hypothesis> beam;
  Hypothesis root;
  root.log_score = 0.0;
  root.pred = model.predictor_initial_state();
  beam.push_back(std::move(root));
  for (int t = 0; t < enc.encoder.dim(0); ++t) {
    advance_beam(model, slice_rows(enc.encoder, t, 1), cfg, beam);
  }
  return beam.front().tokens;
}

std::vector<int> strip_eou(std::vector<int> tokens, int eou_id) {
  while (!tokens.empty() && tokens.back() == eou_id) tokens.pop_back();
  return tokens;
}

}  // namespace rnnt
