// src/synthdata.cc

#include "rnnt/synthdata.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rnnt {

namespace {

double l2_distance(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = a.at(i) - b.at(i);
    acc += d * d;
  }
  return std::sqrt(acc);
}

int draw_int(std::mt19937_64& rng, int lo, int hi) {
  std::uniform_int_distribution<int> dist(lo, hi);
  return dist(rng);
}

// One utterance plan entry: a token index into the spec list, or a
// silence run of a given class.
struct Segment {
  int ep_class;      // kEpSpeech for tokens
  int token_pos;     // position into the flat token list when speech
  int frames;
};

UtteranceRecord render(const std::vector<const LanguageSpec*>& token_specs,
                       const std::vector<int>& tokens,
                       const std::vector<Segment>& plan, double noise_std,
                       std::mt19937_64& rng) {
  const int d = token_specs.front()->feature_dim();
  int total = 0;
  for (const auto& seg : plan) total += seg.frames;

  UtteranceRecord rec;
  rec.tokens = tokens;
  rec.frames = Tensor::zeros({total, d});
  rec.ep_labels.reserve(static_cast<size_t>(total));

  int t = 0;
  bool eos_seen = false;
  for (const auto& seg : plan) {
    if (seg.ep_class == kEpSpeech) {
      const LanguageSpec* spec = token_specs[static_cast<size_t>(seg.token_pos)];
      const int token = tokens[static_cast<size_t>(seg.token_pos)];
      int which = -1;
      for (size_t i = 0; i < spec->token_ids.size(); ++i) {
        if (spec->token_ids[i] == token) which = static_cast<int>(i);
      }
      const Tensor& tmpl = spec->token_templates[static_cast<size_t>(which)];
      for (int f = 0; f < seg.frames; ++f, ++t) {
        for (int c = 0; c < d; ++c) rec.frames.at(t, c) = tmpl.at(f, c);
        rec.ep_labels.push_back(kEpSpeech);
      }
    } else {
      if (seg.ep_class == kEpFinalSilence && !eos_seen) {
        rec.eos_frame = t;
        eos_seen = true;
      }
      for (int f = 0; f < seg.frames; ++f, ++t) {
        rec.ep_labels.push_back(seg.ep_class);
      }
    }
  }
  if (noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_std);
    for (int64_t i = 0; i < rec.frames.numel(); ++i) {
      rec.frames.at(i) += noise(rng);
    }
  }
  validate_record(rec);
  return rec;
}

}  // namespace

LanguageSpec make_language_spec(int language_id,
                                const std::vector<int>& vocab_slice, int d,
                                std::mt19937_64& rng) {
  if (vocab_slice.empty()) {
    throw std::invalid_argument("make_language_spec: empty vocab slice");
  }
  LanguageSpec spec;
  spec.language_id = language_id;
  spec.token_ids = vocab_slice;

  // Language cluster center keeps languages acoustically apart; token
  // templates scatter around it.
  Tensor center = Tensor::randn({d}, rng, 2.0);
  for (size_t i = 0; i < vocab_slice.size(); ++i) {
    Tensor tmpl = Tensor::randn({kTokenTemplateFrames, d}, rng, 1.0);
    for (int f = 0; f < kTokenTemplateFrames; ++f) {
      for (int c = 0; c < d; ++c) tmpl.at(f, c) += center.at(c);
    }
    spec.token_templates.push_back(std::move(tmpl));
    std::uniform_real_distribution<double> w(0.5, 1.5);
    spec.unigram_weights.push_back(w(rng));
  }
  for (size_t i = 0; i < spec.token_templates.size(); ++i) {
    for (size_t j = i + 1; j < spec.token_templates.size(); ++j) {
      if (l2_distance(spec.token_templates[i], spec.token_templates[j]) <= 0) {
        throw std::runtime_error("make_language_spec: coincident templates");
      }
    }
  }
  return spec;
}

UtteranceRecord synth_utterance(const LanguageSpec& spec, int num_tokens,
                                const SilenceConfig& silence, double noise_std,
                                std::mt19937_64& rng) {
  if (num_tokens < 1) {
    throw std::invalid_argument("synth_utterance: num_tokens must be >= 1");
  }
  std::vector<int> tokens;
  std::discrete_distribution<int> pick(spec.unigram_weights.begin(),
                                       spec.unigram_weights.end());
  for (int i = 0; i < num_tokens; ++i) {
    tokens.push_back(spec.token_ids[static_cast<size_t>(pick(rng))]);
  }

  std::vector<Segment> plan;
  plan.push_back({kEpInitialSilence, -1,
                  draw_int(rng, silence.initial_min, silence.initial_max)});
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int i = 0; i < num_tokens; ++i) {
    if (i > 0 && coin(rng) < silence.gap_probability) {
      plan.push_back({kEpIntermediateSilence, -1,
                      draw_int(rng, silence.gap_min, silence.gap_max)});
    }
    plan.push_back({kEpSpeech, i, kTokenTemplateFrames});
  }
  plan.push_back({kEpFinalSilence, -1,
                  draw_int(rng, silence.final_min, silence.final_max)});

  std::vector<const LanguageSpec*> specs(tokens.size(), &spec);
  UtteranceRecord rec = render(specs, tokens, plan, noise_std, rng);
  rec.language_tag = "lang" + std::to_string(spec.language_id);
  return rec;
}

UtteranceRecord synth_codeswitch_utterance(
    const std::vector<const LanguageSpec*>& specs, int per_segment_tokens,
    const SilenceConfig& silence, double noise_std, std::mt19937_64& rng) {
  if (specs.size() < 2) {
    throw std::invalid_argument(
        "synth_codeswitch_utterance: needs at least 2 language segments");
  }
  if (per_segment_tokens < 1) {
    throw std::invalid_argument(
        "synth_codeswitch_utterance: per_segment_tokens must be >= 1");
  }

  std::vector<int> tokens;
  std::vector<const LanguageSpec*> token_specs;
  std::vector<Segment> plan;
  plan.push_back({kEpInitialSilence, -1,
                  draw_int(rng, silence.initial_min, silence.initial_max)});
  for (size_t s = 0; s < specs.size(); ++s) {
    if (s > 0) {
      // Mandatory pause at the switch point; none inside segments.
      plan.push_back({kEpIntermediateSilence, -1,
                      draw_int(rng, std::max(1, silence.gap_min),
                               std::max(1, silence.gap_max))});
    }
    std::discrete_distribution<int> pick(specs[s]->unigram_weights.begin(),
                                         specs[s]->unigram_weights.end());
    for (int i = 0; i < per_segment_tokens; ++i) {
      plan.push_back({kEpSpeech, static_cast<int>(tokens.size()),
                      kTokenTemplateFrames});
      tokens.push_back(specs[s]->token_ids[static_cast<size_t>(pick(rng))]);
      token_specs.push_back(specs[s]);
    }
  }
  plan.push_back({kEpFinalSilence, -1,
                  draw_int(rng, silence.final_min, silence.final_max)});

  UtteranceRecord rec = render(token_specs, tokens, plan, noise_std, rng);
  rec.language_tag = "cs";
  return rec;
}

void validate_record(const UtteranceRecord& record) {
  const size_t t_len = record.ep_labels.size();
  if (record.frames.rank() != 2 ||
      static_cast<size_t>(record.frames.dim(0)) != t_len) {
    throw std::runtime_error("record: frame/label length mismatch");
  }
  // Grammar 1* (0|2)* 3+ with at least one 0; 2 only between speech.
  size_t i = 0;
  while (i < t_len && record.ep_labels[i] == kEpInitialSilence) ++i;
  bool speech_seen = false;
  int last_mid = -1;
  while (i < t_len && (record.ep_labels[i] == kEpSpeech ||
                       record.ep_labels[i] == kEpIntermediateSilence)) {
    if (record.ep_labels[i] == kEpIntermediateSilence && !speech_seen) {
      throw std::runtime_error("record: intermediate silence before speech");
    }
    speech_seen = speech_seen || record.ep_labels[i] == kEpSpeech;
    last_mid = record.ep_labels[i];
    ++i;
  }
  if (!speech_seen) throw std::runtime_error("record: no speech frames");
  if (last_mid == kEpIntermediateSilence) {
    throw std::runtime_error("record: intermediate silence before final");
  }
  const size_t eos = i;
  if (eos >= t_len) throw std::runtime_error("record: no final silence");
  while (i < t_len && record.ep_labels[i] == kEpFinalSilence) ++i;
  if (i != t_len) throw std::runtime_error("record: labels after final run");
  if (record.eos_frame != static_cast<int>(eos)) {
    throw std::runtime_error("record: eos_frame does not point at first final frame");
  }
}

namespace {

void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

[[noreturn]] void parse_fail(size_t line_no, const std::string& what) {
  throw std::runtime_error("dataset parse error at line " +
                           std::to_string(line_no) + ": " + what);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace

void write_dataset(const std::vector<UtteranceRecord>& records,
                   const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  const int d = records.empty() ? 0 : records.front().frames.dim(1);
  out << "rnntds v1 " << d << "\n";
  for (const auto& rec : records) {
    if (rec.id.find_first_of("\t\n") != std::string::npos ||
        rec.language_tag.find_first_of("\t\n") != std::string::npos) {
      throw std::runtime_error("record id/lang must not contain tab/newline");
    }
    validate_record(rec);
    std::string line;
    line += rec.id.empty() ? "-" : rec.id;
    line += '\t';
    line += rec.language_tag.empty() ? "-" : rec.language_tag;
    line += '\t';
    line += std::to_string(rec.tokens.size());
    for (int tok : rec.tokens) {
      line += ' ';
      line += std::to_string(tok);
    }
    line += '\t';
    line += std::to_string(rec.frames.dim(0));
    line += ' ';
    line += std::to_string(rec.frames.dim(1));
    for (int64_t i = 0; i < rec.frames.numel(); ++i) {
      line += ' ';
      append_double(line, rec.frames.at(i));
    }
    line += '\t';
    for (size_t i = 0; i < rec.ep_labels.size(); ++i) {
      if (i) line += ' ';
      line += std::to_string(rec.ep_labels[i]);
    }
    line += '\t';
    line += std::to_string(rec.eos_frame);
    out << line << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<UtteranceRecord> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("dataset parse error at line 1: missing header");
  }
  std::istringstream head(line);
  std::string magic, version;
  int dim = -1;
  if (!(head >> magic >> version >> dim) || magic != "rnntds" ||
      version != "v1" || dim < 0) {
    parse_fail(1, "bad header '" + line + "'");
  }

  std::vector<UtteranceRecord> records;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) parse_fail(line_no, "empty line");
    const auto fields = split_tabs(line);
    if (fields.size() != 6) {
      parse_fail(line_no, "expected 6 tab-separated fields, got " +
                              std::to_string(fields.size()));
    }
    UtteranceRecord rec;
    rec.id = fields[0] == "-" ? "" : fields[0];
    rec.language_tag = fields[1] == "-" ? "" : fields[1];

    {
      std::istringstream fs(fields[2]);
      size_t n = 0;
      if (!(fs >> n)) parse_fail(line_no, "bad token count");
      rec.tokens.resize(n);
      for (size_t i = 0; i < n; ++i) {
        if (!(fs >> rec.tokens[i])) parse_fail(line_no, "short token list");
      }
    }
    {
      std::istringstream fs(fields[3]);
      int t_len = 0, d = 0;
      if (!(fs >> t_len >> d) || t_len < 1 || d != dim) {
        parse_fail(line_no, "bad frame dimensions");
      }
      rec.frames = Tensor::zeros({t_len, d});
      for (int64_t i = 0; i < rec.frames.numel(); ++i) {
        std::string tokstr;
        if (!(fs >> tokstr)) parse_fail(line_no, "short frame data");
        char* end = nullptr;
        rec.frames.at(i) = std::strtod(tokstr.c_str(), &end);
        if (end == tokstr.c_str() || *end != '\0') {
          parse_fail(line_no, "bad float '" + tokstr + "'");
        }
      }
      std::string extra;
      if (fs >> extra) parse_fail(line_no, "trailing frame data");
    }
    {
      std::istringstream fs(fields[4]);
      int lab = 0;
      while (fs >> lab) rec.ep_labels.push_back(lab);
      if (static_cast<int>(rec.ep_labels.size()) != rec.frames.dim(0)) {
        parse_fail(line_no, "label count does not match frame count");
      }
    }
    {
      std::istringstream fs(fields[5]);
      if (!(fs >> rec.eos_frame)) parse_fail(line_no, "bad eos field");
    }
    try {
      validate_record(rec);
    } catch (const std::exception& e) {
      parse_fail(line_no, e.what());
    }
    records.push_back(std::move(rec));
  }
  if (in.bad()) throw std::runtime_error("read failed: " + path);
  return records;
}

}  // namespace rnnt
