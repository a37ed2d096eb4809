// src/pipeline.cc

#include "rnnt/pipeline.h"

#include <stdexcept>

namespace rnnt {

std::vector<int> downsample_ep_labels(const std::vector<int>& raw_labels,
                                      int factor) {
  if (factor < 1) throw std::invalid_argument("downsample: factor must be >= 1");
  const int t_raw = static_cast<int>(raw_labels.size());
  const int t_out = (t_raw + factor - 1) / factor;
  std::vector<int> out(static_cast<size_t>(t_out));
  for (int i = 0; i < t_out; ++i) {
    int count[4] = {0, 0, 0, 0};
    int last_pos[4] = {-1, -1, -1, -1};
    for (int k = 0; k < factor; ++k) {
      const int src = i * factor + k;
      if (src >= t_raw) break;
      const int lab = raw_labels[static_cast<size_t>(src)];
      count[lab] += 1;
      last_pos[lab] = k;
    }
    int best = 0;
    for (int lab = 1; lab < 4; ++lab) {
      if (count[lab] > count[best] ||
          (count[lab] == count[best] && last_pos[lab] > last_pos[best])) {
        best = lab;
      }
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

int language_index_from_tag(const std::string& tag) {
  if (tag.rfind("lang", 0) != 0 || tag.size() == 4) return -1;
  for (size_t i = 4; i < tag.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(tag[i]))) return -1;
  }
  return std::stoi(tag.substr(4));
}

Tensor model_input_from_record(const UtteranceRecord& record,
                               const FeatureStats& stats, int lid_dim,
                               const AugmentConfig* augment,
                               std::mt19937_64* rng) {
  Tensor frames = normalize(record.frames, stats);
  frames = stack_and_subsample(frames);
  if (augment != nullptr && augment->enabled) {
    if (rng == nullptr) {
      throw std::invalid_argument("model_input_from_record: augment needs rng");
    }
    frames = spec_augment(frames, *augment, *rng);
  }
  if (lid_dim > 0) {
    const int index = language_index_from_tag(record.language_tag);
    if (index < 0 || index >= lid_dim) {
      throw std::invalid_argument(
          "model_input_from_record: record '" + record.id +
          "' has no usable language tag for LID (tag '" + record.language_tag +
          "')");
    }
    frames = concat_lid(frames, index, lid_dim);
  }
  return frames;
}

int model_frame_to_raw_end(int model_frame) {
  return model_frame * kStackFactor + (kStackFactor - 1);
}

}  // namespace rnnt
