// src/frontend.cc

#include "rnnt/frontend.h"

#include <cmath>
#include <stdexcept>

namespace rnnt {

FeatureStats compute_global_stats(const std::vector<Tensor>& frame_sets) {
  int d = -1;
  uint64_t count = 0;
  for (const auto& frames : frame_sets) {
    if (!frames.defined() || frames.rank() != 2) {
      throw std::invalid_argument("compute_global_stats: frames must be T x d");
    }
    if (d < 0) d = frames.dim(1);
    if (frames.dim(1) != d) {
      throw std::invalid_argument("compute_global_stats: width mismatch");
    }
    count += static_cast<uint64_t>(frames.dim(0));
  }
  if (count == 0) {
    throw std::invalid_argument("compute_global_stats: empty dataset");
  }

  FeatureStats stats;
  stats.count = count;
  stats.mean.assign(static_cast<size_t>(d), 0.0);
  stats.stddev.assign(static_cast<size_t>(d), 0.0);

  // Two-pass: exact pooled mean, then population variance.
  for (const auto& frames : frame_sets) {
    for (int t = 0; t < frames.dim(0); ++t) {
      for (int c = 0; c < d; ++c) {
        stats.mean[static_cast<size_t>(c)] += frames.at(t, c);
      }
    }
  }
  for (int c = 0; c < d; ++c) stats.mean[static_cast<size_t>(c)] /= static_cast<double>(count);

  for (const auto& frames : frame_sets) {
    for (int t = 0; t < frames.dim(0); ++t) {
      for (int c = 0; c < d; ++c) {
        const double delta = frames.at(t, c) - stats.mean[static_cast<size_t>(c)];
        stats.stddev[static_cast<size_t>(c)] += delta * delta;
      }
    }
  }
  for (int c = 0; c < d; ++c) {
    double var = stats.stddev[static_cast<size_t>(c)] / static_cast<double>(count);
    stats.stddev[static_cast<size_t>(c)] = std::max(std::sqrt(var), kStdFloor);
  }
  return stats;
}

Tensor normalize(const Tensor& frames, const FeatureStats& stats) {
  if (frames.rank() != 2 || frames.dim(1) != stats.dim()) {
    throw std::invalid_argument("normalize: dimension mismatch");
  }
  Tensor out = Tensor::zeros(frames.shape());
  for (int t = 0; t < frames.dim(0); ++t) {
    for (int c = 0; c < frames.dim(1); ++c) {
      out.at(t, c) = (frames.at(t, c) - stats.mean[static_cast<size_t>(c)]) /
                     stats.stddev[static_cast<size_t>(c)];
    }
  }
  return out;
}

Tensor denormalize(const Tensor& frames, const FeatureStats& stats) {
  if (frames.rank() != 2 || frames.dim(1) != stats.dim()) {
    throw std::invalid_argument("denormalize: dimension mismatch");
  }
  Tensor out = Tensor::zeros(frames.shape());
  for (int t = 0; t < frames.dim(0); ++t) {
    for (int c = 0; c < frames.dim(1); ++c) {
      out.at(t, c) = frames.at(t, c) * stats.stddev[static_cast<size_t>(c)] +
                     stats.mean[static_cast<size_t>(c)];
    }
  }
  return out;
}

Tensor stack_and_subsample(const Tensor& frames) {
  if (frames.rank() != 2 || frames.dim(0) < 1) {
    throw std::invalid_argument("stack_and_subsample: expects T x d, T >= 1");
  }
  const int t_in = frames.dim(0), d = frames.dim(1);
  const int t_out = (t_in + kStackFactor - 1) / kStackFactor;
  Tensor out = Tensor::zeros({t_out, kStackFactor * d});
  for (int i = 0; i < t_out; ++i) {
    for (int k = 0; k < kStackFactor; ++k) {
      const int src = kStackFactor * i + k;
      if (src >= t_in) break;  // zero padded tail
      for (int c = 0; c < d; ++c) out.at(i, k * d + c) = frames.at(src, c);
    }
  }
  return out;
}

Tensor spec_augment(const Tensor& frames, const AugmentConfig& cfg,
                    std::mt19937_64& rng) {
  if (frames.rank() != 2) {
    throw std::invalid_argument("spec_augment: expects T x d");
  }
  Tensor out = frames.clone();
  if (!cfg.enabled) return out;
  const int t_len = frames.dim(0), d = frames.dim(1);

  auto draw = [&rng](int lo, int hi) {  // inclusive bounds
    std::uniform_int_distribution<int> dist(lo, hi);
    return dist(rng);
  };

  for (int m = 0; m < cfg.num_freq_masks; ++m) {
    const int width = draw(0, std::min(cfg.max_freq_mask_width, d));
    if (width == 0) continue;
    const int start = draw(0, d - width);
    for (int t = 0; t < t_len; ++t) {
      for (int c = start; c < start + width; ++c) out.at(t, c) = 0.0;
    }
  }
  for (int m = 0; m < cfg.num_time_masks; ++m) {
    const int width = draw(0, std::min(cfg.max_time_mask_width, t_len));
    if (width == 0) continue;
    const int start = draw(0, t_len - width);
    for (int t = start; t < start + width; ++t) {
      for (int c = 0; c < d; ++c) out.at(t, c) = 0.0;
    }
  }
  return out;
}

Tensor concat_lid(const Tensor& frames, int language_index, int num_languages) {
  if (frames.rank() != 2) {
    throw std::invalid_argument("concat_lid: expects T x d");
  }
  if (language_index < 0 || language_index >= num_languages) {
    throw std::invalid_argument("concat_lid: language index " +
                                std::to_string(language_index) +
                                " outside [0, " +
                                std::to_string(num_languages) + ")");
  }
  const int t_len = frames.dim(0), d = frames.dim(1);
  Tensor out = Tensor::zeros({t_len, d + num_languages});
  for (int t = 0; t < t_len; ++t) {
    for (int c = 0; c < d; ++c) out.at(t, c) = frames.at(t, c);
    out.at(t, d + language_index) = 1.0;
  }
  return out;
}

}  // namespace rnnt
