// rnnt/frontend.h
//
// Feature pipeline: global mean/std normalization, 3-frame stacking and
// subsampling, SpecAugment masking, optional one-hot language vector.
// All functions are pure; RNG state is an explicit argument.

#ifndef RNNT_FRONTEND_H_
#define RNNT_FRONTEND_H_

#include <random>
#include <vector>

#include "rnnt/tensor.h"

namespace rnnt {

inline constexpr double kStdFloor = 1e-8;
inline constexpr int kStackFactor = 3;
inline constexpr double kRawFrameMs = 10.0;

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at kStdFloor
  uint64_t count = 0;

  int dim() const { return static_cast<int>(mean.size()); }
};

struct AugmentConfig {
  bool enabled = false;
  int num_freq_masks = 2;
  int max_freq_mask_width = 27;
  int num_time_masks = 2;
  int max_time_mask_width = 50;
};

// Exact pooled per-dimension mean and population std over all frames of
// all utterances, in dataset order. Throws on an empty dataset.
FeatureStats compute_global_stats(const std::vector<Tensor>& frame_sets);

// (x - mean) / std elementwise. frames: T x d.
Tensor normalize(const Tensor& frames, const FeatureStats& stats);
// Inverse of normalize (used by tests).
Tensor denormalize(const Tensor& frames, const FeatureStats& stats);

// T x d -> ceil(T/3) x 3d; output row i concatenates input rows
// 3i, 3i+1, 3i+2 with zero padding past the tail.
Tensor stack_and_subsample(const Tensor& frames);

// Zero-fills uniformly drawn frequency (feature) and time bands.
// Disabled or zero-width config is the identity.
Tensor spec_augment(const Tensor& frames, const AugmentConfig& cfg,
                    std::mt19937_64& rng);

// Appends a one-hot language vector to every frame.
Tensor concat_lid(const Tensor& frames, int language_index, int num_languages);

}  // namespace rnnt

#endif  // RNNT_FRONTEND_H_
