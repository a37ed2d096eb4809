// rnnt/pipeline.h
//
// Glue between corpus records and model inputs: feature preparation
// and endpointer label downsampling to the model frame rate.

#ifndef RNNT_PIPELINE_H_
#define RNNT_PIPELINE_H_

#include <optional>
#include <random>
#include <vector>

#include "rnnt/frontend.h"
#include "rnnt/synthdata.h"

namespace rnnt {

// Majority label over each window of `factor` raw frames; ties go to
// the label that appears latest in the window. The tail window uses
// only the real frames.
std::vector<int> downsample_ep_labels(const std::vector<int>& raw_labels,
                                      int factor = kStackFactor);

// "lang<k>" -> k; anything else (including "cs") -> -1.
int language_index_from_tag(const std::string& tag);

// normalize -> stack/subsample -> optional SpecAugment -> optional LID.
// lid_dim > 0 requires a parseable language tag.
Tensor model_input_from_record(const UtteranceRecord& record,
                               const FeatureStats& stats, int lid_dim,
                               const AugmentConfig* augment = nullptr,
                               std::mt19937_64* rng = nullptr);

// Raw (10 ms) frame index of the last raw frame covered by model
// frame `model_frame`.
int model_frame_to_raw_end(int model_frame);

}  // namespace rnnt

#endif  // RNNT_PIPELINE_H_
