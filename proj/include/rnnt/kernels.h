// rnnt/kernels.h
//
// Shared inner kernels. The batch ops and the streaming per-frame path
// both call these so their outputs agree bit-for-bit.

#ifndef RNNT_KERNELS_H_
#define RNNT_KERNELS_H_

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace rnnt::detail {

// Softmax attention of one query row against key/value rows [lo..t]
// for one head occupying columns [col0, col0+hd). Rows are `width`
// doubles apart. Writes hd values at out_row[col0..]. `scores` is a
// caller-provided buffer of at least t-lo+1 entries; on return it
// holds the attention weights.
inline void attend_one_query(const double* q_row, const double* k_base,
                             const double* v_base, int width, int col0, int hd,
                             int lo, int t, double inv_scale, double* out_row,
                             double* scores) {
  const int span = t - lo + 1;
  for (int j = lo; j <= t; ++j) {
    double s = 0.0;
    const double* krow = k_base + static_cast<size_t>(j) * width + col0;
    for (int c = 0; c < hd; ++c) s += q_row[col0 + c] * krow[c];
    scores[j - lo] = s * inv_scale;
  }
  double mx = scores[0];
  for (int j = 1; j < span; ++j) mx = std::max(mx, scores[j]);
  double z = 0.0;
  for (int j = 0; j < span; ++j) {
    scores[j] = std::exp(scores[j] - mx);
    z += scores[j];
  }
  for (int j = 0; j < span; ++j) scores[j] /= z;
  for (int c = 0; c < hd; ++c) {
    double acc = 0.0;
    for (int j = lo; j <= t; ++j) {
      acc += scores[j - lo] * v_base[static_cast<size_t>(j) * width + col0 + c];
    }
    out_row[col0 + c] = acc;
  }
}

// Depthwise causal convolution for one output frame. x_row(t - k)
// must return the input row at that absolute time; k runs ascending,
// matching the batch kernel.
template <typename RowFn>
inline void causal_conv_one_frame(RowFn x_row, const double* w, int ksize,
                                  int d, int t, double* out_row) {
  for (int c = 0; c < d; ++c) {
    double acc = 0.0;
    for (int k = 0; k < ksize && k <= t; ++k) {
      acc += w[static_cast<size_t>(k) * d + c] * x_row(t - k)[c];
    }
    out_row[c] = acc;
  }
}

}  // namespace rnnt::detail

#endif  // RNNT_KERNELS_H_
