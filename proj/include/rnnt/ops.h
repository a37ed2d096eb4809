// rnnt/ops.h
//
// Differentiable primitives over Tensor. Every op is a pure function of
// its inputs; when a Graph is active and an input participates in
// gradients, a backward closure is recorded on the tape.
//
// Accumulation orders are fixed (inner indices ascending) so that the
// streaming per-frame kernels can reproduce batch outputs bit-exactly.

#ifndef RNNT_OPS_H_
#define RNNT_OPS_H_

#include <vector>

#include "rnnt/tensor.h"

namespace rnnt {

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor sigmoid(const Tensor& x);
Tensor tanh_act(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);

// out[i][j] = sum_k a[i][k] * b[k][j]
Tensor matmul(const Tensor& a, const Tensor& b);

// Adds bias vector b (length d) to every row of x (T x d).
Tensor add_rows(const Tensor& x, const Tensor& b);

// Rows are all-but-last axes flattened; per row y = x - logsumexp(x),
// computed with max subtraction.
Tensor log_softmax(const Tensor& x);

// Per-row normalization with learned scale/offset (both length d).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-6);

// Depthwise causal convolution: y[t][c] = sum_k w[k][c] * x[t-k][c],
// zero left padding. x: T x d, w: K x d.
Tensor causal_conv1d(const Tensor& x, const Tensor& w);

// Multi-head scaled-dot-product self-attention with left-only
// visibility. q,k,v: T x (heads*head_dim). left_window < 0 means the
// full left history is visible; otherwise frame t sees [t-left_window, t].
Tensor sdpa_causal(const Tensor& q, const Tensor& k, const Tensor& v,
                   int heads, int left_window = -1);

// Feature-axis concatenation of two T x * matrices.
Tensor concat_cols(const Tensor& a, const Tensor& b);

// Stacks 1 x d (or equal-width) rows into an N x d matrix.
Tensor concat_rows(const std::vector<Tensor>& parts);

// Copies rows [r0, r0+nrows) of x.
Tensor slice_rows(const Tensor& x, int r0, int nrows);

// Same elements, new extents (row-major copy).
Tensor reshape(const Tensor& x, Shape shape);

// Pairs adjacent rows: T x d -> floor(T/2) x 2d. Odd tail row dropped.
Tensor stack_pairs(const Tensor& x);

// table: N x d, ids in [0, N) -> len(ids) x d.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

// Mean over rows of -log softmax(logits)[label]. logits: T x C.
Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels);

// a: m x J, b: n x J -> (m*n) x J with out[i*n+j] = a[i] + b[j].
Tensor outer_add(const Tensor& a, const Tensor& b);

// Scalar sum of all elements.
Tensor sum_all(const Tensor& x);

// Hooks a precomputed analytic gradient into the tape:
// returns a scalar tensor with the given value; on backward,
// x.grad += upstream * grad_wrt_x. Used by losses computed outside
// the primitive set (e.g. lattice DP).
Tensor attach_scalar_loss(const Tensor& x, double value,
                          std::vector<double> grad_wrt_x);

}  // namespace rnnt

#endif  // RNNT_OPS_H_
