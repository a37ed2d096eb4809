// src/ops.cc

#include "rnnt/ops.h"

#include "rnnt/kernels.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rnnt {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

Tensor make_out(Shape shape, bool tracked) {
  Tensor out(std::move(shape));
  if (tracked) out.set_requires_grad(true);
  return out;
}

// Unary elementwise op with derivative expressed in terms of (x, y).
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Bwd dydx) {
  check(x.defined(), std::string(name) + ": undefined input");
  const bool tracked = track_grad(x);
  Tensor out = make_out(x.shape(), tracked);
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = fwd(x.at(i));
  if (tracked) {
    Tensor xi = x, yo = out;
    Graph::active()->record([xi, yo, dydx, n]() mutable {
      for (int64_t i = 0; i < n; ++i) {
        xi.grad()[i] += yo.grad()[i] * dydx(xi.at(i), yo.at(i));
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const bool tracked = track_grad(a) || track_grad(b);
  Tensor out = make_out(a.shape(), tracked);
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) + b.at(i);
  if (tracked) {
    Tensor ai = a, bi = b, yo = out;
    Graph::active()->record([ai, bi, yo, n]() mutable {
      if (ai.has_grad()) {
        for (int64_t i = 0; i < n; ++i) ai.grad()[i] += yo.grad()[i];
      }
      if (bi.has_grad()) {
        for (int64_t i = 0; i < n; ++i) bi.grad()[i] += yo.grad()[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const bool tracked = track_grad(a) || track_grad(b);
  Tensor out = make_out(a.shape(), tracked);
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) * b.at(i);
  if (tracked) {
    Tensor ai = a, bi = b, yo = out;
    Graph::active()->record([ai, bi, yo, n]() mutable {
      if (ai.has_grad()) {
        for (int64_t i = 0; i < n; ++i) ai.grad()[i] += yo.grad()[i] * bi.at(i);
      }
      if (bi.has_grad()) {
        for (int64_t i = 0; i < n; ++i) bi.grad()[i] += yo.grad()[i] * ai.at(i);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  const bool tracked = track_grad(a);
  Tensor out = make_out(a.shape(), tracked);
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) * c;
  if (tracked) {
    Tensor ai = a, yo = out;
    Graph::active()->record([ai, yo, c, n]() mutable {
      for (int64_t i = 0; i < n; ++i) ai.grad()[i] += yo.grad()[i] * c;
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_act(const Tensor& x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& x) {
  return unary_op(
      x, "silu",
      [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2, "matmul: inputs must be rank 2");
  check(a.dim(1) == b.dim(0),
        "matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
            shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const bool tracked = track_grad(a) || track_grad(b);
  Tensor out = make_out({m, n}, tracked);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      out.at(i, j) = acc;
    }
  }
  if (tracked) {
    Tensor ai = a, bi = b, yo = out;
    Graph::active()->record([ai, bi, yo, m, k, n]() mutable {
      if (ai.has_grad()) {
        // dA = dY * B^T
        for (int i = 0; i < m; ++i) {
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += yo.grad()[static_cast<size_t>(i) * n + j] * bi.at(p, j);
            ai.grad()[static_cast<size_t>(i) * k + p] += acc;
          }
        }
      }
      if (bi.has_grad()) {
        // dB = A^T * dY
        for (int p = 0; p < k; ++p) {
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += ai.at(i, p) * yo.grad()[static_cast<size_t>(i) * n + j];
            bi.grad()[static_cast<size_t>(p) * n + j] += acc;
          }
        }
      }
    });
  }
  return out;
}

Tensor add_rows(const Tensor& x, const Tensor& b) {
  check(x.rank() == 2 && b.rank() == 1, "add_rows: expects T x d and d");
  check(x.dim(1) == b.dim(0), "add_rows: width mismatch");
  const int t_len = x.dim(0), d = x.dim(1);
  const bool tracked = track_grad(x) || track_grad(b);
  Tensor out = make_out(x.shape(), tracked);
  for (int t = 0; t < t_len; ++t) {
    for (int c = 0; c < d; ++c) out.at(t, c) = x.at(t, c) + b.at(c);
  }
  if (tracked) {
    Tensor xi = x, bi = b, yo = out;
    Graph::active()->record([xi, bi, yo, t_len, d]() mutable {
      if (xi.has_grad()) {
        for (int64_t i = 0; i < static_cast<int64_t>(t_len) * d; ++i) {
          xi.grad()[i] += yo.grad()[i];
        }
      }
      if (bi.has_grad()) {
        for (int t = 0; t < t_len; ++t) {
          for (int c = 0; c < d; ++c) {
            bi.grad()[c] += yo.grad()[static_cast<size_t>(t) * d + c];
          }
        }
      }
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x) {
  check(x.rank() >= 1, "log_softmax: rank must be >= 1");
  const int v = x.dim(x.rank() - 1);
  check(v >= 1, "log_softmax: empty row");
  const int64_t rows = x.numel() / v;
  const bool tracked = track_grad(x);
  Tensor out = make_out(x.shape(), tracked);
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * v;
    double* orow = out.data() + r * v;
    double mx = row[0];
    for (int c = 1; c < v; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < v; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    for (int c = 0; c < v; ++c) orow[c] = row[c] - lse;
  }
  if (tracked) {
    Tensor xi = x, yo = out;
    Graph::active()->record([xi, yo, rows, v]() mutable {
      // dx = dy - exp(y) * sum(dy)
      for (int64_t r = 0; r < rows; ++r) {
        const double* yrow = yo.data() + r * v;
        const double* gyrow = yo.grad() + r * v;
        double* gxrow = xi.grad() + r * v;
        double gsum = 0.0;
        for (int c = 0; c < v; ++c) gsum += gyrow[c];
        for (int c = 0; c < v; ++c) {
          gxrow[c] += gyrow[c] - std::exp(yrow[c]) * gsum;
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  check(x.rank() == 2, "layer_norm: expects T x d");
  const int t_len = x.dim(0), d = x.dim(1);
  check(gamma.rank() == 1 && gamma.dim(0) == d, "layer_norm: gamma width");
  check(beta.rank() == 1 && beta.dim(0) == d, "layer_norm: beta width");
  const bool tracked = track_grad(x) || track_grad(gamma) || track_grad(beta);
  Tensor out = make_out(x.shape(), tracked);
  // Saved for backward: per-row inverse stddev and normalized values.
  std::vector<double> inv_std(static_cast<size_t>(t_len));
  std::vector<double> xhat(static_cast<size_t>(t_len) * d);
  for (int t = 0; t < t_len; ++t) {
    const double* row = x.data() + static_cast<size_t>(t) * d;
    double mean = 0.0;
    for (int c = 0; c < d; ++c) mean += row[c];
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= d;
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(t)] = istd;
    for (int c = 0; c < d; ++c) {
      const double xh = (row[c] - mean) * istd;
      xhat[static_cast<size_t>(t) * d + c] = xh;
      out.at(t, c) = gamma.at(c) * xh + beta.at(c);
    }
  }
  if (tracked) {
    Tensor xi = x, gi = gamma, bi = beta, yo = out;
    Graph::active()->record(
        [xi, gi, bi, yo, t_len, d, inv_std = std::move(inv_std),
         xhat = std::move(xhat)]() mutable {
          for (int t = 0; t < t_len; ++t) {
            const double* gy = yo.grad() + static_cast<size_t>(t) * d;
            const double* xh = xhat.data() + static_cast<size_t>(t) * d;
            if (gi.has_grad() || bi.has_grad()) {
              for (int c = 0; c < d; ++c) {
                if (gi.has_grad()) gi.grad()[c] += gy[c] * xh[c];
                if (bi.has_grad()) bi.grad()[c] += gy[c];
              }
            }
            if (xi.has_grad()) {
              double sum_g = 0.0, sum_gx = 0.0;
              for (int c = 0; c < d; ++c) {
                const double g = gy[c] * gi.at(c);
                sum_g += g;
                sum_gx += g * xh[c];
              }
              const double istd = inv_std[static_cast<size_t>(t)];
              double* gx = xi.grad() + static_cast<size_t>(t) * d;
              for (int c = 0; c < d; ++c) {
                const double g = gy[c] * gi.at(c);
                gx[c] += istd * (g - sum_g / d - xh[c] * sum_gx / d);
              }
            }
          }
        });
  }
  return out;
}

Tensor causal_conv1d(const Tensor& x, const Tensor& w) {
  check(x.rank() == 2 && w.rank() == 2, "causal_conv1d: expects T x d, K x d");
  check(x.dim(1) == w.dim(1), "causal_conv1d: channel mismatch");
  check(w.dim(0) >= 1, "causal_conv1d: kernel must have K >= 1");
  const int t_len = x.dim(0), d = x.dim(1), ksize = w.dim(0);
  const bool tracked = track_grad(x) || track_grad(w);
  Tensor out = make_out(x.shape(), tracked);
  for (int t = 0; t < t_len; ++t) {
    detail::causal_conv_one_frame(
        [&](int row) { return x.data() + static_cast<size_t>(row) * d; },
        w.data(), ksize, d, t, out.data() + static_cast<size_t>(t) * d);
  }
  if (tracked) {
    Tensor xi = x, wi = w, yo = out;
    Graph::active()->record([xi, wi, yo, t_len, d, ksize]() mutable {
      for (int t = 0; t < t_len; ++t) {
        for (int c = 0; c < d; ++c) {
          const double gy = yo.grad()[static_cast<size_t>(t) * d + c];
          for (int k = 0; k < ksize && k <= t; ++k) {
            if (wi.has_grad()) {
              wi.grad()[static_cast<size_t>(k) * d + c] += gy * xi.at(t - k, c);
            }
            if (xi.has_grad()) {
              xi.grad()[static_cast<size_t>(t - k) * d + c] += gy * wi.at(k, c);
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor sdpa_causal(const Tensor& q, const Tensor& k, const Tensor& v,
                   int heads, int left_window) {
  check(q.rank() == 2 && k.rank() == 2 && v.rank() == 2,
        "sdpa_causal: expects rank-2 inputs");
  check(q.shape() == k.shape() && q.shape() == v.shape(),
        "sdpa_causal: q/k/v shapes must match");
  check(heads >= 1 && q.dim(1) % heads == 0,
        "sdpa_causal: width must divide heads");
  const int t_len = q.dim(0), width = q.dim(1);
  const int hd = width / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const bool tracked = track_grad(q) || track_grad(k) || track_grad(v);
  Tensor out = make_out(q.shape(), tracked);

  // Attention weights saved per (head, t), variable length.
  std::vector<double> weights;
  std::vector<size_t> w_offset(static_cast<size_t>(heads) * t_len + 1, 0);

  for (int h = 0; h < heads; ++h) {
    const int col0 = h * hd;
    for (int t = 0; t < t_len; ++t) {
      const int lo = left_window < 0 ? 0 : std::max(0, t - left_window);
      const int span = t - lo + 1;
      std::vector<double> scores(static_cast<size_t>(span));
      detail::attend_one_query(q.data() + static_cast<size_t>(t) * width,
                               k.data(), v.data(), width, col0, hd, lo, t,
                               inv_scale,
                               out.data() + static_cast<size_t>(t) * width,
                               scores.data());
      w_offset[static_cast<size_t>(h) * t_len + t + 1] =
          w_offset[static_cast<size_t>(h) * t_len + t] + static_cast<size_t>(span);
      weights.insert(weights.end(), scores.begin(), scores.end());
    }
  }

  if (tracked) {
    Tensor qi = q, ki = k, vi = v, yo = out;
    Graph::active()->record([qi, ki, vi, yo, heads, hd, t_len, left_window,
                             inv_scale, weights = std::move(weights),
                             w_offset = std::move(w_offset)]() mutable {
      for (int h = 0; h < heads; ++h) {
        const int col0 = h * hd;
        for (int t = 0; t < t_len; ++t) {
          const int lo = left_window < 0 ? 0 : std::max(0, t - left_window);
          const int span = t - lo + 1;
          const double* a = weights.data() + w_offset[static_cast<size_t>(h) * t_len + t];
          const double* gy = yo.grad() + static_cast<size_t>(t) * (heads * hd) + col0;
          // d a_j = gy . v_j ; d s_j = a_j (da_j - sum_i a_i da_i)
          std::vector<double> da(static_cast<size_t>(span));
          double inner = 0.0;
          for (int j = 0; j < span; ++j) {
            double acc = 0.0;
            for (int c = 0; c < hd; ++c) acc += gy[c] * vi.at(lo + j, col0 + c);
            da[static_cast<size_t>(j)] = acc;
            inner += a[j] * acc;
          }
          for (int j = 0; j < span; ++j) {
            const double ds = a[j] * (da[static_cast<size_t>(j)] - inner) * inv_scale;
            if (qi.has_grad()) {
              for (int c = 0; c < hd; ++c) {
                qi.grad()[static_cast<size_t>(t) * (heads * hd) + col0 + c] +=
                    ds * ki.at(lo + j, col0 + c);
              }
            }
            if (ki.has_grad()) {
              for (int c = 0; c < hd; ++c) {
                ki.grad()[static_cast<size_t>(lo + j) * (heads * hd) + col0 + c] +=
                    ds * qi.at(t, col0 + c);
              }
            }
            if (vi.has_grad()) {
              for (int c = 0; c < hd; ++c) {
                vi.grad()[static_cast<size_t>(lo + j) * (heads * hd) + col0 + c] +=
                    a[j] * gy[c];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2, "concat_cols: expects rank-2 inputs");
  check(a.dim(0) == b.dim(0), "concat_cols: row count mismatch");
  const int t_len = a.dim(0), da = a.dim(1), db = b.dim(1);
  const bool tracked = track_grad(a) || track_grad(b);
  Tensor out = make_out({t_len, da + db}, tracked);
  for (int t = 0; t < t_len; ++t) {
    for (int c = 0; c < da; ++c) out.at(t, c) = a.at(t, c);
    for (int c = 0; c < db; ++c) out.at(t, da + c) = b.at(t, c);
  }
  if (tracked) {
    Tensor ai = a, bi = b, yo = out;
    Graph::active()->record([ai, bi, yo, t_len, da, db]() mutable {
      for (int t = 0; t < t_len; ++t) {
        const double* gy = yo.grad() + static_cast<size_t>(t) * (da + db);
        if (ai.has_grad()) {
          for (int c = 0; c < da; ++c) ai.grad()[static_cast<size_t>(t) * da + c] += gy[c];
        }
        if (bi.has_grad()) {
          for (int c = 0; c < db; ++c) bi.grad()[static_cast<size_t>(t) * db + c] += gy[da + c];
        }
      }
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_rows: no parts");
  int width = parts[0].rank() == 2 ? parts[0].dim(1) : parts[0].dim(0);
  int rows = 0;
  bool tracked = false;
  for (const auto& p : parts) {
    const int pw = p.rank() == 2 ? p.dim(1) : p.dim(0);
    check(pw == width, "concat_rows: width mismatch");
    rows += p.rank() == 2 ? p.dim(0) : 1;
    tracked = tracked || track_grad(p);
  }
  Tensor out = make_out({rows, width}, tracked);
  int r = 0;
  for (const auto& p : parts) {
    const int pr = p.rank() == 2 ? p.dim(0) : 1;
    for (int i = 0; i < pr; ++i, ++r) {
      for (int c = 0; c < width; ++c) {
        out.at(r, c) = p.at(static_cast<int64_t>(i) * width + c);
      }
    }
  }
  if (tracked) {
    std::vector<Tensor> ps = parts;
    Tensor yo = out;
    Graph::active()->record([ps, yo, width]() mutable {
      int r = 0;
      for (auto& p : ps) {
        const int pr = p.rank() == 2 ? p.dim(0) : 1;
        if (p.has_grad()) {
          for (int i = 0; i < pr; ++i) {
            for (int c = 0; c < width; ++c) {
              p.grad()[static_cast<size_t>(i) * width + c] +=
                  yo.grad()[static_cast<size_t>(r + i) * width + c];
            }
          }
        }
        r += pr;
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, int r0, int nrows) {
  check(x.rank() == 2, "slice_rows: expects rank-2 input");
  check(r0 >= 0 && nrows >= 1 && r0 + nrows <= x.dim(0),
        "slice_rows: range out of bounds");
  const int d = x.dim(1);
  const bool tracked = track_grad(x);
  Tensor out = make_out({nrows, d}, tracked);
  for (int r = 0; r < nrows; ++r) {
    for (int c = 0; c < d; ++c) out.at(r, c) = x.at(r0 + r, c);
  }
  if (tracked) {
    Tensor xi = x, yo = out;
    Graph::active()->record([xi, yo, r0, nrows, d]() mutable {
      for (int r = 0; r < nrows; ++r) {
        for (int c = 0; c < d; ++c) {
          xi.grad()[static_cast<size_t>(r0 + r) * d + c] +=
              yo.grad()[static_cast<size_t>(r) * d + c];
        }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  check(shape_numel(shape) == x.numel(), "reshape: element count mismatch");
  const bool tracked = track_grad(x);
  Tensor out = make_out(std::move(shape), tracked);
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = x.at(i);
  if (tracked) {
    Tensor xi = x, yo = out;
    Graph::active()->record([xi, yo, n]() mutable {
      for (int64_t i = 0; i < n; ++i) xi.grad()[i] += yo.grad()[i];
    });
  }
  return out;
}

Tensor stack_pairs(const Tensor& x) {
  check(x.rank() == 2, "stack_pairs: expects T x d");
  check(x.dim(0) >= 2, "stack_pairs: needs at least 2 frames");
  const int t_len = x.dim(0), d = x.dim(1);
  const int t_out = t_len / 2;
  const bool tracked = track_grad(x);
  Tensor out = make_out({t_out, 2 * d}, tracked);
  for (int t = 0; t < t_out; ++t) {
    for (int c = 0; c < d; ++c) {
      out.at(t, c) = x.at(2 * t, c);
      out.at(t, d + c) = x.at(2 * t + 1, c);
    }
  }
  if (tracked) {
    Tensor xi = x, yo = out;
    Graph::active()->record([xi, yo, t_out, d]() mutable {
      for (int t = 0; t < t_out; ++t) {
        for (int c = 0; c < d; ++c) {
          xi.grad()[static_cast<size_t>(2 * t) * d + c] +=
              yo.grad()[static_cast<size_t>(t) * 2 * d + c];
          xi.grad()[static_cast<size_t>(2 * t + 1) * d + c] +=
              yo.grad()[static_cast<size_t>(t) * 2 * d + d + c];
        }
      }
    });
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  check(table.rank() == 2, "embedding_lookup: table must be N x d");
  const int n = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    check(id >= 0 && id < n,
          "embedding_lookup: id " + std::to_string(id) + " out of range [0, " +
              std::to_string(n) + ")");
  }
  const bool tracked = track_grad(table);
  Tensor out = make_out({static_cast<int>(ids.size()), d}, tracked);
  for (size_t u = 0; u < ids.size(); ++u) {
    for (int c = 0; c < d; ++c) {
      out.at(static_cast<int>(u), c) = table.at(ids[u], c);
    }
  }
  if (tracked) {
    Tensor ti = table, yo = out;
    std::vector<int> idv = ids;
    Graph::active()->record([ti, yo, idv, d]() mutable {
      for (size_t u = 0; u < idv.size(); ++u) {
        for (int c = 0; c < d; ++c) {
          ti.grad()[static_cast<size_t>(idv[u]) * d + c] +=
              yo.grad()[u * static_cast<size_t>(d) + c];
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels) {
  check(logits.rank() == 2, "cross_entropy: expects T x C");
  const int t_len = logits.dim(0), classes = logits.dim(1);
  check(static_cast<int>(labels.size()) == t_len,
        "cross_entropy: label count mismatch");
  for (int lab : labels) {
    check(lab >= 0 && lab < classes,
          "cross_entropy: label " + std::to_string(lab) + " outside [0, " +
              std::to_string(classes) + ")");
  }
  // Forward through a local log-softmax; analytic gradient attached.
  double loss = 0.0;
  std::vector<double> grad(static_cast<size_t>(t_len) * classes, 0.0);
  for (int t = 0; t < t_len; ++t) {
    const double* row = logits.data() + static_cast<size_t>(t) * classes;
    double mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    loss += lse - row[labels[static_cast<size_t>(t)]];
    for (int c = 0; c < classes; ++c) {
      double p = std::exp(row[c] - lse);
      grad[static_cast<size_t>(t) * classes + c] =
          (p - (c == labels[static_cast<size_t>(t)] ? 1.0 : 0.0)) / t_len;
    }
  }
  loss /= t_len;
  return attach_scalar_loss(logits, loss, std::move(grad));
}

Tensor outer_add(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2, "outer_add: expects rank-2 inputs");
  check(a.dim(1) == b.dim(1), "outer_add: widths differ");
  const int m = a.dim(0), n = b.dim(0), j_dim = a.dim(1);
  const bool tracked = track_grad(a) || track_grad(b);
  Tensor out = make_out({m * n, j_dim}, tracked);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int c = 0; c < j_dim; ++c) {
        out.at(i * n + j, c) = a.at(i, c) + b.at(j, c);
      }
    }
  }
  if (tracked) {
    Tensor ai = a, bi = b, yo = out;
    Graph::active()->record([ai, bi, yo, m, n, j_dim]() mutable {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          const double* gy = yo.grad() + static_cast<size_t>(i * n + j) * j_dim;
          if (ai.has_grad()) {
            for (int c = 0; c < j_dim; ++c) ai.grad()[static_cast<size_t>(i) * j_dim + c] += gy[c];
          }
          if (bi.has_grad()) {
            for (int c = 0; c < j_dim; ++c) bi.grad()[static_cast<size_t>(j) * j_dim + c] += gy[c];
          }
        }
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  const bool tracked = track_grad(x);
  Tensor out = make_out({1}, tracked);
  double acc = 0.0;
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += x.at(i);
  out.at(static_cast<int64_t>(0)) = acc;
  if (tracked) {
    Tensor xi = x, yo = out;
    Graph::active()->record([xi, yo, n]() mutable {
      const double g = yo.grad()[0];
      for (int64_t i = 0; i < n; ++i) xi.grad()[i] += g;
    });
  }
  return out;
}

Tensor attach_scalar_loss(const Tensor& x, double value,
                          std::vector<double> grad_wrt_x) {
  check(static_cast<int64_t>(grad_wrt_x.size()) == x.numel(),
        "attach_scalar_loss: gradient size mismatch");
  const bool tracked = track_grad(x);
  Tensor out = make_out({1}, tracked);
  out.at(static_cast<int64_t>(0)) = value;
  if (tracked) {
    Tensor xi = x, yo = out;
    Graph::active()->record([xi, yo, g = std::move(grad_wrt_x)]() mutable {
      const double up = yo.grad()[0];
      for (size_t i = 0; i < g.size(); ++i) xi.grad()[i] += up * g[i];
    });
  }
  return out;
}

}  // namespace rnnt
