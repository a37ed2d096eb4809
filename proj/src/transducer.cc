// src/transducer.cc

#include "rnnt/transducer.h"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "rnnt/ops.h"

namespace rnnt {

double log_sum_exp(double a, double b) {
  if (a <= kLogZero / 2) return b;
  if (b <= kLogZero / 2) return a;
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

void LogitsLattice::check_shape() const {
  if (num_frames < 0 || num_rows < 1 || width < 2) {
    throw std::invalid_argument("LogitsLattice: bad dimensions");
  }
  if (num_frames > 0) {
    if (!logits.defined() || logits.rank() != 2 ||
        logits.dim(0) != num_frames * num_rows || logits.dim(1) != width) {
      throw std::invalid_argument("LogitsLattice: tensor shape mismatch");
    }
  }
}

namespace {

void validate_targets(const LogitsLattice& lattice,
                      const std::vector<int>& targets, bool include_eou) {
  const int eou = lattice.width - 1;
  for (size_t i = 0; i < targets.size(); ++i) {
    const int y = targets[i];
    if (y <= 0 || y >= lattice.width) {
      throw std::invalid_argument("rnnt targets: id " + std::to_string(y) +
                                  " outside [1, " +
                                  std::to_string(lattice.width) + ")");
    }
    if (include_eou && y == eou && i + 1 != targets.size()) {
      throw std::invalid_argument("rnnt targets: EOU before the final position");
    }
  }
  if (static_cast<int>(targets.size()) + 1 != lattice.num_rows) {
    throw std::invalid_argument("rnnt targets: length " +
                                std::to_string(targets.size()) +
                                " does not match lattice rows " +
                                std::to_string(lattice.num_rows));
  }
}

}  // namespace

RnntLossValue rnnt_loss_value(const LogitsLattice& lattice,
                              const std::vector<int>& targets,
                              const LossConfig& cfg) {
  lattice.check_shape();
  const int t_len = lattice.num_frames;
  const int u_len = lattice.num_rows;  // U + 1
  const int u = u_len - 1;
  const int width = lattice.width;

  if (t_len == 0) {
    if (u > 0) {
      throw std::invalid_argument("rnnt_loss: no frames but targets present");
    }
    return {0.0, {}, 0.0, 0.0};
  }
  validate_targets(lattice, targets, cfg.include_eou);

  RnntLossValue out;
  out.grad.assign(static_cast<size_t>(t_len) * u_len * width, 0.0);

  if (cfg.include_eou &&
      (targets.empty() || targets.back() != width - 1)) {
    // Stage-2 contract: only EOU-terminated targets have finite loss.
    out.loss = std::numeric_limits<double>::infinity();
    out.alpha_total = kLogZero;
    out.beta_total = kLogZero;
    return out;
  }

  // Per-node log-softmax.
  std::vector<double> lp(static_cast<size_t>(t_len) * u_len * width);
  for (int node = 0; node < t_len * u_len; ++node) {
    const double* row = lattice.logits.data() + static_cast<size_t>(node) * width;
    double mx = row[0];
    for (int k = 1; k < width; ++k) mx = std::max(mx, row[k]);
    double z = 0.0;
    for (int k = 0; k < width; ++k) z += std::exp(row[k] - mx);
    const double lse = mx + std::log(z);
    for (int k = 0; k < width; ++k) {
      lp[static_cast<size_t>(node) * width + k] = row[k] - lse;
    }
  }
  auto lp_at = [&](int t, int uu, int k) {
    return lp[(static_cast<size_t>(t) * u_len + uu) * width + k];
  };
  auto blank_at = [&](int t, int uu) { return lp_at(t, uu, 0); };
  auto label_at = [&](int t, int uu) {
    return lp_at(t, uu, targets[static_cast<size_t>(uu)]);
  };

  // Forward table.
  std::vector<double> alpha(static_cast<size_t>(t_len) * u_len, kLogZero);
  auto a_at = [&](int t, int uu) -> double& {
    return alpha[static_cast<size_t>(t) * u_len + uu];
  };
  a_at(0, 0) = 0.0;
  for (int t = 1; t < t_len; ++t) a_at(t, 0) = a_at(t - 1, 0) + blank_at(t - 1, 0);
  for (int uu = 1; uu < u_len; ++uu) {
    a_at(0, uu) = a_at(0, uu - 1) + label_at(0, uu - 1);
  }
  for (int t = 1; t < t_len; ++t) {
    for (int uu = 1; uu < u_len; ++uu) {
      a_at(t, uu) = log_sum_exp(a_at(t - 1, uu) + blank_at(t - 1, uu),
                                a_at(t, uu - 1) + label_at(t, uu - 1));
    }
  }
  out.alpha_total = a_at(t_len - 1, u) + blank_at(t_len - 1, u);

  // Backward table.
  std::vector<double> beta(static_cast<size_t>(t_len) * u_len, kLogZero);
  auto b_at = [&](int t, int uu) -> double& {
    return beta[static_cast<size_t>(t) * u_len + uu];
  };
  b_at(t_len - 1, u) = blank_at(t_len - 1, u);
  for (int t = t_len - 2; t >= 0; --t) b_at(t, u) = b_at(t + 1, u) + blank_at(t, u);
  for (int uu = u - 1; uu >= 0; --uu) {
    b_at(t_len - 1, uu) = b_at(t_len - 1, uu + 1) + label_at(t_len - 1, uu);
  }
  for (int t = t_len - 2; t >= 0; --t) {
    for (int uu = u - 1; uu >= 0; --uu) {
      b_at(t, uu) = log_sum_exp(b_at(t + 1, uu) + blank_at(t, uu),
                                b_at(t, uu + 1) + label_at(t, uu));
    }
  }
  out.beta_total = b_at(0, 0);
  out.loss = -out.beta_total;

  // Gradient w.r.t. logits. With logZ the total log-likelihood:
  //   dL/dz[t,u,k] = softmax_k * occupancy(t,u) - path_term(t,u,k)
  // where path_term covers the blank/label transition using k.
  const double log_z = out.beta_total;
  for (int t = 0; t < t_len; ++t) {
    for (int uu = 0; uu < u_len; ++uu) {
      const double occupancy = std::exp(a_at(t, uu) + b_at(t, uu) - log_z);
      double* g =
          out.grad.data() + (static_cast<size_t>(t) * u_len + uu) * width;
      for (int k = 0; k < width; ++k) {
        g[k] = std::exp(lp_at(t, uu, k)) * occupancy;
      }
      // Blank transition: exits the lattice at (T'-1, U), else moves to
      // (t+1, u) when frames remain.
      double beta_next;
      if (t == t_len - 1) {
        beta_next = uu == u ? 0.0 : kLogZero;
      } else {
        beta_next = b_at(t + 1, uu);
      }
      if (beta_next > kLogZero / 2) {
        g[0] -= std::exp(a_at(t, uu) + blank_at(t, uu) + beta_next - log_z);
      }
      if (uu < u) {
        const int y = targets[static_cast<size_t>(uu)];
        g[y] -= std::exp(a_at(t, uu) + label_at(t, uu) + b_at(t, uu + 1) - log_z);
      }
    }
  }

  if (cfg.fastemit_lambda != 0.0) {
    const double boost = 1.0 + cfg.fastemit_lambda;
    for (int node = 0; node < t_len * u_len; ++node) {
      double* g = out.grad.data() + static_cast<size_t>(node) * width;
      for (int k = 1; k < width; ++k) g[k] *= boost;
    }
  }
  return out;
}

Tensor rnnt_loss(const LogitsLattice& lattice, const std::vector<int>& targets,
                 const LossConfig& cfg) {
  RnntLossValue value = rnnt_loss_value(lattice, targets, cfg);
  if (lattice.num_frames == 0) {
    return Tensor::full({1}, value.loss);
  }
  return attach_scalar_loss(lattice.logits, value.loss, std::move(value.grad));
}

double brute_force_rnnt_loss(const LogitsLattice& lattice,
                             const std::vector<int>& targets,
                             long* path_count) {
  lattice.check_shape();
  const int t_len = lattice.num_frames;
  const int u = lattice.num_rows - 1;
  if (static_cast<int>(targets.size()) != u) {
    throw std::invalid_argument("brute_force_rnnt_loss: target length mismatch");
  }
  if (t_len + u > 26) {
    throw std::invalid_argument("brute_force_rnnt_loss: instance too large");
  }
  if (t_len == 0) {
    if (u > 0) throw std::invalid_argument("brute_force_rnnt_loss: no frames");
    if (path_count) *path_count = 1;
    return 0.0;
  }

  const int width = lattice.width;
  // Per-node probabilities from an independent softmax.
  std::vector<long double> prob(static_cast<size_t>(t_len) * (u + 1) * width);
  for (int node = 0; node < t_len * (u + 1); ++node) {
    const double* row = lattice.logits.data() + static_cast<size_t>(node) * width;
    long double mx = row[0];
    for (int k = 1; k < width; ++k) mx = std::max<long double>(mx, row[k]);
    long double z = 0.0;
    for (int k = 0; k < width; ++k) z += expl(static_cast<long double>(row[k]) - mx);
    for (int k = 0; k < width; ++k) {
      prob[static_cast<size_t>(node) * width + k] =
          expl(static_cast<long double>(row[k]) - mx) / z;
    }
  }
  auto p_at = [&](int t, int uu, int k) {
    return prob[(static_cast<size_t>(t) * (u + 1) + uu) * width + k];
  };

  long double total = 0.0;
  long paths = 0;
  // Depth-first walk over blank (t-step) / label (u-step) choices.
  std::function<void(int, int, long double)> walk = [&](int t, int uu,
                                                        long double p) {
    if (t == t_len) {
      if (uu == u) {
        total += p;
        ++paths;
      }
      return;
    }
    walk(t + 1, uu, p * p_at(t, uu, 0));  // blank consumes the frame
    if (uu < u) {
      walk(t, uu + 1, p * p_at(t, uu, targets[static_cast<size_t>(uu)]));
    }
  };
  walk(0, 0, 1.0L);
  if (path_count) *path_count = paths;
  return -static_cast<double>(logl(total));
}

Tensor endpointer_ce_loss(const Tensor& ep_logits,
                          const std::vector<int>& ep_labels) {
  if (ep_logits.rank() != 2 || ep_logits.dim(1) != 4) {
    throw std::invalid_argument("endpointer_ce_loss: expects T x 4 logits");
  }
  for (int lab : ep_labels) {
    if (lab < 0 || lab > 3) {
      throw std::invalid_argument("endpointer_ce_loss: label " +
                                  std::to_string(lab) + " outside {0..3}");
    }
  }
  return cross_entropy_mean(ep_logits, ep_labels);
}

}  // namespace rnnt
