// rnnt/transducer.h
//
// Transducer loss over the (T', U+1) alignment lattice: log-space
// forward/backward, analytic logits gradient, emission-side FastEmit
// scaling, and a path-enumeration oracle for verification.

#ifndef RNNT_TRANSDUCER_H_
#define RNNT_TRANSDUCER_H_

#include <vector>

#include "rnnt/tensor.h"

namespace rnnt {

// Log-zero sentinel with absorbing-add semantics.
inline constexpr double kLogZero = -1e30;

double log_sum_exp(double a, double b);

struct LossConfig {
  double fastemit_lambda = 0.0;  // training default lives in the run config
  bool include_eou = false;      // stage-2 mode: V+2 lattice, trailing EOU
};

// Joint outputs for every (t, u) node, row-major over (t, u):
// row t * (U+1) + u. Index 0 is blank; the EOU id is width - 1 when
// include_eou mode is in use.
struct LogitsLattice {
  Tensor logits;      // (num_frames * num_rows) x width
  int num_frames = 0; // T'
  int num_rows = 0;   // U + 1
  int width = 0;      // V+1 (recognition) or V+2 (EOU)

  double z(int t, int u, int k) const {
    return logits.at(t * num_rows + u, k);
  }
  void check_shape() const;
};

struct RnntLossValue {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d logits, lattice layout
  double alpha_total = 0.0;  // log-likelihood via the forward pass
  double beta_total = 0.0;   // log-likelihood via the backward pass
};

// Loss and analytic gradient. FastEmit scales every non-blank gradient
// component by (1 + lambda); blank components are untouched.
RnntLossValue rnnt_loss_value(const LogitsLattice& lattice,
                              const std::vector<int>& targets,
                              const LossConfig& cfg);

// Tape-connected scalar: backward adds the analytic gradient into the
// lattice logits tensor.
Tensor rnnt_loss(const LogitsLattice& lattice, const std::vector<int>& targets,
                 const LossConfig& cfg);

// Enumerates every monotonic alignment (T' blank steps, U in-order
// label steps, the final step being the blank that exhausts the
// frames), summing path probabilities in extended precision.
// Guarded to small instances.
double brute_force_rnnt_loss(const LogitsLattice& lattice,
                             const std::vector<int>& targets,
                             long* path_count = nullptr);

// Mean per-frame 4-class cross entropy; tape-connected.
Tensor endpointer_ce_loss(const Tensor& ep_logits,
                          const std::vector<int>& ep_labels);

}  // namespace rnnt

#endif  // RNNT_TRANSDUCER_H_
