// rnnt/streaming.h
//
// Stateful per-frame encoder path. Feeding frames one at a time yields
// bit-identical activations to the batch forward on the same prefix:
// both paths share the same inner kernels and accumulation orders.

#ifndef RNNT_STREAMING_H_
#define RNNT_STREAMING_H_

#include <optional>
#include <string>
#include <vector>

#include "rnnt/model.h"

namespace rnnt {

class StreamingEncoder {
 public:
  explicit StreamingEncoder(const Model& model);

  struct StepOutput {
    Tensor ep_logits;                     // 1 x 4, every input frame
    std::optional<Tensor> encoder_frame;  // 1 x d_out when a pair completes
  };

  // frame: 1 x input_dim. Advances the encoder by one input frame.
  StepOutput step(const Tensor& frame);

  int frames_consumed() const { return frames_consumed_; }
  int encoder_frames_emitted() const { return encoder_frames_; }

 private:
  struct ConformerState {
    int t = -1;                          // frames seen by this layer
    std::vector<std::vector<double>> conv_hist;  // last K rows of conv input
    std::vector<double> k_cache, v_cache;        // appended rows
  };
  struct LstmState {
    std::vector<Tensor> h, c;
  };

  Tensor conformer_step(const std::string& prefix, ConformerState& state,
                        const Tensor& x_row, int heads);
  Tensor lstm_step(const std::string& prefix, LstmState& state,
                   const Tensor& x_row, int layers, int hidden);
  Tensor endpointer_step(const Tensor& frame, const Tensor& block0_row);

  const Model& model_;
  int frames_consumed_ = 0;
  int encoder_frames_ = 0;

  std::vector<ConformerState> block0_;
  std::optional<Tensor> pending_;  // stacking parity buffer
  std::vector<ConformerState> block1_;
  LstmState ep_lstm_;
  ConformerState ep_conf_;
};

}  // namespace rnnt

#endif  // RNNT_STREAMING_H_
