// rnnt/model.h
//
// The streaming network: encoder block 0 -> endpointer branch and
// 2x stacking -> encoder block 1; prediction network (LSTM or
// fixed-context embedding); recognition joint; optional EOU joint.
//
// Conformer layer ordering: half-step feed-forward, causal depthwise
// conv block, left-context multi-head self-attention, half-step
// feed-forward, layer norm. Index 0 of the joint output is blank;
// tokens are 1..V; the EOU id is V+1.

#ifndef RNNT_MODEL_H_
#define RNNT_MODEL_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rnnt/frontend.h"
#include "rnnt/tensor.h"

namespace rnnt {

enum class PredictorKind { kLstm, kEmbedding };
enum class EpBranchKind {
  kStandaloneLstm,   // EP0: recurrent stack on raw input features
  kProjectionOnly,   // EP1: single linear map from block 0
  kLstmBranch,       // EP2: projection + recurrent stack
  kConformerBranch,  // EP3: projection + one Conformer layer + 4-dim head
};

const char* to_string(PredictorKind kind);
const char* to_string(EpBranchKind kind);
PredictorKind predictor_kind_from_string(const std::string& s);
EpBranchKind ep_branch_kind_from_string(const std::string& s);

struct ModelConfig {
  int input_dim = 24;  // post-stacking width, including any LID block
  int encoder_dim = 32;
  int block0_layers = 2;
  int block1_layers = 3;
  std::vector<int> block1_widths;  // per-layer override; empty = encoder_dim
  int attention_heads = 4;
  int conv_kernel_size = 4;
  int attention_left_context = -1;  // frames; -1 = unlimited
  int ffn_multiplier = 4;
  PredictorKind predictor_kind = PredictorKind::kLstm;
  int predictor_layers = 1;
  int predictor_dim = 48;
  int predictor_context_size = 2;  // embedding variant window
  int joint_dim = 48;
  int vocab_size = 12;  // tokens only; blank and EOU excluded
  EpBranchKind ep_branch_kind = EpBranchKind::kConformerBranch;
  int ep_dim = 16;
  int ep_layers = 2;  // recurrent layers for EP0/EP2
  int lid_dim = 0;    // 0 = no language vector
  double width_multiplier = 1.0;  // capacity sweep knobs (encoder)
  double depth_multiplier = 1.0;
  bool has_eou_joint = false;
  bool eou_in_vocab = false;  // ablation: recognition joint also emits EOU

  // Capacity-multiplied dimensions used for construction.
  int enc_dim() const;
  int b0_layers() const;
  int b1_layers() const;
  std::vector<int> b1_widths() const;
  int encoder_out_dim() const { auto w = b1_widths(); return w.back(); }

  int blank_id() const { return 0; }
  int eou_id() const { return vocab_size + 1; }
  // Output width of the recognition joint (V+1, or V+2 with EOU in vocab).
  int recognition_width() const { return vocab_size + (eou_in_vocab ? 2 : 1); }
  int eou_joint_width() const { return vocab_size + 2; }
  // Embedding rows: start/blank + V tokens + EOU.
  int embedding_rows() const { return vocab_size + 2; }

  void validate() const;
};

// Named-parameter container plus the forward graph.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  // Deterministic init; a tensor's values depend only on (seed, name).
  void init_params(uint64_t seed);

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  bool has_param(const std::string& name) const;
  std::map<std::string, Tensor>& params() { return params_; }
  const std::map<std::string, Tensor>& params() const { return params_; }
  int64_t total_params() const;

  // Marks exactly the parameters for which `pred(name)` holds as
  // trainable; all others drop their gradient accumulators.
  void set_trainable(const std::function<bool(const std::string&)>& pred);
  std::vector<std::string> trainable_names() const;

  // Adds the EOU joint, copying the recognition joint's weights; the
  // extra EOU output row/bias starts at zero. Recognition tensors are
  // untouched. Throws if the EOU joint already exists.
  void init_eou_from_recognition();

  struct EncoderOut {
    Tensor block0;   // T x enc_dim, full frame rate
    Tensor encoder;  // floor(T/2) x encoder_out_dim
  };
  // Batch (whole-utterance) forward. frames: T x input_dim, T >= 2.
  EncoderOut encoder_forward(const Tensor& frames) const;

  // Per-input-frame 4-class logits at full frame rate. `frames` is the
  // raw model input (used by the standalone variant), `block0` the
  // encoder block-0 output (used by the branch variants).
  Tensor endpointer_forward(const Tensor& frames, const Tensor& block0) const;

  // ---- prediction network ----
  struct PredictorState {
    // LSTM variant: h and c per layer (1 x dp each).
    std::vector<Tensor> h, c;
    // Embedding variant: the last context_size consumed ids.
    std::vector<int> context;
    Tensor output;  // 1 x dp, cached network output for this state
  };
  PredictorState predictor_initial_state() const;
  PredictorState predictor_advance(const PredictorState& state,
                                   int token) const;
  // Rows u = 0..U: output after consuming tokens[0..u).
  Tensor predictor_forward_seq(const std::vector<int>& tokens) const;

  // ---- joints ----
  // enc_rows: T' x d_enc, pred_rows: (U+1) x dp ->
  // (T'*(U+1)) x K row-major over (t, u).
  Tensor joint_lattice(const Tensor& enc_rows, const Tensor& pred_rows,
                       bool use_eou_joint) const;
  // Single (t, u) evaluation; 1 x K.
  Tensor joint_logits(const Tensor& enc_frame, const Tensor& pred_vec,
                      bool use_eou_joint) const;

  // Closed-form parameter count for the config; unit-tested against
  // the actual tensor totals.
  static int64_t expected_param_count(const ModelConfig& cfg);

 private:
  void build_shapes();
  Tensor conformer_layer(const std::string& prefix, const Tensor& x,
                         int heads) const;
  Tensor lstm_stack_seq(const std::string& prefix, const Tensor& rows,
                        int layers, int hidden) const;

  ModelConfig cfg_;
  std::map<std::string, Tensor> params_;

  friend class StreamingEncoder;
};

// Per-step LSTM cell shared by the batch and decode paths.
// x: 1 x d_in, h/c: 1 x d_h. Returns (h', c').
std::pair<Tensor, Tensor> lstm_cell(const Model& m, const std::string& prefix,
                                    const Tensor& x, const Tensor& h,
                                    const Tensor& c);

}  // namespace rnnt

#endif  // RNNT_MODEL_H_
