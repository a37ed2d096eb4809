// src/streaming.cc

#include "rnnt/streaming.h"

#include <cmath>
#include <stdexcept>

#include "rnnt/kernels.h"
#include "rnnt/ops.h"

namespace rnnt {

StreamingEncoder::StreamingEncoder(const Model& model) : model_(model) {
  const auto& cfg = model_.config();
  block0_.resize(static_cast<size_t>(cfg.b0_layers()));
  block1_.resize(static_cast<size_t>(cfg.b1_layers()));
  if (cfg.ep_branch_kind == EpBranchKind::kStandaloneLstm ||
      cfg.ep_branch_kind == EpBranchKind::kLstmBranch) {
    for (int l = 0; l < cfg.ep_layers; ++l) {
      ep_lstm_.h.push_back(Tensor::zeros({1, cfg.ep_dim}));
      ep_lstm_.c.push_back(Tensor::zeros({1, cfg.ep_dim}));
    }
  }
}

Tensor StreamingEncoder::conformer_step(const std::string& prefix,
                                        ConformerState& state,
                                        const Tensor& x_row, int heads) {
  const auto& cfg = model_.config();
  auto p = [&](const char* suffix) -> const Tensor& {
    return model_.param(prefix + suffix);
  };
  const int d = x_row.dim(1);
  state.t += 1;

  Tensor h = layer_norm(x_row, p(".ffn1.ln.g"), p(".ffn1.ln.b"));
  h = silu(add_rows(matmul(h, p(".ffn1.w1")), p(".ffn1.b1")));
  h = add_rows(matmul(h, p(".ffn1.w2")), p(".ffn1.b2"));
  Tensor x1 = add(x_row, scale(h, 0.5));

  // Conv block: history holds the last K conv-input rows.
  Tensor c_ln = layer_norm(x1, p(".conv.ln.g"), p(".conv.ln.b"));
  const Tensor& dw = p(".conv.dw");
  const int ksize = dw.dim(0);
  state.conv_hist.emplace_back(c_ln.vec());
  if (static_cast<int>(state.conv_hist.size()) > ksize) {
    state.conv_hist.erase(state.conv_hist.begin());
  }
  Tensor conv_out = Tensor::zeros({1, d});
  const int base_t = state.t - (static_cast<int>(state.conv_hist.size()) - 1);
  detail::causal_conv_one_frame(
      [&](int row) { return state.conv_hist[static_cast<size_t>(row - base_t)].data(); },
      dw.data(), ksize, d, state.t, conv_out.data());
  Tensor c = silu(conv_out);
  c = add_rows(matmul(c, p(".conv.pw.w")), p(".conv.pw.b"));
  Tensor x2 = add(x1, c);

  // Attention: append this frame's key/value, attend from the query.
  Tensor a = layer_norm(x2, p(".attn.ln.g"), p(".attn.ln.b"));
  Tensor q = add_rows(matmul(a, p(".attn.wq")), p(".attn.bq"));
  Tensor krow = add_rows(matmul(a, p(".attn.wk")), p(".attn.bk"));
  Tensor vrow = add_rows(matmul(a, p(".attn.wv")), p(".attn.bv"));
  state.k_cache.insert(state.k_cache.end(), krow.vec().begin(), krow.vec().end());
  state.v_cache.insert(state.v_cache.end(), vrow.vec().begin(), vrow.vec().end());
  const int hd = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const int lo = cfg.attention_left_context < 0
                     ? 0
                     : std::max(0, state.t - cfg.attention_left_context);
  Tensor att = Tensor::zeros({1, d});
  std::vector<double> scratch(static_cast<size_t>(state.t - lo + 1));
  for (int head = 0; head < heads; ++head) {
    detail::attend_one_query(q.data(), state.k_cache.data(),
                             state.v_cache.data(), d, head * hd, hd, lo,
                             state.t, inv_scale, att.data(), scratch.data());
  }
  Tensor o = add_rows(matmul(att, p(".attn.wo")), p(".attn.bo"));
  Tensor x3 = add(x2, o);

  Tensor h2 = layer_norm(x3, p(".ffn2.ln.g"), p(".ffn2.ln.b"));
  h2 = silu(add_rows(matmul(h2, p(".ffn2.w1")), p(".ffn2.b1")));
  h2 = add_rows(matmul(h2, p(".ffn2.w2")), p(".ffn2.b2"));
  Tensor x4 = add(x3, scale(h2, 0.5));
  return layer_norm(x4, p(".out_ln.g"), p(".out_ln.b"));
}

Tensor StreamingEncoder::lstm_step(const std::string& prefix, LstmState& state,
                                   const Tensor& x_row, int layers,
                                   int hidden) {
  (void)hidden;
  Tensor x = x_row;
  for (int l = 0; l < layers; ++l) {
    auto hc = lstm_cell(model_, prefix + ".l" + std::to_string(l), x,
                        state.h[static_cast<size_t>(l)], state.c[static_cast<size_t>(l)]);
    state.h[static_cast<size_t>(l)] = hc.first;
    state.c[static_cast<size_t>(l)] = hc.second;
    x = hc.first;
  }
  return x;
}

Tensor StreamingEncoder::endpointer_step(const Tensor& frame,
                                         const Tensor& block0_row) {
  const auto& cfg = model_.config();
  switch (cfg.ep_branch_kind) {
    case EpBranchKind::kStandaloneLstm: {
      Tensor h = lstm_step("ep.lstm", ep_lstm_, frame, cfg.ep_layers, cfg.ep_dim);
      return add_rows(matmul(h, model_.param("ep.out.w")),
                      model_.param("ep.out.b"));
    }
    case EpBranchKind::kProjectionOnly:
      return add_rows(matmul(block0_row, model_.param("ep.proj.w")),
                      model_.param("ep.proj.b"));
    case EpBranchKind::kLstmBranch: {
      Tensor p = add_rows(matmul(block0_row, model_.param("ep.proj.w")),
                          model_.param("ep.proj.b"));
      Tensor h = lstm_step("ep.lstm", ep_lstm_, p, cfg.ep_layers, cfg.ep_dim);
      return add_rows(matmul(h, model_.param("ep.out.w")),
                      model_.param("ep.out.b"));
    }
    case EpBranchKind::kConformerBranch: {
      Tensor p = add_rows(matmul(block0_row, model_.param("ep.proj.w")),
                          model_.param("ep.proj.b"));
      Tensor h = conformer_step("ep.conf", ep_conf_, p, cfg.attention_heads);
      Tensor z = add_rows(matmul(h, model_.param("ep.out.w")),
                          model_.param("ep.out.b"));
      return layer_norm(z, model_.param("ep.ln.g"), model_.param("ep.ln.b"));
    }
  }
  throw std::invalid_argument("endpointer_step: unknown branch kind");
}

StreamingEncoder::StepOutput StreamingEncoder::step(const Tensor& frame) {
  const auto& cfg = model_.config();
  if (frame.rank() != 2 || frame.dim(0) != 1 || frame.dim(1) != cfg.input_dim) {
    throw std::invalid_argument("StreamingEncoder::step: expects 1 x input_dim");
  }
  frames_consumed_ += 1;

  Tensor x = add_rows(matmul(frame, model_.param("enc.in_proj.w")),
                      model_.param("enc.in_proj.b"));
  for (size_t l = 0; l < block0_.size(); ++l) {
    x = conformer_step("enc.b0." + std::to_string(l), block0_[l], x,
                       cfg.attention_heads);
  }

  StepOutput out;
  out.ep_logits = endpointer_step(frame, x);

  if (!pending_.has_value()) {
    pending_ = x;
    return out;
  }
  Tensor stacked = concat_cols(*pending_, x);
  pending_.reset();

  const auto widths = cfg.b1_widths();
  Tensor y = add_rows(matmul(stacked, model_.param("enc.b1.in_proj.w")),
                      model_.param("enc.b1.in_proj.b"));
  for (size_t l = 0; l < block1_.size(); ++l) {
    const std::string p = "enc.b1." + std::to_string(l);
    if (l > 0 && widths[l] != widths[l - 1]) {
      y = add_rows(matmul(y, model_.param(p + ".proj.w")),
                   model_.param(p + ".proj.b"));
    }
    y = conformer_step(p, block1_[l], y, cfg.attention_heads);
  }
  y = layer_norm(y, model_.param("enc.out_ln.g"), model_.param("enc.out_ln.b"));
  encoder_frames_ += 1;
  out.encoder_frame = std::move(y);
  return out;
}

}  // namespace rnnt
