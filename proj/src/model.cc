// src/model.cc

#include "rnnt/model.h"

#include <cmath>
#include <stdexcept>

#include "rnnt/ops.h"

namespace rnnt {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

int round_to_multiple(double value, int multiple) {
  int v = static_cast<int>(std::lround(value));
  v = std::max(v, multiple);
  const int rem = v % multiple;
  if (rem != 0) v += multiple - rem;
  return v;
}

}  // namespace

const char* to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::kLstm: return "lstm";
    case PredictorKind::kEmbedding: return "embedding";
  }
  return "?";
}

const char* to_string(EpBranchKind kind) {
  switch (kind) {
    case EpBranchKind::kStandaloneLstm: return "standalone_lstm";
    case EpBranchKind::kProjectionOnly: return "projection_only";
    case EpBranchKind::kLstmBranch: return "lstm_branch";
    case EpBranchKind::kConformerBranch: return "conformer_branch";
  }
  return "?";
}

PredictorKind predictor_kind_from_string(const std::string& s) {
  if (s == "lstm") return PredictorKind::kLstm;
  if (s == "embedding") return PredictorKind::kEmbedding;
  throw std::invalid_argument("unknown predictor_kind: " + s);
}

EpBranchKind ep_branch_kind_from_string(const std::string& s) {
  if (s == "standalone_lstm") return EpBranchKind::kStandaloneLstm;
  if (s == "projection_only") return EpBranchKind::kProjectionOnly;
  if (s == "lstm_branch") return EpBranchKind::kLstmBranch;
  if (s == "conformer_branch") return EpBranchKind::kConformerBranch;
  throw std::invalid_argument("unknown ep_branch_kind: " + s);
}

int ModelConfig::enc_dim() const {
  if (width_multiplier == 1.0) return encoder_dim;
  return round_to_multiple(encoder_dim * width_multiplier, attention_heads);
}

int ModelConfig::b0_layers() const {
  if (depth_multiplier == 1.0) return block0_layers;
  return std::max(1, static_cast<int>(std::lround(block0_layers * depth_multiplier)));
}

int ModelConfig::b1_layers() const {
  if (depth_multiplier == 1.0) return block1_layers;
  return std::max(1, static_cast<int>(std::lround(block1_layers * depth_multiplier)));
}

std::vector<int> ModelConfig::b1_widths() const {
  const int n = b1_layers();
  std::vector<int> widths;
  if (block1_widths.empty()) {
    widths.assign(static_cast<size_t>(n), enc_dim());
  } else {
    widths = block1_widths;
    if (width_multiplier != 1.0) {
      for (auto& w : widths) {
        w = round_to_multiple(w * width_multiplier, attention_heads);
      }
    }
  }
  return widths;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) {
      throw std::invalid_argument(std::string("ModelConfig: ") + name +
                                  " must be positive");
    }
  };
  positive(input_dim, "input_dim");
  positive(encoder_dim, "encoder_dim");
  positive(block0_layers, "block0_layers");
  positive(block1_layers, "block1_layers");
  positive(attention_heads, "attention_heads");
  positive(conv_kernel_size, "conv_kernel_size");
  positive(ffn_multiplier, "ffn_multiplier");
  positive(predictor_layers, "predictor_layers");
  positive(predictor_dim, "predictor_dim");
  positive(joint_dim, "joint_dim");
  positive(ep_dim, "ep_dim");
  positive(ep_layers, "ep_layers");
  if (vocab_size < 2) {
    throw std::invalid_argument("ModelConfig: vocab_size must be >= 2");
  }
  if (predictor_kind == PredictorKind::kEmbedding && predictor_context_size < 1) {
    throw std::invalid_argument(
        "ModelConfig: predictor_context_size must be >= 1");
  }
  if (lid_dim < 0) throw std::invalid_argument("ModelConfig: lid_dim < 0");
  if (enc_dim() % attention_heads != 0) {
    throw std::invalid_argument(
        "ModelConfig: encoder_dim must be a multiple of attention_heads");
  }
  if (!block1_widths.empty() &&
      static_cast<int>(block1_widths.size()) != b1_layers()) {
    throw std::invalid_argument(
        "ModelConfig: block1_widths must match block1 layer count");
  }
  for (int w : b1_widths()) {
    if (w % attention_heads != 0) {
      throw std::invalid_argument(
          "ModelConfig: block1 widths must be multiples of attention_heads");
    }
  }
  if (ep_branch_kind == EpBranchKind::kConformerBranch &&
      ep_dim % attention_heads != 0) {
    throw std::invalid_argument(
        "ModelConfig: ep_dim must be a multiple of attention_heads");
  }
  if (eou_in_vocab && has_eou_joint) {
    throw std::invalid_argument(
        "ModelConfig: eou_in_vocab excludes a separate EOU joint");
  }
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build_shapes();
}

namespace {

// Registers one Conformer layer's parameter shapes.
void conformer_shapes(std::map<std::string, Tensor>& out,
                      const std::string& prefix, int d, int ffn_mult, int k) {
  const int f = ffn_mult * d;
  auto put = [&](const std::string& name, Shape shape) {
    out.emplace(prefix + name, Tensor::zeros(std::move(shape)));
  };
  for (const char* ffn : {".ffn1", ".ffn2"}) {
    put(std::string(ffn) + ".ln.g", {d});
    put(std::string(ffn) + ".ln.b", {d});
    put(std::string(ffn) + ".w1", {d, f});
    put(std::string(ffn) + ".b1", {f});
    put(std::string(ffn) + ".w2", {f, d});
    put(std::string(ffn) + ".b2", {d});
  }
  put(".conv.ln.g", {d});
  put(".conv.ln.b", {d});
  put(".conv.dw", {k, d});
  put(".conv.pw.w", {d, d});
  put(".conv.pw.b", {d});
  put(".attn.ln.g", {d});
  put(".attn.ln.b", {d});
  for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"}) {
    put(w, {d, d});
  }
  for (const char* b : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"}) {
    put(b, {d});
  }
  put(".out_ln.g", {d});
  put(".out_ln.b", {d});
}

void lstm_shapes(std::map<std::string, Tensor>& out, const std::string& prefix,
                 int layers, int input_dim, int hidden) {
  for (int l = 0; l < layers; ++l) {
    const int din = l == 0 ? input_dim : hidden;
    const std::string p = prefix + ".l" + std::to_string(l);
    auto put = [&](const char* name, Shape shape) {
      out.emplace(p + name, Tensor::zeros(std::move(shape)));
    };
    for (const char* g : {"i", "f", "g", "o"}) {
      put((std::string(".wx") + g).c_str(), {din, hidden});
      put((std::string(".wh") + g).c_str(), {hidden, hidden});
      put((std::string(".b") + g).c_str(), {hidden});
    }
  }
}

void joint_shapes(std::map<std::string, Tensor>& out, const std::string& prefix,
                  int enc_out, int pred_dim, int joint_dim, int width) {
  out.emplace(prefix + ".enc.w", Tensor::zeros({enc_out, joint_dim}));
  out.emplace(prefix + ".pred.w", Tensor::zeros({pred_dim, joint_dim}));
  out.emplace(prefix + ".b", Tensor::zeros({joint_dim}));
  out.emplace(prefix + ".out.w", Tensor::zeros({joint_dim, width}));
  out.emplace(prefix + ".out.b", Tensor::zeros({width}));
}

}  // namespace

void Model::build_shapes() {
  params_.clear();
  const int d0 = cfg_.enc_dim();
  const auto widths = cfg_.b1_widths();

  params_.emplace("enc.in_proj.w", Tensor::zeros({cfg_.input_dim, d0}));
  params_.emplace("enc.in_proj.b", Tensor::zeros({d0}));
  for (int i = 0; i < cfg_.b0_layers(); ++i) {
    conformer_shapes(params_, "enc.b0." + std::to_string(i), d0,
                     cfg_.ffn_multiplier, cfg_.conv_kernel_size);
  }
  params_.emplace("enc.b1.in_proj.w", Tensor::zeros({2 * d0, widths[0]}));
  params_.emplace("enc.b1.in_proj.b", Tensor::zeros({widths[0]}));
  for (int i = 0; i < cfg_.b1_layers(); ++i) {
    const std::string p = "enc.b1." + std::to_string(i);
    if (i > 0 && widths[static_cast<size_t>(i)] != widths[static_cast<size_t>(i - 1)]) {
      params_.emplace(p + ".proj.w",
                      Tensor::zeros({widths[static_cast<size_t>(i - 1)],
                                     widths[static_cast<size_t>(i)]}));
      params_.emplace(p + ".proj.b", Tensor::zeros({widths[static_cast<size_t>(i)]}));
    }
    conformer_shapes(params_, p, widths[static_cast<size_t>(i)],
                     cfg_.ffn_multiplier, cfg_.conv_kernel_size);
  }
  params_.emplace("enc.out_ln.g", Tensor::zeros({widths.back()}));
  params_.emplace("enc.out_ln.b", Tensor::zeros({widths.back()}));

  switch (cfg_.ep_branch_kind) {
    case EpBranchKind::kStandaloneLstm:
      lstm_shapes(params_, "ep.lstm", cfg_.ep_layers, cfg_.input_dim, cfg_.ep_dim);
      params_.emplace("ep.out.w", Tensor::zeros({cfg_.ep_dim, 4}));
      params_.emplace("ep.out.b", Tensor::zeros({4}));
      break;
    case EpBranchKind::kProjectionOnly:
      params_.emplace("ep.proj.w", Tensor::zeros({d0, 4}));
      params_.emplace("ep.proj.b", Tensor::zeros({4}));
      break;
    case EpBranchKind::kLstmBranch:
      params_.emplace("ep.proj.w", Tensor::zeros({d0, cfg_.ep_dim}));
      params_.emplace("ep.proj.b", Tensor::zeros({cfg_.ep_dim}));
      lstm_shapes(params_, "ep.lstm", cfg_.ep_layers, cfg_.ep_dim, cfg_.ep_dim);
      params_.emplace("ep.out.w", Tensor::zeros({cfg_.ep_dim, 4}));
      params_.emplace("ep.out.b", Tensor::zeros({4}));
      break;
    case EpBranchKind::kConformerBranch:
      params_.emplace("ep.proj.w", Tensor::zeros({d0, cfg_.ep_dim}));
      params_.emplace("ep.proj.b", Tensor::zeros({cfg_.ep_dim}));
      conformer_shapes(params_, "ep.conf", cfg_.ep_dim, cfg_.ffn_multiplier,
                       cfg_.conv_kernel_size);
      params_.emplace("ep.out.w", Tensor::zeros({cfg_.ep_dim, 4}));
      params_.emplace("ep.out.b", Tensor::zeros({4}));
      params_.emplace("ep.ln.g", Tensor::zeros({4}));
      params_.emplace("ep.ln.b", Tensor::zeros({4}));
      break;
  }

  params_.emplace("pred.emb",
                  Tensor::zeros({cfg_.embedding_rows(), cfg_.predictor_dim}));
  if (cfg_.predictor_kind == PredictorKind::kLstm) {
    lstm_shapes(params_, "pred.lstm", cfg_.predictor_layers, cfg_.predictor_dim,
                cfg_.predictor_dim);
  } else {
    params_.emplace(
        "pred.proj.w",
        Tensor::zeros({cfg_.predictor_context_size * cfg_.predictor_dim,
                       cfg_.predictor_dim}));
    params_.emplace("pred.proj.b", Tensor::zeros({cfg_.predictor_dim}));
  }

  joint_shapes(params_, "joint", cfg_.encoder_out_dim(), cfg_.predictor_dim,
               cfg_.joint_dim, cfg_.recognition_width());
  if (cfg_.has_eou_joint) {
    joint_shapes(params_, "eou", cfg_.encoder_out_dim(), cfg_.predictor_dim,
                 cfg_.joint_dim, cfg_.eou_joint_width());
  }
}

void Model::init_params(uint64_t seed) {
  for (auto& [name, tensor] : params_) {
    std::mt19937_64 rng(derive_seed(seed, fnv1a(name)));
    const bool is_ln_gain = name.ends_with("ln.g");
    const bool is_ln_bias = name.ends_with("ln.b");
    const bool is_forget_bias = name.ends_with(".bf");
    const bool is_bias = tensor.rank() == 1;
    if (is_ln_gain) {
      for (auto& x : tensor.vec()) x = 1.0;
    } else if (is_ln_bias) {
      for (auto& x : tensor.vec()) x = 0.0;
    } else if (is_forget_bias) {
      for (auto& x : tensor.vec()) x = 1.0;
    } else if (is_bias) {
      for (auto& x : tensor.vec()) x = 0.0;
    } else {
      const int fan_in = tensor.dim(0);
      std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(fan_in));
      for (auto& x : tensor.vec()) x = dist(rng);
    }
  }
}

Tensor& Model::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::invalid_argument("missing parameter: " + name);
  }
  return it->second;
}

const Tensor& Model::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::invalid_argument("missing parameter: " + name);
  }
  return it->second;
}

bool Model::has_param(const std::string& name) const {
  return params_.count(name) != 0;
}

int64_t Model::total_params() const {
  int64_t n = 0;
  for (const auto& [name, tensor] : params_) n += tensor.numel();
  return n;
}

void Model::set_trainable(const std::function<bool(const std::string&)>& pred) {
  for (auto& [name, tensor] : params_) tensor.set_requires_grad(pred(name));
}

std::vector<std::string> Model::trainable_names() const {
  std::vector<std::string> names;
  for (const auto& [name, tensor] : params_) {
    if (tensor.requires_grad()) names.push_back(name);
  }
  return names;
}

void Model::init_eou_from_recognition() {
  if (cfg_.has_eou_joint) {
    throw std::invalid_argument("EOU joint already initialized");
  }
  if (cfg_.eou_in_vocab) {
    throw std::invalid_argument(
        "EOU joint cannot be added to an eou_in_vocab model");
  }
  cfg_.has_eou_joint = true;
  joint_shapes(params_, "eou", cfg_.encoder_out_dim(), cfg_.predictor_dim,
               cfg_.joint_dim, cfg_.eou_joint_width());
  for (const char* shared : {".enc.w", ".pred.w", ".b"}) {
    param(std::string("eou") + shared).vec() =
        param(std::string("joint") + shared).vec();
  }
  // Output projection: token/blank columns copied, EOU column zero.
  const Tensor& src_w = param("joint.out.w");
  Tensor& dst_w = param("eou.out.w");
  const int j = cfg_.joint_dim;
  const int src_k = cfg_.recognition_width();
  for (int r = 0; r < j; ++r) {
    for (int c = 0; c < src_k; ++c) dst_w.at(r, c) = src_w.at(r, c);
  }
  const Tensor& src_b = param("joint.out.b");
  Tensor& dst_b = param("eou.out.b");
  for (int c = 0; c < src_k; ++c) dst_b.at(static_cast<int64_t>(c)) = src_b.at(static_cast<int64_t>(c));
}

Tensor Model::conformer_layer(const std::string& prefix, const Tensor& x,
                              int heads) const {
  auto p = [&](const char* suffix) -> const Tensor& {
    return param(prefix + suffix);
  };
  // Half-step feed-forward.
  Tensor h = layer_norm(x, p(".ffn1.ln.g"), p(".ffn1.ln.b"));
  h = silu(add_rows(matmul(h, p(".ffn1.w1")), p(".ffn1.b1")));
  h = add_rows(matmul(h, p(".ffn1.w2")), p(".ffn1.b2"));
  Tensor x1 = add(x, scale(h, 0.5));
  // Causal depthwise conv block.
  Tensor c = layer_norm(x1, p(".conv.ln.g"), p(".conv.ln.b"));
  c = silu(causal_conv1d(c, p(".conv.dw")));
  c = add_rows(matmul(c, p(".conv.pw.w")), p(".conv.pw.b"));
  Tensor x2 = add(x1, c);
  // Left-context self-attention.
  Tensor a = layer_norm(x2, p(".attn.ln.g"), p(".attn.ln.b"));
  Tensor q = add_rows(matmul(a, p(".attn.wq")), p(".attn.bq"));
  Tensor k = add_rows(matmul(a, p(".attn.wk")), p(".attn.bk"));
  Tensor v = add_rows(matmul(a, p(".attn.wv")), p(".attn.bv"));
  Tensor o = sdpa_causal(q, k, v, heads, cfg_.attention_left_context);
  o = add_rows(matmul(o, p(".attn.wo")), p(".attn.bo"));
  Tensor x3 = add(x2, o);
  // Second half-step feed-forward and closing norm.
  Tensor h2 = layer_norm(x3, p(".ffn2.ln.g"), p(".ffn2.ln.b"));
  h2 = silu(add_rows(matmul(h2, p(".ffn2.w1")), p(".ffn2.b1")));
  h2 = add_rows(matmul(h2, p(".ffn2.w2")), p(".ffn2.b2"));
  Tensor x4 = add(x3, scale(h2, 0.5));
  return layer_norm(x4, p(".out_ln.g"), p(".out_ln.b"));
}

Model::EncoderOut Model::encoder_forward(const Tensor& frames) const {
  if (frames.rank() != 2 || frames.dim(1) != cfg_.input_dim) {
    throw std::invalid_argument("encoder_forward: expects T x input_dim");
  }
  if (frames.dim(0) < 2) {
    throw std::invalid_argument(
        "encoder_forward: needs T >= 2 for the stacking layer");
  }
  Tensor x = add_rows(matmul(frames, param("enc.in_proj.w")),
                      param("enc.in_proj.b"));
  for (int i = 0; i < cfg_.b0_layers(); ++i) {
    x = conformer_layer("enc.b0." + std::to_string(i), x, cfg_.attention_heads);
  }
  Tensor block0 = x;

  Tensor s = stack_pairs(x);
  const auto widths = cfg_.b1_widths();
  Tensor y = add_rows(matmul(s, param("enc.b1.in_proj.w")),
                      param("enc.b1.in_proj.b"));
  for (int i = 0; i < cfg_.b1_layers(); ++i) {
    const std::string p = "enc.b1." + std::to_string(i);
    if (i > 0 && widths[static_cast<size_t>(i)] != widths[static_cast<size_t>(i - 1)]) {
      y = add_rows(matmul(y, param(p + ".proj.w")), param(p + ".proj.b"));
    }
    y = conformer_layer(p, y, cfg_.attention_heads);
  }
  y = layer_norm(y, param("enc.out_ln.g"), param("enc.out_ln.b"));
  return {std::move(block0), std::move(y)};
}

std::pair<Tensor, Tensor> lstm_cell(const Model& m, const std::string& prefix,
                                    const Tensor& x, const Tensor& h,
                                    const Tensor& c) {
  auto gate = [&](const char* g) {
    return add_rows(add(matmul(x, m.param(prefix + ".wx" + g)),
                        matmul(h, m.param(prefix + ".wh" + g))),
                    m.param(prefix + ".b" + g));
  };
  Tensor i = sigmoid(gate("i"));
  Tensor f = sigmoid(gate("f"));
  Tensor g = tanh_act(gate("g"));
  Tensor o = sigmoid(gate("o"));
  Tensor c_next = add(mul(f, c), mul(i, g));
  Tensor h_next = mul(o, tanh_act(c_next));
  return {std::move(h_next), std::move(c_next)};
}

Tensor Model::lstm_stack_seq(const std::string& prefix, const Tensor& rows,
                             int layers, int hidden) const {
  Tensor cur = rows;
  for (int l = 0; l < layers; ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    Tensor h = Tensor::zeros({1, hidden});
    Tensor c = Tensor::zeros({1, hidden});
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(cur.dim(0)));
    for (int t = 0; t < cur.dim(0); ++t) {
      Tensor xt = slice_rows(cur, t, 1);
      auto hc = lstm_cell(*this, p, xt, h, c);
      h = std::move(hc.first);
      c = std::move(hc.second);
      outs.push_back(h);
    }
    cur = concat_rows(outs);
  }
  return cur;
}

Tensor Model::endpointer_forward(const Tensor& frames,
                                 const Tensor& block0) const {
  switch (cfg_.ep_branch_kind) {
    case EpBranchKind::kStandaloneLstm: {
      Tensor h = lstm_stack_seq("ep.lstm", frames, cfg_.ep_layers, cfg_.ep_dim);
      return add_rows(matmul(h, param("ep.out.w")), param("ep.out.b"));
    }
    case EpBranchKind::kProjectionOnly:
      return add_rows(matmul(block0, param("ep.proj.w")), param("ep.proj.b"));
    case EpBranchKind::kLstmBranch: {
      Tensor p = add_rows(matmul(block0, param("ep.proj.w")), param("ep.proj.b"));
      Tensor h = lstm_stack_seq("ep.lstm", p, cfg_.ep_layers, cfg_.ep_dim);
      return add_rows(matmul(h, param("ep.out.w")), param("ep.out.b"));
    }
    case EpBranchKind::kConformerBranch: {
      Tensor p = add_rows(matmul(block0, param("ep.proj.w")), param("ep.proj.b"));
      Tensor h = conformer_layer("ep.conf", p, cfg_.attention_heads);
      Tensor z = add_rows(matmul(h, param("ep.out.w")), param("ep.out.b"));
      return layer_norm(z, param("ep.ln.g"), param("ep.ln.b"));
    }
  }
  throw std::invalid_argument("endpointer_forward: unknown branch kind");
}

Model::PredictorState Model::predictor_initial_state() const {
  PredictorState state;
  if (cfg_.predictor_kind == PredictorKind::kLstm) {
    for (int l = 0; l < cfg_.predictor_layers; ++l) {
      state.h.push_back(Tensor::zeros({1, cfg_.predictor_dim}));
      state.c.push_back(Tensor::zeros({1, cfg_.predictor_dim}));
    }
    // Consuming the start row gives the learned empty-prefix output.
    Tensor x = embedding_lookup(param("pred.emb"), {0});
    for (int l = 0; l < cfg_.predictor_layers; ++l) {
      auto hc = lstm_cell(*this, "pred.lstm.l" + std::to_string(l), x,
                          state.h[static_cast<size_t>(l)], state.c[static_cast<size_t>(l)]);
      state.h[static_cast<size_t>(l)] = hc.first;
      state.c[static_cast<size_t>(l)] = hc.second;
      x = hc.first;
    }
    state.output = x;
  } else {
    state.context.assign(static_cast<size_t>(cfg_.predictor_context_size), 0);
    std::vector<int> ids = state.context;
    Tensor emb = embedding_lookup(param("pred.emb"), ids);
    Tensor flat = reshape(emb, {1, cfg_.predictor_context_size * cfg_.predictor_dim});
    state.output = tanh_act(
        add_rows(matmul(flat, param("pred.proj.w")), param("pred.proj.b")));
  }
  return state;
}

Model::PredictorState Model::predictor_advance(const PredictorState& state,
                                               int token) const {
  if (token == cfg_.blank_id()) {
    throw std::invalid_argument("predictor_advance: blank is not consumable");
  }
  if (token < 1 || token > cfg_.eou_id()) {
    throw std::invalid_argument("predictor_advance: token id " +
                                std::to_string(token) + " out of range");
  }
  PredictorState next;
  if (cfg_.predictor_kind == PredictorKind::kLstm) {
    next.h = state.h;
    next.c = state.c;
    Tensor x = embedding_lookup(param("pred.emb"), {token});
    for (int l = 0; l < cfg_.predictor_layers; ++l) {
      auto hc = lstm_cell(*this, "pred.lstm.l" + std::to_string(l), x,
                          next.h[static_cast<size_t>(l)], next.c[static_cast<size_t>(l)]);
      next.h[static_cast<size_t>(l)] = hc.first;
      next.c[static_cast<size_t>(l)] = hc.second;
      x = hc.first;
    }
    next.output = x;
  } else {
    next.context = state.context;
    next.context.erase(next.context.begin());
    next.context.push_back(token);
    Tensor emb = embedding_lookup(param("pred.emb"), next.context);
    Tensor flat = reshape(emb, {1, cfg_.predictor_context_size * cfg_.predictor_dim});
    next.output = tanh_act(
        add_rows(matmul(flat, param("pred.proj.w")), param("pred.proj.b")));
  }
  return next;
}

Tensor Model::predictor_forward_seq(const std::vector<int>& tokens) const {
  PredictorState state = predictor_initial_state();
  std::vector<Tensor> rows;
  rows.reserve(tokens.size() + 1);
  rows.push_back(state.output);
  for (int tok : tokens) {
    state = predictor_advance(state, tok);
    rows.push_back(state.output);
  }
  return concat_rows(rows);
}

Tensor Model::joint_lattice(const Tensor& enc_rows, const Tensor& pred_rows,
                            bool use_eou_joint) const {
  const std::string prefix = use_eou_joint ? "eou" : "joint";
  if (use_eou_joint && !cfg_.has_eou_joint) {
    throw std::invalid_argument("joint_lattice: model has no EOU joint");
  }
  Tensor ep = matmul(enc_rows, param(prefix + ".enc.w"));
  Tensor pp = matmul(pred_rows, param(prefix + ".pred.w"));
  Tensor z = tanh_act(add_rows(outer_add(ep, pp), param(prefix + ".b")));
  return add_rows(matmul(z, param(prefix + ".out.w")), param(prefix + ".out.b"));
}

Tensor Model::joint_logits(const Tensor& enc_frame, const Tensor& pred_vec,
                           bool use_eou_joint) const {
  const std::string prefix = use_eou_joint ? "eou" : "joint";
  if (use_eou_joint && !cfg_.has_eou_joint) {
    throw std::invalid_argument("joint_logits: model has no EOU joint");
  }
  if (enc_frame.rank() != 2 || enc_frame.dim(0) != 1 ||
      enc_frame.dim(1) != cfg_.encoder_out_dim()) {
    throw std::invalid_argument("joint_logits: bad encoder frame shape");
  }
  if (pred_vec.rank() != 2 || pred_vec.dim(0) != 1 ||
      pred_vec.dim(1) != cfg_.predictor_dim) {
    throw std::invalid_argument("joint_logits: bad predictor vector shape");
  }
  Tensor ep = matmul(enc_frame, param(prefix + ".enc.w"));
  Tensor pp = matmul(pred_vec, param(prefix + ".pred.w"));
  Tensor z = tanh_act(add_rows(add(ep, pp), param(prefix + ".b")));
  return add_rows(matmul(z, param(prefix + ".out.w")), param(prefix + ".out.b"));
}

int64_t Model::expected_param_count(const ModelConfig& cfg) {
  const int64_t d0 = cfg.enc_dim();
  const auto widths = cfg.b1_widths();
  const int64_t k = cfg.conv_kernel_size;
  const int64_t mult = cfg.ffn_multiplier;

  auto conformer = [&](int64_t d) {
    const int64_t f = mult * d;
    const int64_t ffn = 2 * d + d * f + f + f * d + d;
    const int64_t conv = 2 * d + k * d + d * d + d;
    const int64_t attn = 2 * d + 4 * (d * d + d);
    return 2 * ffn + conv + attn + 2 * d;
  };
  auto lstm = [](int64_t din, int64_t dh) { return 4 * (din * dh + dh * dh + dh); };

  int64_t total = 0;
  // Encoder.
  total += static_cast<int64_t>(cfg.input_dim) * d0 + d0;
  total += cfg.b0_layers() * conformer(d0);
  total += 2 * d0 * widths[0] + widths[0];
  for (size_t i = 0; i < widths.size(); ++i) {
    if (i > 0 && widths[i] != widths[i - 1]) {
      total += static_cast<int64_t>(widths[i - 1]) * widths[i] + widths[i];
    }
    total += conformer(widths[i]);
  }
  total += 2 * static_cast<int64_t>(widths.back());
  // Endpointer branch.
  const int64_t ep = cfg.ep_dim;
  switch (cfg.ep_branch_kind) {
    case EpBranchKind::kStandaloneLstm:
      total += lstm(cfg.input_dim, ep) + (cfg.ep_layers - 1) * lstm(ep, ep);
      total += ep * 4 + 4;
      break;
    case EpBranchKind::kProjectionOnly:
      total += d0 * 4 + 4;
      break;
    case EpBranchKind::kLstmBranch:
      total += d0 * ep + ep;
      total += lstm(ep, ep) * cfg.ep_layers;
      total += ep * 4 + 4;
      break;
    case EpBranchKind::kConformerBranch:
      total += d0 * ep + ep;
      total += conformer(ep);
      total += ep * 4 + 4 + 8;
      break;
  }
  // Prediction network.
  const int64_t dp = cfg.predictor_dim;
  total += static_cast<int64_t>(cfg.embedding_rows()) * dp;
  if (cfg.predictor_kind == PredictorKind::kLstm) {
    total += cfg.predictor_layers * lstm(dp, dp);
  } else {
    total += static_cast<int64_t>(cfg.predictor_context_size) * dp * dp + dp;
  }
  // Joints.
  const int64_t j = cfg.joint_dim;
  const int64_t de = cfg.encoder_out_dim();
  auto joint = [&](int64_t width) { return de * j + dp * j + j + j * width + width; };
  total += joint(cfg.recognition_width());
  if (cfg.has_eou_joint) total += joint(cfg.eou_joint_width());
  return total;
}

}  // namespace rnnt
