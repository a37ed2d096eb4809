// tests/test_model.cc

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "grad_check.h"
#include "rnnt/model.h"
#include "rnnt/ops.h"
#include "rnnt/streaming.h"
#include "rnnt/transducer.h"

using namespace rnnt;
using rnnt::testing::grad_close;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.encoder_dim = 8;
  cfg.block0_layers = 2;
  cfg.block1_layers = 2;
  cfg.attention_heads = 2;
  cfg.conv_kernel_size = 3;
  cfg.ffn_multiplier = 2;
  cfg.predictor_kind = PredictorKind::kLstm;
  cfg.predictor_layers = 1;
  cfg.predictor_dim = 8;
  cfg.joint_dim = 8;
  cfg.vocab_size = 10;
  cfg.ep_branch_kind = EpBranchKind::kConformerBranch;
  cfg.ep_dim = 4;
  cfg.ep_layers = 1;
  return cfg;
}

Tensor random_frames(int t_len, int d, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor::randn({t_len, d}, rng, 1.0);
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i) {
    if (a.at(i) != b.at(i)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("encoder geometry") {
  Model m(small_config());
  m.init_params(1);

  auto out12 = m.encoder_forward(random_frames(12, 6, 2));
  CHECK(out12.block0.dim(0) == 12);
  CHECK(out12.block0.dim(1) == 8);
  CHECK(out12.encoder.dim(0) == 6);
  CHECK(out12.encoder.dim(1) == 8);

  auto out13 = m.encoder_forward(random_frames(13, 6, 2));
  CHECK(out13.encoder.dim(0) == 6);  // odd tail dropped

  CHECK_THROWS(m.encoder_forward(random_frames(1, 6, 2)));
}

TEST_CASE("encoder causality: future frames never reach earlier outputs") {
  Model m(small_config());
  m.init_params(3);
  Tensor frames = random_frames(12, 6, 4);
  auto base = m.encoder_forward(frames);

  Tensor poked = frames.clone();
  poked.at(11, 0) += 50.0;
  poked.at(11, 3) -= 9.0;
  auto out = m.encoder_forward(poked);
  // Encoder frame 5 covers inputs 10-11; frames 0..4 must be untouched.
  for (int t = 0; t <= 4; ++t) {
    for (int c = 0; c < 8; ++c) CHECK(out.encoder.at(t, c) == base.encoder.at(t, c));
  }
  for (int t = 0; t <= 10; ++t) {
    for (int c = 0; c < 8; ++c) CHECK(out.block0.at(t, c) == base.block0.at(t, c));
  }

  SUBCASE("prefix forward is bit-identical to full forward") {
    auto prefix = m.encoder_forward(slice_rows(frames, 0, 8));
    for (int t = 0; t < 4; ++t) {
      for (int c = 0; c < 8; ++c) {
        CHECK(prefix.encoder.at(t, c) == base.encoder.at(t, c));
      }
    }
  }
}

TEST_CASE("streaming encoder matches batch bit-exactly") {
  for (auto kind :
       {EpBranchKind::kStandaloneLstm, EpBranchKind::kProjectionOnly,
        EpBranchKind::kLstmBranch, EpBranchKind::kConformerBranch}) {
    ModelConfig cfg = small_config();
    cfg.ep_branch_kind = kind;
    Model m(cfg);
    m.init_params(7);
    Tensor frames = random_frames(9, 6, 8);

    auto batch = m.encoder_forward(frames);
    Tensor batch_ep = m.endpointer_forward(frames, batch.block0);

    StreamingEncoder stream(m);
    int enc_t = 0;
    for (int t = 0; t < 9; ++t) {
      auto step = stream.step(slice_rows(frames, t, 1));
      REQUIRE(step.ep_logits.dim(1) == 4);
      for (int c = 0; c < 4; ++c) {
        CHECK(step.ep_logits.at(0, c) == batch_ep.at(t, c));
      }
      if (step.encoder_frame.has_value()) {
        for (int c = 0; c < 8; ++c) {
          CHECK(step.encoder_frame->at(0, c) == batch.encoder.at(enc_t, c));
        }
        ++enc_t;
      }
    }
    CHECK(enc_t == 4);  // frame 8 stays in the parity buffer
    CHECK(stream.frames_consumed() == 9);
  }
}

TEST_CASE("endpointer shapes and degenerate uniform case") {
  ModelConfig cfg = small_config();
  cfg.ep_branch_kind = EpBranchKind::kProjectionOnly;
  Model m(cfg);
  m.init_params(5);
  Tensor frames = random_frames(7, 6, 6);
  auto enc = m.encoder_forward(frames);
  Tensor ep = m.endpointer_forward(frames, enc.block0);
  CHECK(ep.dim(0) == 7);
  CHECK(ep.dim(1) == 4);

  // Zero projection: logits all zero, posterior uniform.
  m.param("ep.proj.w").vec().assign(m.param("ep.proj.w").vec().size(), 0.0);
  m.param("ep.proj.b").vec().assign(4, 0.0);
  Tensor ep0 = m.endpointer_forward(frames, enc.block0);
  for (int64_t i = 0; i < ep0.numel(); ++i) CHECK(ep0.at(i) == 0.0);
  Tensor post = log_softmax(ep0);
  for (int64_t i = 0; i < post.numel(); ++i) {
    CHECK(std::fabs(std::exp(post.at(i)) - 0.25) <= 1e-15);
  }
}

TEST_CASE("predictor contracts") {
  SUBCASE("embedding variant depends only on the context window") {
    ModelConfig cfg = small_config();
    cfg.predictor_kind = PredictorKind::kEmbedding;
    cfg.predictor_context_size = 2;
    Model m(cfg);
    m.init_params(11);

    auto run = [&](const std::vector<int>& prefix) {
      auto st = m.predictor_initial_state();
      for (int tok : prefix) st = m.predictor_advance(st, tok);
      return st.output;
    };
    Tensor a = run({5, 9, 3, 7});
    Tensor b = run({1, 2, 3, 7});
    CHECK(tensors_equal(a, b));

    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> tok(1, 10), len(2, 8);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<int> p1(static_cast<size_t>(len(rng)));
      std::vector<int> p2(static_cast<size_t>(len(rng)));
      for (auto& t : p1) t = tok(rng);
      for (auto& t : p2) t = tok(rng);
      // Force equal trailing window.
      p2[p2.size() - 1] = p1[p1.size() - 1];
      p2[p2.size() - 2] = p1[p1.size() - 2];
      CHECK(tensors_equal(run(p1), run(p2)));
    }
  }
  SUBCASE("lstm variant distinguishes full histories") {
    Model m(small_config());
    m.init_params(17);
    auto run = [&](const std::vector<int>& prefix) {
      auto st = m.predictor_initial_state();
      for (int tok : prefix) st = m.predictor_advance(st, tok);
      return st.output;
    };
    Tensor a = run({5, 9, 3, 7});
    Tensor b = run({1, 2, 3, 7});
    double diff = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) diff += std::fabs(a.at(i) - b.at(i));
    CHECK(diff > 1e-9);
  }
  SUBCASE("empty prefix gives a start vector independent of other rows") {
    Model m(small_config());
    m.init_params(19);
    Tensor before = m.predictor_initial_state().output;
    m.param("pred.emb").at(3, 0) += 100.0;  // unrelated token row
    Tensor after = m.predictor_initial_state().output;
    CHECK(tensors_equal(before, after));
  }
  SUBCASE("blank is not consumable") {
    Model m(small_config());
    m.init_params(23);
    auto st = m.predictor_initial_state();
    CHECK_THROWS(m.predictor_advance(st, 0));
    CHECK_THROWS(m.predictor_advance(st, 99));
  }
}

TEST_CASE("joint layer") {
  Model m(small_config());
  m.init_params(29);
  Tensor frames = random_frames(8, 6, 30);
  auto enc = m.encoder_forward(frames);
  Tensor pred = m.predictor_forward_seq({2, 5});

  SUBCASE("output width is V+1 and lattice matches the per-node loop") {
    Tensor lattice = m.joint_lattice(enc.encoder, pred, false);
    CHECK(lattice.dim(0) == enc.encoder.dim(0) * 3);
    CHECK(lattice.dim(1) == 11);
    for (int t = 0; t < enc.encoder.dim(0); ++t) {
      for (int u = 0; u < 3; ++u) {
        Tensor one = m.joint_logits(slice_rows(enc.encoder, t, 1),
                                    slice_rows(pred, u, 1), false);
        for (int k = 0; k < 11; ++k) {
          CHECK(std::fabs(one.at(0, k) - lattice.at(t * 3 + u, k)) <= 1e-12);
        }
      }
    }
  }
  SUBCASE("zero weights give uniform distribution") {
    for (const char* name :
         {"joint.enc.w", "joint.pred.w", "joint.b", "joint.out.w", "joint.out.b"}) {
      auto& t = m.param(name);
      t.vec().assign(t.vec().size(), 0.0);
    }
    Tensor z = m.joint_logits(slice_rows(enc.encoder, 0, 1),
                              slice_rows(pred, 0, 1), false);
    for (int64_t i = 0; i < z.numel(); ++i) CHECK(z.at(i) == 0.0);
  }
}

TEST_CASE("eou joint init from recognition joint") {
  Model m(small_config());
  m.init_params(31);
  std::map<std::string, std::vector<double>> before;
  for (const auto& [name, t] : m.params()) before[name] = t.vec();

  m.init_eou_from_recognition();
  CHECK(m.config().has_eou_joint);

  // Recognition-side tensors untouched, bit for bit.
  for (const auto& [name, vals] : before) {
    CHECK(m.param(name).vec() == vals);
  }

  Tensor frames = random_frames(6, 6, 33);
  auto enc = m.encoder_forward(frames);
  Tensor pred = m.predictor_forward_seq({1});
  for (int t = 0; t < enc.encoder.dim(0); ++t) {
    Tensor rec = m.joint_logits(slice_rows(enc.encoder, t, 1),
                                slice_rows(pred, 0, 1), false);
    Tensor eou = m.joint_logits(slice_rows(enc.encoder, t, 1),
                                slice_rows(pred, 0, 1), true);
    CHECK(eou.dim(1) == 12);  // V+2
    for (int k = 0; k < 11; ++k) CHECK(eou.at(0, k) == rec.at(0, k));
    CHECK(eou.at(0, 11) == 0.0);  // zero-initialized EOU output

    Tensor sm = log_softmax(eou);
    const double p_eou = std::exp(sm.at(0, 11));
    CHECK(p_eou > 0.0);
    CHECK(p_eou < 1.0);
  }

  CHECK_THROWS(m.init_eou_from_recognition());  // already present
}

TEST_CASE("parameter count formula is exact") {
  std::vector<ModelConfig> configs;
  configs.push_back(small_config());
  {
    ModelConfig c = small_config();
    c.predictor_kind = PredictorKind::kEmbedding;
    c.predictor_context_size = 3;
    configs.push_back(c);
  }
  for (auto kind :
       {EpBranchKind::kStandaloneLstm, EpBranchKind::kProjectionOnly,
        EpBranchKind::kLstmBranch}) {
    ModelConfig c = small_config();
    c.ep_branch_kind = kind;
    c.ep_layers = 2;
    configs.push_back(c);
  }
  {
    ModelConfig c = small_config();
    c.block1_widths = {12, 8};  // width override with re-projection
    c.attention_heads = 2;
    configs.push_back(c);
  }
  {
    ModelConfig c = small_config();
    c.has_eou_joint = true;
    configs.push_back(c);
  }
  {
    ModelConfig c = small_config();
    c.eou_in_vocab = true;
    configs.push_back(c);
  }
  {
    ModelConfig c = small_config();
    c.width_multiplier = 2.0;
    c.depth_multiplier = 2.0;
    configs.push_back(c);
  }
  for (size_t i = 0; i < configs.size(); ++i) {
    CAPTURE(i);
    Model m(configs[i]);
    CHECK(Model::expected_param_count(configs[i]) == m.total_params());
  }
}

TEST_CASE("conformer endpointer branch size at published dims") {
  // Extra endpointer parameters at the reference geometry land near
  // the published ~449K figure (architectural details differ slightly).
  ModelConfig ep3;
  ep3.input_dim = 240;
  ep3.encoder_dim = 512;
  ep3.block0_layers = 3;
  ep3.block1_layers = 9;
  ep3.attention_heads = 8;
  ep3.conv_kernel_size = 15;
  ep3.ffn_multiplier = 4;
  ep3.ep_branch_kind = EpBranchKind::kConformerBranch;
  ep3.ep_dim = 128;
  ep3.vocab_size = 100;
  ModelConfig ep1 = ep3;
  ep1.ep_branch_kind = EpBranchKind::kProjectionOnly;

  const int64_t ep1_size = 512 * 4 + 4;
  const int64_t extra = Model::expected_param_count(ep3) -
                        (Model::expected_param_count(ep1) - ep1_size);
  CHECK(extra >= 400000);
  CHECK(extra <= 500000);
}

TEST_CASE("full tiny model gradient check") {
  ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.encoder_dim = 4;
  cfg.block0_layers = 1;
  cfg.block1_layers = 1;
  cfg.attention_heads = 2;
  cfg.conv_kernel_size = 2;
  cfg.ffn_multiplier = 2;
  cfg.predictor_kind = PredictorKind::kLstm;
  cfg.predictor_layers = 1;
  cfg.predictor_dim = 4;
  cfg.joint_dim = 4;
  cfg.vocab_size = 3;
  cfg.ep_branch_kind = EpBranchKind::kConformerBranch;
  cfg.ep_dim = 4;
  Model m(cfg);
  m.init_params(37);

  Tensor frames = random_frames(6, 4, 38);
  const std::vector<int> targets = {2, 1};        // U = 2
  const std::vector<int> ep_labels = {1, 0, 0, 0, 3, 3};

  auto forward_loss = [&]() {
    auto enc = m.encoder_forward(frames);
    Tensor pred = m.predictor_forward_seq(targets);
    LogitsLattice lat;
    lat.num_frames = enc.encoder.dim(0);
    lat.num_rows = static_cast<int>(targets.size()) + 1;
    lat.width = cfg.vocab_size + 1;
    lat.logits = m.joint_lattice(enc.encoder, pred, false);
    Tensor loss = rnnt_loss(lat, targets, {});
    Tensor ep = m.endpointer_forward(frames, enc.block0);
    Tensor ce = endpointer_ce_loss(ep, ep_labels);
    return add(loss, ce);
  };

  m.set_trainable([](const std::string&) { return true; });
  Graph graph;
  Tensor loss;
  {
    Graph::Scope scope(graph);
    loss = forward_loss();
  }
  graph.backward(loss);

  std::map<std::string, std::vector<double>> analytic;
  for (const auto& [name, t] : m.params()) analytic[name] = t.grad_vec();
  m.set_trainable([](const std::string&) { return false; });

  const double h = 1e-5;
  std::mt19937_64 pick_rng(40);
  int checked = 0;
  for (auto& [name, tensor] : m.params()) {
    // Sample a few coordinates per tensor.
    const int64_t n = tensor.numel();
    std::uniform_int_distribution<int64_t> pick(0, n - 1);
    for (int s = 0; s < std::min<int64_t>(4, n); ++s) {
      const int64_t i = pick(pick_rng);
      const double keep = tensor.at(i);
      tensor.at(i) = keep + h;
      const double up = forward_loss().scalar();
      tensor.at(i) = keep - h;
      const double down = forward_loss().scalar();
      tensor.at(i) = keep;
      const double fd = (up - down) / (2 * h);
      const double an = analytic[name][static_cast<size_t>(i)];
      CAPTURE(name);
      CAPTURE(i);
      CHECK(grad_close(an, fd, 1e-3));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("config validation") {
  ModelConfig cfg = small_config();
  cfg.encoder_dim = 9;  // not divisible by heads
  CHECK_THROWS(Model{cfg});

  cfg = small_config();
  cfg.vocab_size = 1;
  CHECK_THROWS(Model{cfg});

  cfg = small_config();
  cfg.block1_widths = {8};  // needs one entry per layer
  CHECK_THROWS(Model{cfg});

  cfg = small_config();
  cfg.eou_in_vocab = true;
  cfg.has_eou_joint = true;
  CHECK_THROWS(Model{cfg});
}
