// tests/test_checkpoint.cc

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rnnt/checkpoint.h"

using namespace rnnt;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint sample_checkpoint(uint64_t seed) {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.encoder_dim = 8;
  cfg.block0_layers = 1;
  cfg.block1_layers = 1;
  cfg.attention_heads = 2;
  cfg.conv_kernel_size = 3;
  cfg.ffn_multiplier = 2;
  cfg.predictor_dim = 8;
  cfg.joint_dim = 8;
  cfg.vocab_size = 5;
  cfg.ep_dim = 4;
  Model m(cfg);
  m.init_params(seed);
  FeatureStats stats;
  stats.mean = {0.1, -0.2};
  stats.stddev = {1.5, 0.75};
  stats.count = 420;
  return make_checkpoint(m, stats);
}

}  // namespace

TEST_CASE("config json round trip rejects unknown keys") {
  ModelConfig cfg;
  cfg.predictor_kind = PredictorKind::kEmbedding;
  cfg.block1_widths = {32, 32, 32};
  auto j = model_config_to_json(cfg);
  ModelConfig back = model_config_from_json(j);
  CHECK(model_config_to_json(back) == j);

  j["mystery_knob"] = 3;
  CHECK_THROWS_AS(model_config_from_json(j), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bit exact") {
  auto ckpt = sample_checkpoint(3);
  const std::string p1 = temp_path("ck_a.rntk");
  const std::string p2 = temp_path("ck_b.rntk");

  SUBCASE("double precision") {
    save_checkpoint(ckpt, p1);
    auto loaded = load_checkpoint(p1);
    CHECK(loaded.stats.mean == ckpt.stats.mean);
    CHECK(loaded.stats.stddev == ckpt.stats.stddev);
    CHECK(loaded.stats.count == ckpt.stats.count);
    REQUIRE(loaded.tensors.size() == ckpt.tensors.size());
    for (const auto& [name, tensor] : ckpt.tensors) {
      CHECK(loaded.tensors.at(name).vec() == tensor.vec());
    }
    save_checkpoint(loaded, p2);
    CHECK(read_bytes(p1) == read_bytes(p2));
  }
  SUBCASE("single-precision payloads round trip in the f32 domain") {
    save_checkpoint(ckpt, p1, /*fp32=*/true);
    auto loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2, /*fp32=*/true);
    CHECK(read_bytes(p1) == read_bytes(p2));
    // Values match after narrowing.
    for (const auto& [name, tensor] : ckpt.tensors) {
      const auto& got = loaded.tensors.at(name);
      for (int64_t i = 0; i < tensor.numel(); ++i) {
        CHECK(got.at(i) == static_cast<double>(static_cast<float>(tensor.at(i))));
      }
    }
  }
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("model restores exactly from a checkpoint") {
  auto ckpt = sample_checkpoint(9);
  Model m = model_from_checkpoint(ckpt);
  for (const auto& [name, tensor] : ckpt.tensors) {
    CHECK(m.param(name).vec() == tensor.vec());
  }
}

TEST_CASE("corrupt checkpoints fail with named errors") {
  auto ckpt = sample_checkpoint(5);
  const std::string path = temp_path("ck_corrupt.rntk");
  save_checkpoint(ckpt, path);
  const std::string good = read_bytes(path);

  SUBCASE("truncation") {
    write_bytes(path, good.substr(0, good.size() - 64));
    try {
      load_checkpoint(path);
      FAIL("expected truncation error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
  }
  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    write_bytes(path, bad);
    try {
      load_checkpoint(path);
      FAIL("expected magic error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }
  }
  SUBCASE("trailing bytes") {
    write_bytes(path, good + "junk");
    try {
      load_checkpoint(path);
      FAIL("expected trailing-bytes error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("trailing") != std::string::npos);
    }
  }
  SUBCASE("missing tensor refuses to build a model") {
    auto broken = ckpt;
    broken.tensors.erase("joint.out.w");
    try {
      model_from_checkpoint(broken);
      FAIL("expected missing-tensor error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("joint.out.w") != std::string::npos);
    }
  }
  SUBCASE("unexpected tensor refuses to build a model") {
    auto broken = ckpt;
    broken.tensors.emplace("sneaky.extra", Tensor::zeros({2, 2}));
    try {
      model_from_checkpoint(broken);
      FAIL("expected unexpected-tensor error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("sneaky.extra") != std::string::npos);
    }
  }
  SUBCASE("shape mismatch is named") {
    auto broken = ckpt;
    broken.tensors.at("joint.b") = Tensor::zeros({3});
    try {
      model_from_checkpoint(broken);
      FAIL("expected shape error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("joint.b") != std::string::npos);
    }
  }
  std::remove(path.c_str());
}
