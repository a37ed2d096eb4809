// tests/test_synthdata.cc

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "rnnt/synthdata.h"

using namespace rnnt;

namespace {

bool records_equal(const UtteranceRecord& a, const UtteranceRecord& b) {
  if (a.id != b.id || a.language_tag != b.language_tag) return false;
  if (a.tokens != b.tokens || a.ep_labels != b.ep_labels) return false;
  if (a.eos_frame != b.eos_frame) return false;
  if (a.frames.shape() != b.frames.shape()) return false;
  for (int64_t i = 0; i < a.frames.numel(); ++i) {
    if (a.frames.at(i) != b.frames.at(i)) return false;
  }
  return true;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("language spec determinism and shapes") {
  std::mt19937_64 a(7), b(7);
  auto s1 = make_language_spec(0, {1, 2, 3}, 8, a);
  auto s2 = make_language_spec(0, {1, 2, 3}, 8, b);
  CHECK(s1.token_ids == s2.token_ids);
  REQUIRE(s1.token_templates.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(s1.token_templates[i].dim(0) == kTokenTemplateFrames);
    CHECK(s1.token_templates[i].dim(1) == 8);
    for (int64_t e = 0; e < s1.token_templates[i].numel(); ++e) {
      CHECK(s1.token_templates[i].at(e) == s2.token_templates[i].at(e));
    }
  }

  SUBCASE("ten tokens give ten 4x8 templates") {
    std::mt19937_64 rng(1);
    std::vector<int> vocab;
    for (int i = 1; i <= 10; ++i) vocab.push_back(i);
    auto spec = make_language_spec(1, vocab, 8, rng);
    CHECK(spec.token_templates.size() == 10);
  }
  SUBCASE("disjoint slices for two languages") {
    std::mt19937_64 rng(5);
    auto l0 = make_language_spec(0, {1, 2, 3}, 4, rng);
    auto l1 = make_language_spec(1, {4, 5, 6}, 4, rng);
    for (int id0 : l0.token_ids) {
      for (int id1 : l1.token_ids) CHECK(id0 != id1);
    }
  }
  SUBCASE("empty slice rejected") {
    std::mt19937_64 rng(5);
    CHECK_THROWS(make_language_spec(0, {}, 4, rng));
  }
}

TEST_CASE("synth_utterance construction arithmetic") {
  std::mt19937_64 rng(3);
  auto spec = make_language_spec(0, {1, 2}, 4, rng);
  SilenceConfig fixed;
  fixed.initial_min = fixed.initial_max = 2;
  fixed.gap_probability = 0.0;
  fixed.final_min = fixed.final_max = 3;

  std::mt19937_64 gen(11);
  auto rec = synth_utterance(spec, 1, fixed, 0.0, gen);
  CHECK(rec.frames.dim(0) == 9);  // 2 + 4 + 3
  CHECK(rec.eos_frame == 6);
  CHECK(rec.ep_labels == std::vector<int>{1, 1, 0, 0, 0, 0, 3, 3, 3});
  CHECK(rec.tokens.size() == 1);

  SUBCASE("noiseless frames equal the template") {
    int which = -1;
    for (size_t i = 0; i < spec.token_ids.size(); ++i) {
      if (spec.token_ids[i] == rec.tokens[0]) which = static_cast<int>(i);
    }
    REQUIRE(which >= 0);
    for (int f = 0; f < 4; ++f) {
      for (int c = 0; c < 4; ++c) {
        CHECK(rec.frames.at(2 + f, c) ==
              spec.token_templates[static_cast<size_t>(which)].at(f, c));
      }
    }
    for (int c = 0; c < 4; ++c) CHECK(rec.frames.at(0, c) == 0.0);
  }
}

TEST_CASE("seeded noisy utterance is reproducible (frozen checksum)") {
  std::mt19937_64 rng(21);
  auto spec = make_language_spec(0, {1, 2, 3}, 4, rng);
  SilenceConfig sil;
  std::mt19937_64 g1(77), g2(77);
  auto r1 = synth_utterance(spec, 3, sil, 0.1, g1);
  auto r2 = synth_utterance(spec, 3, sil, 0.1, g2);
  CHECK(records_equal(r1, r2));

  // Cheap order-sensitive checksum over the frame bytes.
  uint64_t h = 1469598103934665603ULL;
  for (int64_t i = 0; i < r1.frames.numel(); ++i) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(double));
    std::memcpy(&bits, &r1.frames.vec()[static_cast<size_t>(i)], 8);
    h ^= bits;
    h *= 1099511628211ULL;
  }
  // Frozen from the first run of this seed; guards generator drift.
  CHECK(h == 6873007181000285860ULL);
}

TEST_CASE("label grammar holds over many random utterances") {
  std::mt19937_64 rng(13);
  auto spec = make_language_spec(0, {1, 2, 3, 4}, 6, rng);
  SilenceConfig sil;
  for (int trial = 0; trial < 50; ++trial) {
    std::mt19937_64 gen(derive_seed(100, static_cast<uint64_t>(trial)));
    std::uniform_int_distribution<int> ntok(1, 6);
    auto rec = synth_utterance(spec, ntok(gen), sil, 0.05, gen);
    CHECK_NOTHROW(validate_record(rec));
    CHECK(rec.ep_labels[static_cast<size_t>(rec.eos_frame)] == kEpFinalSilence);
    if (rec.eos_frame > 0) {
      CHECK(rec.ep_labels[static_cast<size_t>(rec.eos_frame) - 1] != kEpFinalSilence);
    }
  }
}

TEST_CASE("noiseless nearest-template classification recovers tokens") {
  std::mt19937_64 rng(31);
  auto spec = make_language_spec(0, {1, 2, 3, 4, 5}, 6, rng);
  SilenceConfig sil;
  sil.gap_probability = 0.0;
  std::mt19937_64 gen(9);
  auto rec = synth_utterance(spec, 4, sil, 0.0, gen);

  // Walk speech runs; classify each 4-frame block by nearest template.
  std::vector<int> recovered;
  int t = 0;
  const int t_len = rec.frames.dim(0);
  while (t < t_len) {
    if (rec.ep_labels[static_cast<size_t>(t)] == kEpSpeech) {
      double best = 1e300;
      int best_id = -1;
      for (size_t k = 0; k < spec.token_templates.size(); ++k) {
        double dist = 0.0;
        for (int f = 0; f < kTokenTemplateFrames; ++f) {
          for (int c = 0; c < rec.frames.dim(1); ++c) {
            const double diff =
                rec.frames.at(t + f, c) - spec.token_templates[k].at(f, c);
            dist += diff * diff;
          }
        }
        if (dist < best) {
          best = dist;
          best_id = spec.token_ids[k];
        }
      }
      recovered.push_back(best_id);
      t += kTokenTemplateFrames;
    } else {
      ++t;
    }
  }
  CHECK(recovered == rec.tokens);
}

TEST_CASE("code-switch composition") {
  std::mt19937_64 rng(41);
  auto l0 = make_language_spec(0, {1, 2, 3}, 6, rng);
  auto l1 = make_language_spec(1, {4, 5, 6}, 6, rng);
  SilenceConfig sil;
  sil.gap_probability = 0.0;

  SUBCASE("two segments, one label-2 run") {
    std::mt19937_64 gen(8);
    auto rec = synth_codeswitch_utterance({&l0, &l1}, 2, sil, 0.0, gen);
    CHECK(rec.tokens.size() == 4);
    CHECK(rec.language_tag == "cs");
    int runs = 0;
    for (size_t i = 0; i < rec.ep_labels.size(); ++i) {
      if (rec.ep_labels[i] == kEpIntermediateSilence &&
          (i == 0 || rec.ep_labels[i - 1] != kEpIntermediateSilence)) {
        ++runs;
      }
    }
    CHECK(runs == 1);
    // First two tokens from language 0, last two from language 1.
    for (int i = 0; i < 2; ++i) {
      CHECK(std::count(l0.token_ids.begin(), l0.token_ids.end(),
                       rec.tokens[static_cast<size_t>(i)]) == 1);
      CHECK(std::count(l1.token_ids.begin(), l1.token_ids.end(),
                       rec.tokens[static_cast<size_t>(2 + i)]) == 1);
    }
  }
  SUBCASE("three-way switch, deterministic for a seed") {
    std::mt19937_64 g1(5), g2(5);
    auto r1 = synth_codeswitch_utterance({&l0, &l1, &l0}, 1, sil, 0.05, g1);
    auto r2 = synth_codeswitch_utterance({&l0, &l1, &l0}, 1, sil, 0.05, g2);
    CHECK(records_equal(r1, r2));
    CHECK(r1.tokens.size() == 3);
  }
  SUBCASE("fewer than two specs rejected") {
    std::mt19937_64 gen(5);
    CHECK_THROWS(synth_codeswitch_utterance({&l0}, 2, sil, 0.0, gen));
  }
}

TEST_CASE("dataset round trip is bit exact") {
  std::mt19937_64 rng(55);
  auto l0 = make_language_spec(0, {1, 2, 3}, 5, rng);
  auto l1 = make_language_spec(1, {4, 5}, 5, rng);
  SilenceConfig sil;
  std::vector<UtteranceRecord> records;
  for (int i = 0; i < 100; ++i) {
    std::mt19937_64 gen(derive_seed(7, static_cast<uint64_t>(i)));
    std::uniform_int_distribution<int> ntok(1, 5);
    auto rec = synth_utterance(i % 2 ? l1 : l0, ntok(gen), sil, 0.07, gen);
    rec.id = "utt-" + std::to_string(i);
    records.push_back(std::move(rec));
  }
  const std::string path = temp_path("rnnt_ds_roundtrip.txt");
  write_dataset(records, path);
  auto loaded = read_dataset(path);
  REQUIRE(loaded.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(records_equal(records[i], loaded[i]));
  }

  // Write-read-write yields identical bytes.
  const std::string path2 = temp_path("rnnt_ds_roundtrip2.txt");
  write_dataset(loaded, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)),
                 std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("empty dataset writes a bare header") {
  const std::string path = temp_path("rnnt_ds_empty.txt");
  write_dataset({}, path);
  auto loaded = read_dataset(path);
  CHECK(loaded.empty());
  std::remove(path.c_str());
}

TEST_CASE("corrupt dataset files fail loudly with line numbers") {
  std::mt19937_64 rng(2);
  auto spec = make_language_spec(0, {1, 2}, 3, rng);
  SilenceConfig sil;
  std::mt19937_64 gen(3);
  auto rec = synth_utterance(spec, 2, sil, 0.0, gen);
  rec.id = "x";
  const std::string path = temp_path("rnnt_ds_corrupt.txt");
  write_dataset({rec, rec}, path);

  // Truncate mid-line.
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 40));
  out.close();

  try {
    read_dataset(path);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
  }

  // Bad header.
  std::ofstream bad(path, std::ios::binary);
  bad << "wrong header\n";
  bad.close();
  CHECK_THROWS_AS(read_dataset(path), std::runtime_error);
  std::remove(path.c_str());
}
