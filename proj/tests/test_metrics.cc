// tests/test_metrics.cc

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "rnnt/metrics.h"

using namespace rnnt;

namespace {

// Independent plain-recursion edit distance (memoized), used as the
// oracle against the DP implementation.
int edit_distance_oracle(const std::vector<int>& a, const std::vector<int>& b,
                         size_t i, size_t j,
                         std::map<std::pair<size_t, size_t>, int>& memo) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  auto key = std::make_pair(i, j);
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  int best = edit_distance_oracle(a, b, i + 1, j + 1, memo) +
             (a[i] == b[j] ? 0 : 1);
  best = std::min(best, edit_distance_oracle(a, b, i + 1, j, memo) + 1);
  best = std::min(best, edit_distance_oracle(a, b, i, j + 1, memo) + 1);
  memo[key] = best;
  return best;
}

double wer_oracle(const std::vector<int>& ref, const std::vector<int>& hyp) {
  if (ref.empty()) return hyp.empty() ? 0.0 : static_cast<double>(hyp.size());
  std::map<std::pair<size_t, size_t>, int> memo;
  return static_cast<double>(edit_distance_oracle(ref, hyp, 0, 0, memo)) /
         static_cast<double>(ref.size());
}

}  // namespace

TEST_CASE("wer hand cases") {
  CHECK(wer({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(wer({1, 2}, {1, 9, 2}) == 0.5);  // one insertion over two words
  CHECK(wer({1, 2, 3}, {}) == 1.0);      // all deletions
  CHECK(wer({}, {}) == 0.0);
  CHECK(wer({}, {5, 6}) == 2.0);  // insertions over an empty reference
}

TEST_CASE("wer agrees with an independent oracle on random pairs") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> len(0, 9), tok(1, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> ref(static_cast<size_t>(len(rng)));
    std::vector<int> hyp(static_cast<size_t>(len(rng)));
    for (auto& t : ref) t = tok(rng);
    for (auto& t : hyp) t = tok(rng);
    CAPTURE(trial);
    CHECK(wer(ref, hyp) == wer_oracle(ref, hyp));
  }
}

TEST_CASE("nearest-rank percentile") {
  std::vector<double> vals;
  for (int v = 100; v <= 1000; v += 100) vals.push_back(v);
  CHECK(nearest_rank_percentile(vals, 0.5) == 500.0);
  CHECK(nearest_rank_percentile(vals, 0.9) == 900.0);
  CHECK(nearest_rank_percentile({42.0}, 0.1) == 42.0);
  CHECK(nearest_rank_percentile({42.0}, 0.99) == 42.0);
  CHECK_THROWS(nearest_rank_percentile({}, 0.5));

  SUBCASE("monotone in p and always a member") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> val(-5, 5);
    std::vector<double> xs(13);
    for (auto& x : xs) x = val(rng);
    double prev = -1e300;
    for (double p : {0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
      const double q = nearest_rank_percentile(xs, p);
      CHECK(q >= prev);
      CHECK(std::count(xs.begin(), xs.end(), q) >= 1);
      prev = q;
    }
  }
}

TEST_CASE("endpoint latency report") {
  SUBCASE("hand percentile over ten closes") {
    std::vector<EpUtteranceResult> results;
    for (int i = 0; i < 10; ++i) {
      EpUtteranceResult r;
      r.eos_frame = 50;
      r.close_frame = 50 + 3 + i;  // 30, 40, ..., 120 ms of latency
      results.push_back(r);
    }
    auto rep = ep_latency_report(results);
    REQUIRE(rep.ep50_ms.has_value());
    CHECK(*rep.ep50_ms == 70.0);
    REQUIRE(rep.ep90_ms.has_value());
    CHECK(*rep.ep90_ms == 110.0);
    CHECK(rep.early_endpoint_rate == 0.0);
    CHECK(rep.no_close_rate == 0.0);
    CHECK(rep.measured == 10);
  }
  SUBCASE("early closes leave the pool; counts add up") {
    std::vector<EpUtteranceResult> results(4);
    results[0] = {.close_frame = 48, .eos_frame = 50};  // early
    results[1] = {.close_frame = 55, .eos_frame = 50};
    results[2] = {.close_frame = std::nullopt, .eos_frame = 50};
    results[3] = {.close_frame = 50, .eos_frame = 50};  // zero latency counts
    auto rep = ep_latency_report(results);
    CHECK(rep.measured == 2);
    CHECK(rep.early_endpoint_rate == 0.25);
    CHECK(rep.no_close_rate == 0.25);
    CHECK(rep.measured + 1 + 1 == rep.total);
  }
  SUBCASE("no closes at all") {
    std::vector<EpUtteranceResult> results(3);
    for (auto& r : results) r.eos_frame = 10;
    auto rep = ep_latency_report(results);
    CHECK(!rep.ep50_ms.has_value());
    CHECK(rep.no_close_rate == 1.0);
  }
}

TEST_CASE("final silence accuracy") {
  SUBCASE("perfect and all-wrong") {
    Tensor logits = Tensor::zeros({4, 4});
    std::vector<int> labels = {0, 3, 3, 3};
    for (int t = 1; t < 4; ++t) logits.at(t, 3) = 5.0;
    logits.at(0, 0) = 5.0;
    CHECK(*final_silence_accuracy(logits, labels) == 1.0);

    Tensor wrong = Tensor::zeros({4, 4});
    for (int t = 0; t < 4; ++t) wrong.at(t, 0) = 5.0;
    CHECK(*final_silence_accuracy(wrong, labels) == 0.0);
  }
  SUBCASE("hand-built 10-frame case, 2 of 4 correct") {
    Tensor logits = Tensor::zeros({10, 4});
    std::vector<int> labels = {1, 1, 0, 0, 0, 2, 3, 3, 3, 3};
    logits.at(6, 3) = 2.0;
    logits.at(7, 3) = 2.0;
    logits.at(8, 0) = 2.0;
    logits.at(9, 1) = 2.0;
    CHECK(*final_silence_accuracy(logits, labels) == 0.5);
  }
  SUBCASE("absent without final-silence frames") {
    Tensor logits = Tensor::zeros({3, 4});
    CHECK(!final_silence_accuracy(logits, {0, 1, 2}).has_value());
  }
}

TEST_CASE("real-time factor report") {
  CHECK(rt_factor_report({{0.5, 1.0}}).rt50 == 0.5);
  auto rep = rt_factor_report({{0.3, 1.0}, {0.6, 2.0}, {1.5, 5.0}});
  CHECK(rep.rt50 == 0.3);
  CHECK(rep.rt90 == 0.3);
  CHECK_THROWS(rt_factor_report({{0.5, 0.0}}));
  CHECK_THROWS(rt_factor_report({}));
}

TEST_CASE("decoder MAC accounting") {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.encoder_dim = 8;
  cfg.attention_heads = 2;
  cfg.predictor_kind = PredictorKind::kLstm;
  cfg.predictor_layers = 1;
  cfg.predictor_dim = 2;
  cfg.joint_dim = 3;
  cfg.vocab_size = 4;

  SUBCASE("one-layer LSTM hand count") {
    // 4 gates * (d_in + d_h) * d_h = 4 * 4 * 2 = 32, plus the joint:
    // 8*3 + 2*3 + 3*5 = 45.
    CHECK(decoder_macs_per_step(cfg) == 32 + 45);
  }
  SUBCASE("embedding beats LSTM at matched dims") {
    ModelConfig emb = cfg;
    emb.predictor_kind = PredictorKind::kEmbedding;
    emb.predictor_context_size = 2;
    emb.predictor_dim = 48;
    ModelConfig lstm = cfg;
    lstm.predictor_dim = 48;
    lstm.predictor_layers = 1;
    CHECK(decoder_macs_per_step(emb) < decoder_macs_per_step(lstm));
  }
  SUBCASE("zero-layer predictor degenerates to the joint count") {
    ModelConfig degen = cfg;
    degen.predictor_layers = 0;
    CHECK(decoder_macs_per_step(degen) == 45);
  }
}

TEST_CASE("memory accounting") {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.encoder_dim = 8;
  cfg.attention_heads = 2;
  cfg.vocab_size = 4;
  CHECK(param_bytes(cfg) == Model::expected_param_count(cfg) * 8);
  CHECK(param_bytes(cfg, true) == Model::expected_param_count(cfg) * 4);
  CHECK(activation_bytes_estimate(cfg, 40, 4) > 0);
  CHECK(activation_bytes_estimate(cfg, 80, 4) >
        activation_bytes_estimate(cfg, 40, 4));
}

TEST_CASE("metrics report serialization") {
  MetricsReport report;
  report.per_language_wer = {{"lang0", 0.05}, {"lang1", 0.10}};
  report.macro_avg_wer = 0.075;
  report.decoder_macs = 1234;
  report.param_bytes = 5678;
  auto j = report.to_json();
  CHECK(j["macro_avg_wer"] == 0.075);
  CHECK(j["per_language_wer"]["lang1"] == 0.10);
  CHECK(j.count("rt50") == 0);  // absent fields stay absent
  CHECK(!MetricsReport::table_header().empty());
  CHECK(!report.table_row("base").empty());
}
