// src/training.cc

#include "rnnt/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "rnnt/ops.h"
#include "rnnt/pipeline.h"

namespace rnnt {

void OptimizerConfig::validate() const {
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
    throw std::invalid_argument("OptimizerConfig: betas must lie in [0, 1)");
  }
  if (epsilon <= 0) throw std::invalid_argument("OptimizerConfig: epsilon <= 0");
  if (warmup_steps < 1) {
    throw std::invalid_argument("OptimizerConfig: warmup_steps must be >= 1");
  }
  if (ema_decay < 0 || ema_decay >= 1) {
    throw std::invalid_argument("OptimizerConfig: ema_decay must lie in [0, 1)");
  }
  if (batch_size < 1 || max_steps < 0) {
    throw std::invalid_argument("OptimizerConfig: bad batch/step counts");
  }
}

double lr_schedule(int step, const OptimizerConfig& cfg) {
  if (step < 1) throw std::invalid_argument("lr_schedule: step must be >= 1");
  const double w = cfg.warmup_steps;
  return cfg.peak_lr * std::min(step / w, std::sqrt(w / step));
}

void adam_step(Model& model, TrainState& state, double lr,
               const OptimizerConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, tensor] : model.params()) {
    if (!tensor.requires_grad()) continue;
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(tensor.vec().size(), 0.0);
    if (v.empty()) v.assign(tensor.vec().size(), 0.0);
    const double* g = tensor.grad();
    for (size_t i = 0; i < m.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw std::runtime_error("adam_step: non-finite gradient in tensor '" +
                                 name + "'");
      }
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      tensor.vec()[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

void ema_update(Model& model, TrainState& state, double decay) {
  if (decay < 0 || decay >= 1) {
    throw std::invalid_argument("ema_update: decay must lie in [0, 1)");
  }
  for (auto& [name, tensor] : model.params()) {
    if (!tensor.requires_grad()) continue;
    auto& shadow = state.ema[name];
    if (shadow.empty()) shadow = tensor.vec();
    for (size_t i = 0; i < shadow.size(); ++i) {
      shadow[i] = decay * shadow[i] + (1.0 - decay) * tensor.vec()[i];
    }
  }
}

void write_training_log(const std::vector<TrainLogEntry>& log,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& e : log) {
    out << e.step << '\t' << e.lr << '\t' << e.loss << '\t' << e.wall_ms << "\n";
  }
}

namespace {

using LossFn = std::function<Tensor(Model&, const UtteranceRecord&,
                                    std::mt19937_64&)>;

void check_input_geometry(const ModelConfig& cfg, const FeatureStats& stats) {
  const int expect = kStackFactor * stats.dim() + cfg.lid_dim;
  if (cfg.input_dim != expect) {
    throw std::invalid_argument(
        "model input_dim " + std::to_string(cfg.input_dim) +
        " does not match stacked feature width " + std::to_string(expect));
  }
}

std::vector<Tensor> raw_frame_sets(const std::vector<UtteranceRecord>& recs) {
  std::vector<Tensor> sets;
  sets.reserve(recs.size());
  for (const auto& r : recs) sets.push_back(r.frames);
  return sets;
}

TrainResult run_phase(Model& model, const FeatureStats& stats,
                      const std::vector<UtteranceRecord>& train,
                      const OptimizerConfig& opt, const LossFn& loss_fn) {
  opt.validate();
  if (train.empty()) throw std::invalid_argument("training set is empty");
  check_input_geometry(model.config(), stats);

  TrainState state;
  for (const auto& name : model.trainable_names()) {
    state.ema[name] = model.param(name).vec();
  }

  std::mt19937_64 order_rng(derive_seed(opt.seed, 0x0edeULL));
  std::mt19937_64 aug_rng(derive_seed(opt.seed, 0xa06ULL));
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  size_t cursor = order.size();

  TrainResult result;
  for (int step = 1; step <= opt.max_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    for (auto& [name, tensor] : model.params()) tensor.zero_grad();

    Graph graph;
    Tensor loss;
    {
      Graph::Scope scope(graph);
      Tensor acc = Tensor::zeros({1});
      for (int b = 0; b < opt.batch_size; ++b) {
        if (cursor >= order.size()) {
          std::shuffle(order.begin(), order.end(), order_rng);
          cursor = 0;
        }
        const UtteranceRecord& rec = train[order[cursor++]];
        acc = add(acc, loss_fn(model, rec, aug_rng));
      }
      loss = scale(acc, 1.0 / opt.batch_size);
    }
    const double loss_value = loss.scalar();
    if (!std::isfinite(loss_value)) {
      throw std::runtime_error("training diverged at step " +
                               std::to_string(step) + " (loss not finite)");
    }
    graph.backward(loss);
    const double lr = lr_schedule(step, opt);
    adam_step(model, state, lr, opt);
    ema_update(model, state, opt.ema_decay);

    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                  t0)
            .count();
    result.log.push_back({step, lr, loss_value, wall_ms});
  }

  // Evaluation uses the shadow weights.
  for (const auto& [name, shadow] : state.ema) {
    model.param(name).vec() = shadow;
  }
  model.set_trainable([](const std::string&) { return false; });
  result.checkpoint = make_checkpoint(model, stats);
  return result;
}

void validate_targets_in_vocab(const std::vector<UtteranceRecord>& recs,
                               const ModelConfig& cfg) {
  for (const auto& r : recs) {
    for (int tok : r.tokens) {
      if (tok < 1 || tok > cfg.vocab_size) {
        throw std::invalid_argument("record '" + r.id + "' has token " +
                                    std::to_string(tok) +
                                    " outside the model vocabulary");
      }
    }
  }
}

}  // namespace

TrainResult train_stage1(const std::vector<UtteranceRecord>& train,
                         const ModelConfig& model_cfg,
                         const OptimizerConfig& opt_cfg,
                         const TrainOptions& options) {
  if (train.empty()) throw std::invalid_argument("training set is empty");
  validate_targets_in_vocab(train, model_cfg);
  FeatureStats stats = compute_global_stats(raw_frame_sets(train));

  Model model(model_cfg);
  model.init_params(opt_cfg.seed);
  model.set_trainable([](const std::string& name) {
    // Recognition path only; EP branch and EOU joint have their own phases.
    return name.rfind("ep.", 0) != 0 && name.rfind("eou.", 0) != 0;
  });
  if (options.joint_ep_training) {
    model.set_trainable(
        [](const std::string& name) { return name.rfind("eou.", 0) != 0; });
  }

  const AugmentConfig augment = options.augment;
  LossFn fn = [&stats, &options, augment](Model& m, const UtteranceRecord& rec,
                                          std::mt19937_64& aug_rng) {
    Tensor input = model_input_from_record(rec, stats, m.config().lid_dim,
                                           &augment, &aug_rng);
    auto enc = m.encoder_forward(input);
    std::vector<int> targets = rec.tokens;
    LossConfig lcfg = options.loss;
    if (m.config().eou_in_vocab) {
      targets.push_back(m.config().eou_id());
      lcfg.include_eou = true;
    }
    Tensor pred = m.predictor_forward_seq(targets);
    LogitsLattice lat;
    lat.logits = m.joint_lattice(enc.encoder, pred, false);
    lat.num_frames = enc.encoder.dim(0);
    lat.num_rows = static_cast<int>(targets.size()) + 1;
    lat.width = m.config().recognition_width();
    Tensor loss = rnnt_loss(lat, targets, lcfg);
    if (options.joint_ep_training) {
      Tensor ep = m.endpointer_forward(input, enc.block0);
      loss = add(loss, endpointer_ce_loss(
                           ep, downsample_ep_labels(rec.ep_labels)));
    }
    return loss;
  };
  return run_phase(model, stats, train, opt_cfg, fn);
}

TrainResult train_stage2_eou(const Checkpoint& stage1,
                             const std::vector<UtteranceRecord>& train,
                             const OptimizerConfig& opt_cfg,
                             const TrainOptions& options) {
  Model model = model_from_checkpoint(stage1);
  if (model.config().eou_in_vocab) {
    throw std::invalid_argument(
        "train_stage2_eou: checkpoint already folds EOU into the vocabulary");
  }
  validate_targets_in_vocab(train, model.config());
  if (!model.config().has_eou_joint) {
    model.init_eou_from_recognition();
  }
  model.set_trainable(
      [](const std::string& name) { return name.rfind("eou.", 0) == 0; });

  const FeatureStats stats = stage1.stats;
  const AugmentConfig augment = options.augment;
  LossFn fn = [&stats, &options, augment](Model& m, const UtteranceRecord& rec,
                                          std::mt19937_64& aug_rng) {
    Tensor input = model_input_from_record(rec, stats, m.config().lid_dim,
                                           &augment, &aug_rng);
    auto enc = m.encoder_forward(input);
    std::vector<int> targets = rec.tokens;
    targets.push_back(m.config().eou_id());
    Tensor pred = m.predictor_forward_seq(targets);
    LogitsLattice lat;
    lat.logits = m.joint_lattice(enc.encoder, pred, true);
    lat.num_frames = enc.encoder.dim(0);
    lat.num_rows = static_cast<int>(targets.size()) + 1;
    lat.width = m.config().eou_joint_width();
    LossConfig lcfg = options.loss;
    lcfg.include_eou = true;
    return rnnt_loss(lat, targets, lcfg);
  };
  return run_phase(model, stats, train, opt_cfg, fn);
}

TrainResult train_endpointer(const Checkpoint& stage1,
                             const std::vector<UtteranceRecord>& train,
                             const std::vector<UtteranceRecord>& dev,
                             const OptimizerConfig& opt_cfg,
                             const TrainOptions& options) {
  Model model = model_from_checkpoint(stage1);
  model.set_trainable(
      [](const std::string& name) { return name.rfind("ep.", 0) == 0; });

  const FeatureStats stats = stage1.stats;
  const bool standalone =
      model.config().ep_branch_kind == EpBranchKind::kStandaloneLstm;
  const AugmentConfig augment = options.augment;
  LossFn fn = [&stats, standalone, augment](Model& m, const UtteranceRecord& rec,
                                            std::mt19937_64& aug_rng) {
    Tensor input = model_input_from_record(rec, stats, m.config().lid_dim,
                                           &augment, &aug_rng);
    Tensor block0;
    if (!standalone) block0 = m.encoder_forward(input).block0;
    Tensor ep = m.endpointer_forward(input, block0);
    return endpointer_ce_loss(ep, downsample_ep_labels(rec.ep_labels));
  };
  TrainResult result = run_phase(model, stats, train, opt_cfg, fn);
  if (!dev.empty()) {
    Model deployed = model_from_checkpoint(result.checkpoint);
    result.final_dev_metric =
        endpointer_final_silence_accuracy(deployed, stats, dev);
  }
  return result;
}

double endpointer_final_silence_accuracy(
    const Model& model, const FeatureStats& stats,
    const std::vector<UtteranceRecord>& records) {
  int64_t total = 0, correct = 0;
  const bool standalone =
      model.config().ep_branch_kind == EpBranchKind::kStandaloneLstm;
  for (const auto& rec : records) {
    Tensor input =
        model_input_from_record(rec, stats, model.config().lid_dim);
    Tensor block0;
    if (!standalone) block0 = model.encoder_forward(input).block0;
    Tensor ep = model.endpointer_forward(input, block0);
    const auto labels = downsample_ep_labels(rec.ep_labels);
    for (int t = 0; t < ep.dim(0); ++t) {
      if (labels[static_cast<size_t>(t)] != kEpFinalSilence) continue;
      int argmax = 0;
      for (int c = 1; c < 4; ++c) {
        if (ep.at(t, c) > ep.at(t, argmax)) argmax = c;
      }
      total += 1;
      correct += argmax == kEpFinalSilence ? 1 : 0;
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace rnnt
