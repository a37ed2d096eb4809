// rnnt/training.h
//
// Optimization: transformer LR schedule, bias-corrected Adam, EMA
// shadow weights, and the three training phases. Stage 1 trains the
// recognition path; the EOU stage freezes everything and fine-tunes
// only the EOU joint on EOU-terminated targets; the endpointer stage
// trains only the EP branch with per-frame cross entropy. Freezing is
// structural: frozen tensors carry no gradient accumulators.

#ifndef RNNT_TRAINING_H_
#define RNNT_TRAINING_H_

#include <map>
#include <string>
#include <vector>

#include "rnnt/checkpoint.h"
#include "rnnt/model.h"
#include "rnnt/synthdata.h"
#include "rnnt/transducer.h"

namespace rnnt {

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double peak_lr = 5e-3;
  int warmup_steps = 100;
  double ema_decay = 0.95;
  int batch_size = 8;
  int max_steps = 600;
  uint64_t seed = 0;

  void validate() const;
};

// peak_lr * min(step / W, sqrt(W / step)); step >= 1.
double lr_schedule(int step, const OptimizerConfig& cfg);

struct TrainState {
  int64_t step = 0;
  std::map<std::string, std::vector<double>> m, v;  // Adam moments
  std::map<std::string, std::vector<double>> ema;   // shadow weights
};

// One bias-corrected Adam update over the trainable parameters using
// their accumulated gradients. Throws (naming the tensor) on NaN.
void adam_step(Model& model, TrainState& state, double lr,
               const OptimizerConfig& cfg);

// shadow' = decay * shadow + (1 - decay) * params, trainable set only.
void ema_update(Model& model, TrainState& state, double decay);

struct TrainLogEntry {
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainOptions {
  LossConfig loss;             // fastemit_lambda, include_eou is per-phase
  AugmentConfig augment;       // applied to training inputs only
  bool joint_ep_training = false;  // stage 1 also minimizes EP cross entropy
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogEntry> log;
  double final_dev_metric = 0.0;  // phase-specific (e.g. final-sil accuracy)
};

// Writes "step\tlr\tloss\twall_ms" lines.
void write_training_log(const std::vector<TrainLogEntry>& log,
                        const std::string& path);

TrainResult train_stage1(const std::vector<UtteranceRecord>& train,
                         const ModelConfig& model_cfg,
                         const OptimizerConfig& opt_cfg,
                         const TrainOptions& options);

TrainResult train_stage2_eou(const Checkpoint& stage1,
                             const std::vector<UtteranceRecord>& train,
                             const OptimizerConfig& opt_cfg,
                             const TrainOptions& options);

// dev drives the reported final-silence accuracy. The standalone EP
// variant trains from scratch; branch variants require a stage-1
// checkpoint (frozen block 0).
TrainResult train_endpointer(const Checkpoint& stage1,
                             const std::vector<UtteranceRecord>& train,
                             const std::vector<UtteranceRecord>& dev,
                             const OptimizerConfig& opt_cfg,
                             const TrainOptions& options);

// Final-silence frame accuracy of the model's EP branch over records.
double endpointer_final_silence_accuracy(
    const Model& model, const FeatureStats& stats,
    const std::vector<UtteranceRecord>& records);

}  // namespace rnnt

#endif  // RNNT_TRAINING_H_
