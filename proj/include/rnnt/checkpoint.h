// rnnt/checkpoint.h
//
// Binary checkpoint container: magic "RNTK", version, config as
// length-prefixed JSON text, feature stats, then named tensors
// (dtype 0 = f64, 1 = f32) with row-major little-endian payloads.
// Round trips are bit-exact; corrupt files fail with named errors.

#ifndef RNNT_CHECKPOINT_H_
#define RNNT_CHECKPOINT_H_

#include <map>
#include <string>

#include <json.hpp>

#include "rnnt/frontend.h"
#include "rnnt/model.h"

namespace rnnt {

struct Checkpoint {
  ModelConfig config;
  FeatureStats stats;
  std::map<std::string, Tensor> tensors;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
// Rejects unknown keys.
ModelConfig model_config_from_json(const nlohmann::json& j);

Checkpoint make_checkpoint(const Model& model, const FeatureStats& stats);
// Validates that the tensor set matches exactly what the config implies.
Model model_from_checkpoint(const Checkpoint& ckpt);

// fp32 stores tensor payloads narrowed to single precision (weights are
// widened back on load); compute stays double either way.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path,
                     bool fp32 = false);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rnnt

#endif  // RNNT_CHECKPOINT_H_
