// src/checkpoint.cc

#include "rnnt/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace rnnt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'R', 'N', 'T', 'K'};
constexpr uint32_t kVersion = 1;

void write_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  write_bytes(out, &v, sizeof(v));
}

void read_bytes(std::istream& in, void* p, size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) {
    throw std::runtime_error(std::string("checkpoint truncated while reading ") +
                             what);
  }
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T v{};
  read_bytes(in, &v, sizeof(v), what);
  return v;
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["input_dim"] = cfg.input_dim;
  j["encoder_dim"] = cfg.encoder_dim;
  j["block0_layers"] = cfg.block0_layers;
  j["block1_layers"] = cfg.block1_layers;
  j["block1_widths"] = cfg.block1_widths;
  j["attention_heads"] = cfg.attention_heads;
  j["conv_kernel_size"] = cfg.conv_kernel_size;
  j["attention_left_context"] = cfg.attention_left_context;
  j["ffn_multiplier"] = cfg.ffn_multiplier;
  j["predictor_kind"] = to_string(cfg.predictor_kind);
  j["predictor_layers"] = cfg.predictor_layers;
  j["predictor_dim"] = cfg.predictor_dim;
  j["predictor_context_size"] = cfg.predictor_context_size;
  j["joint_dim"] = cfg.joint_dim;
  j["vocab_size"] = cfg.vocab_size;
  j["ep_branch_kind"] = to_string(cfg.ep_branch_kind);
  j["ep_dim"] = cfg.ep_dim;
  j["ep_layers"] = cfg.ep_layers;
  j["lid_dim"] = cfg.lid_dim;
  j["width_multiplier"] = cfg.width_multiplier;
  j["depth_multiplier"] = cfg.depth_multiplier;
  j["has_eou_joint"] = cfg.has_eou_joint;
  j["eou_in_vocab"] = cfg.eou_in_vocab;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "input_dim", "encoder_dim", "block0_layers", "block1_layers",
      "block1_widths", "attention_heads", "conv_kernel_size",
      "attention_left_context", "ffn_multiplier", "predictor_kind",
      "predictor_layers", "predictor_dim", "predictor_context_size",
      "joint_dim", "vocab_size", "ep_branch_kind", "ep_dim", "ep_layers",
      "lid_dim", "width_multiplier", "depth_multiplier", "has_eou_joint",
      "eou_in_vocab"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw std::invalid_argument("model config: unknown key '" + it.key() + "'");
    }
  }
  ModelConfig cfg;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("input_dim", cfg.input_dim);
  get("encoder_dim", cfg.encoder_dim);
  get("block0_layers", cfg.block0_layers);
  get("block1_layers", cfg.block1_layers);
  get("block1_widths", cfg.block1_widths);
  get("attention_heads", cfg.attention_heads);
  get("conv_kernel_size", cfg.conv_kernel_size);
  get("attention_left_context", cfg.attention_left_context);
  get("ffn_multiplier", cfg.ffn_multiplier);
  if (j.contains("predictor_kind")) {
    cfg.predictor_kind =
        predictor_kind_from_string(j.at("predictor_kind").get<std::string>());
  }
  get("predictor_layers", cfg.predictor_layers);
  get("predictor_dim", cfg.predictor_dim);
  get("predictor_context_size", cfg.predictor_context_size);
  get("joint_dim", cfg.joint_dim);
  get("vocab_size", cfg.vocab_size);
  if (j.contains("ep_branch_kind")) {
    cfg.ep_branch_kind =
        ep_branch_kind_from_string(j.at("ep_branch_kind").get<std::string>());
  }
  get("ep_dim", cfg.ep_dim);
  get("ep_layers", cfg.ep_layers);
  get("lid_dim", cfg.lid_dim);
  get("width_multiplier", cfg.width_multiplier);
  get("depth_multiplier", cfg.depth_multiplier);
  get("has_eou_joint", cfg.has_eou_joint);
  get("eou_in_vocab", cfg.eou_in_vocab);
  cfg.validate();
  return cfg;
}

Checkpoint make_checkpoint(const Model& model, const FeatureStats& stats) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.stats = stats;
  for (const auto& [name, tensor] : model.params()) {
    ckpt.tensors.emplace(name, tensor.clone());
  }
  return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model model(ckpt.config);
  // Every config-implied name must be present exactly once, no extras.
  for (const auto& [name, tensor] : model.params()) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) {
      throw std::runtime_error("checkpoint missing tensor '" + name + "'");
    }
    if (it->second.shape() != tensor.shape()) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " +
                               shape_str(it->second.shape()) + ", expected " +
                               shape_str(tensor.shape()));
    }
  }
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (!model.has_param(name)) {
      throw std::runtime_error("checkpoint has unexpected tensor '" + name + "'");
    }
  }
  for (auto& [name, tensor] : model.params()) {
    tensor.vec() = ckpt.tensors.at(name).vec();
  }
  return model;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path,
                     bool fp32) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);

  write_bytes(out, kMagic, 4);
  write_pod<uint32_t>(out, kVersion);

  const std::string cfg_text = model_config_to_json(ckpt.config).dump();
  write_pod<uint32_t>(out, static_cast<uint32_t>(cfg_text.size()));
  write_bytes(out, cfg_text.data(), cfg_text.size());

  write_pod<uint32_t>(out, static_cast<uint32_t>(ckpt.stats.mean.size()));
  write_pod<uint64_t>(out, ckpt.stats.count);
  write_bytes(out, ckpt.stats.mean.data(), ckpt.stats.mean.size() * 8);
  write_bytes(out, ckpt.stats.stddev.data(), ckpt.stats.stddev.size() * 8);

  write_pod<uint32_t>(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    write_pod<uint16_t>(out, static_cast<uint16_t>(name.size()));
    write_bytes(out, name.data(), name.size());
    write_pod<uint8_t>(out, fp32 ? 1 : 0);
    write_pod<uint8_t>(out, static_cast<uint8_t>(tensor.rank()));
    for (int i = 0; i < tensor.rank(); ++i) {
      write_pod<uint32_t>(out, static_cast<uint32_t>(tensor.dim(i)));
    }
    if (fp32) {
      std::vector<float> buf(tensor.vec().begin(), tensor.vec().end());
      write_bytes(out, buf.data(), buf.size() * 4);
    } else {
      write_bytes(out, tensor.data(), static_cast<size_t>(tensor.numel()) * 8);
    }
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path);

  char magic[4];
  read_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint magic mismatch in " + path);
  }
  const auto version = read_pod<uint32_t>(in, "version");
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  }

  Checkpoint ckpt;
  const auto cfg_len = read_pod<uint32_t>(in, "config length");
  std::string cfg_text(cfg_len, '\0');
  read_bytes(in, cfg_text.data(), cfg_len, "config text");
  nlohmann::json cfg_json;
  try {
    cfg_json = nlohmann::json::parse(cfg_text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint config unparsable: ") +
                             e.what());
  }
  ckpt.config = model_config_from_json(cfg_json);

  const auto stat_dim = read_pod<uint32_t>(in, "stats dim");
  ckpt.stats.count = read_pod<uint64_t>(in, "stats count");
  ckpt.stats.mean.resize(stat_dim);
  ckpt.stats.stddev.resize(stat_dim);
  read_bytes(in, ckpt.stats.mean.data(), stat_dim * 8ull, "stats mean");
  read_bytes(in, ckpt.stats.stddev.data(), stat_dim * 8ull, "stats std");

  const auto count = read_pod<uint32_t>(in, "tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<uint16_t>(in, "tensor name length");
    std::string name(name_len, '\0');
    read_bytes(in, name.data(), name_len, "tensor name");
    const auto dtype = read_pod<uint8_t>(in, "tensor dtype");
    if (dtype > 1) {
      throw std::runtime_error("tensor '" + name + "' has unknown dtype " +
                               std::to_string(dtype));
    }
    const auto rank = read_pod<uint8_t>(in, "tensor rank");
    Shape shape(rank);
    int64_t numel = 1;
    for (int r = 0; r < rank; ++r) {
      shape[static_cast<size_t>(r)] =
          static_cast<int>(read_pod<uint32_t>(in, "tensor extent"));
      numel *= shape[static_cast<size_t>(r)];
    }
    Tensor tensor = Tensor::zeros(shape);
    if (dtype == 0) {
      read_bytes(in, tensor.data(), static_cast<size_t>(numel) * 8,
                 ("payload of " + name).c_str());
    } else {
      std::vector<float> buf(static_cast<size_t>(numel));
      read_bytes(in, buf.data(), static_cast<size_t>(numel) * 4,
                 ("payload of " + name).c_str());
      for (int64_t e = 0; e < numel; ++e) tensor.at(e) = buf[static_cast<size_t>(e)];
    }
    if (!ckpt.tensors.emplace(name, std::move(tensor)).second) {
      throw std::runtime_error("duplicate tensor '" + name + "'");
    }
  }
  // Strict framing: nothing may follow the last tensor.
  char probe;
  in.read(&probe, 1);
  if (!in.eof()) {
    throw std::runtime_error("checkpoint has trailing bytes: " + path);
  }
  return ckpt;
}

}  // namespace rnnt
