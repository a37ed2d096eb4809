// tools/rnnt_main.cc
//
// Operator CLI: gen-data, train, eval, benchmark, stream. A JSON config
// file drives every command; --set key.path=value overrides individual
// fields. RNNT_CONFIG names the default config path.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rnnt/commands.h"

namespace {

nlohmann::json parse_override_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return nlohmann::json(text);  // bare string
  }
}

void apply_override(nlohmann::json& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("--set expects key.path=value, got '" + spec +
                                "'");
  }
  const std::string path = spec.substr(0, eq);
  nlohmann::json value = parse_override_value(spec.substr(eq + 1));

  nlohmann::json* node = &root;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) {
      throw std::invalid_argument("--set: empty key in '" + spec + "'");
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

rnnt::RunConfig load_config(const std::string& config_path,
                            const std::vector<std::string>& overrides,
                            const std::string& out_dir_flag, long long seed_flag) {
  std::string path = config_path;
  if (path.empty()) {
    const char* env = std::getenv("RNNT_CONFIG");
    if (env != nullptr) path = env;
  }
  nlohmann::json j;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config: " + path);
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("config parse error in " + path + ": " +
                                  e.what());
    }
  } else {
    j = nlohmann::json::object();
  }
  for (const auto& spec : overrides) apply_override(j, spec);
  if (!out_dir_flag.empty()) j["out_dir"] = out_dir_flag;
  if (seed_flag >= 0) j["seed"] = seed_flag;
  return rnnt::RunConfig::from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming multilingual transducer engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir_flag;
  long long seed_flag = -1;
  app.add_option("-c,--config", config_path,
                 "JSON config file (default: $RNNT_CONFIG)");
  app.add_option("--set", overrides,
                 "override a config field, e.g. --set optimizer.max_steps=200");
  app.add_option("--out-dir", out_dir_flag, "override out_dir");
  app.add_option("--seed", seed_flag, "override seed");

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");

  auto* train = app.add_subcommand("train", "run a training stage");
  std::string stage = "1";
  std::string init_ckpt;
  train->add_option("--stage", stage, "1, eou or ep")->required();
  train->add_option("--init", init_ckpt, "initial checkpoint path");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data;
  bool no_endpointing = false, force = false, table = false;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--dataset", eval_data)->required();
  eval->add_flag("--no-endpointing", no_endpointing,
                 "skip the mic-closing pass");
  eval->add_flag("--force", force,
                 "evaluate LID models on code-switch data anyway");
  eval->add_flag("--table", table, "also write the flat TSV row");

  auto* bench = app.add_subcommand("benchmark", "real-time factor report");
  std::string bench_ckpt, bench_data;
  bool sweep = false;
  bench->add_option("--checkpoint", bench_ckpt)->required();
  bench->add_option("--dataset", bench_data)->required();
  bench->add_flag("--sweep", sweep, "add variant and endpoint-threshold rows");

  auto* stream = app.add_subcommand("stream", "print a live partials log");
  std::string stream_ckpt, stream_data;
  int index = 0;
  stream->add_option("--checkpoint", stream_ckpt)->required();
  stream->add_option("--dataset", stream_data)->required();
  stream->add_option("--index", index, "record index (default 0)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const rnnt::RunConfig cfg =
        load_config(config_path, overrides, out_dir_flag, seed_flag);
    if (gen->parsed()) {
      rnnt::cmd_gen_data(cfg);
      std::cout << "dataset written to " << cfg.data.dir << "\n";
    } else if (train->parsed()) {
      const std::string out = rnnt::cmd_train(cfg, stage, init_ckpt);
      std::cout << "checkpoint written to " << out << "\n";
    } else if (eval->parsed()) {
      rnnt::EvalOptions opts;
      opts.endpointing = !no_endpointing;
      opts.force_lid = force;
      opts.write_table = table;
      auto outcome = rnnt::cmd_eval(cfg, eval_ckpt, eval_data, opts);
      std::cout << outcome.report.to_json().dump(2) << "\n";
      std::cout << "report written to " << outcome.report_path << "\n";
    } else if (bench->parsed()) {
      auto outcome = rnnt::cmd_benchmark(cfg, bench_ckpt, bench_data, sweep);
      std::cout << outcome.report.dump(2) << "\n";
      std::cout << "report written to " << outcome.report_path << "\n";
    } else if (stream->parsed()) {
      rnnt::cmd_stream(cfg, stream_ckpt, stream_data, index, std::cout);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
