#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "evcrab/model.hpp"
#include "evcrab/synth.hpp"
#include "evcrab/trainer.hpp"

namespace evcrab {

struct RunPaths {
  std::string manifest;    // empty: generate the synthetic dataset in memory
  std::string out = "out";
  std::string checkpoint;  // empty: none
};

/// Everything one command needs, as a single JSON document.
struct RunConfig {
  std::uint64_t seed = 7;  // model init, prompt tables, data order
  int threads = 1;
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  RunPaths paths;
};

/// Settings used by the synthetic benchmark (D=64, 2 blocks, T'=8).
RunConfig benchmark_run_config();

/// Overlays `doc` on `base`. Unknown keys and wrongly typed values throw
/// ConfigError naming the dotted key path. The result is validated.
RunConfig parse_run_config(const nlohmann::json& doc, const RunConfig& base = {});
RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base = {});

/// Every field, in the layout parse_run_config accepts.
nlohmann::json run_config_json(const RunConfig& cfg);

void validate(const RunConfig& cfg);

}  // namespace evcrab
