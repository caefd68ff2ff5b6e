#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evcrab/dataset.hpp"
#include "evcrab/hilbert.hpp"
#include "evcrab/run_config.hpp"

// Command implementations behind the `evcrab` executable. Each writes its
// files under the output directory and returns a JSON summary.
namespace evcrab::cmd {

enum class Precision { F32, F64 };

/// EVCRAB_PRECISION: unset or "f32" -> F32, "f64" -> F64, anything else throws.
Precision precision_from_env();
std::string precision_name(Precision p);

/// Streams for a run: the manifest's when paths.manifest is set, otherwise the
/// in-memory synthetic dataset. `classes` and `class_names` receive the class
/// count and names when non-null.
std::vector<LabeledStream> load_streams(const RunConfig& cfg, int* classes,
                                        std::vector<std::string>* class_names = nullptr);

/// Writes the resolved config as config.json.
void echo_config(const RunConfig& cfg, const std::filesystem::path& out);

nlohmann::json synth(const RunConfig& cfg, const std::filesystem::path& out);

/// config.json, metrics.jsonl (one record per epoch), checkpoint.evck and
/// final_metrics.json.
nlohmann::json train(const RunConfig& cfg, const std::filesystem::path& out, Precision p);

/// Needs paths.checkpoint; writes eval.json for the test split.
nlohmann::json eval(const RunConfig& cfg, const std::filesystem::path& out, Precision p);

/// One trained model per (seed, sampler). ablation_runs.csv holds every run,
/// ablation.csv the per-sampler means.
nlohmann::json ablate(const RunConfig& cfg, const std::filesystem::path& out, Precision p,
                      const std::vector<std::string>& samplers,
                      const std::vector<std::uint64_t>& seeds);

/// `kind` is "lambda" (0, 0.2, ..., 1) or "blocks" (2, 4, 6, 8); writes sweep_<kind>.csv.
nlohmann::json sweep(const RunConfig& cfg, const std::filesystem::path& out, Precision p,
                     const std::string& kind);

/// SCL on one stream (file path, or test-split index when the path is empty):
/// original.csv, retained.csv, dropped.csv and trace.json.
nlohmann::json sample_viz(const RunConfig& cfg, const std::filesystem::path& out, Precision p,
                          const std::string& stream_path, std::size_t index);

/// Needs paths.checkpoint; fused test features as features.feat plus labels.csv.
nlohmann::json export_features(const RunConfig& cfg, const std::filesystem::path& out,
                               Precision p);

/// Needs paths.checkpoint; ranks test samples against a class's frame prompt row.
nlohmann::json retrieve(const RunConfig& cfg, const std::filesystem::path& out, Precision p,
                        int query_class, std::size_t k);

/// scan_order.csv for an nx x ny x nt patch grid.
nlohmann::json scan_order(const std::filesystem::path& out, const GridDims& dims, bool reverse);

/// {"error": <kind>, "message": <text>} for an exception escaping a command.
nlohmann::json error_record(const std::exception& e);
/// Process exit code for an exception: 2 for configuration and validation
/// problems, 1 for everything else.
int exit_code(const std::exception& e);

}  // namespace evcrab::cmd
