#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evcrab/commands.hpp"
#include "evcrab/errors.hpp"
#include "evcrab/kernels.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> epochs;
  std::string out, checkpoint, manifest;
};

evcrab::RunConfig resolve(const Overrides& o) {
  evcrab::RunConfig cfg;
  if (!o.config.empty()) cfg = evcrab::load_run_config(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (o.threads) cfg.threads = *o.threads;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (!o.out.empty()) cfg.paths.out = o.out;
  if (!o.checkpoint.empty()) cfg.paths.checkpoint = o.checkpoint;
  if (!o.manifest.empty()) cfg.paths.manifest = o.manifest;
  evcrab::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  namespace cmd = evcrab::cmd;
  CLI::App app{"Event-stream action recognition: synthesis, training, evaluation and analysis"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may also follow the subcommand
  Overrides o;
  app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "global seed (init, prompts, data order)");
  app.add_option("--threads", o.threads, "OpenMP threads (default 1)");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--checkpoint", o.checkpoint, "EVCK checkpoint to load");
  app.add_option("--manifest", o.manifest, "dataset manifest (default: in-memory synthetic set)");
  app.add_option("--epochs", o.epochs, "training epochs");

  auto* synth = app.add_subcommand("synth", "write the synthetic dataset and its manifest");
  auto* train = app.add_subcommand("train", "train and write metrics plus a checkpoint");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");

  auto* ablate = app.add_subcommand("ablate", "compare samplers under a shared budget");
  std::vector<std::string> samplers{"sliding", "snn", "scl"};
  std::vector<std::uint64_t> seeds;
  ablate->add_option("--samplers", samplers, "samplers to compare")->delimiter(',');
  ablate->add_option("--seeds", seeds, "seeds (default: the global seed)")->delimiter(',');

  auto* sweep = app.add_subcommand("sweep", "grid over the loss weight or the block count");
  std::string sweep_kind;
  sweep->add_option("--kind", sweep_kind, "lambda or blocks")
      ->required()
      ->check(CLI::IsMember({"lambda", "blocks"}));

  auto* viz = app.add_subcommand("sample-viz", "dump retained and dropped events of one stream");
  std::string stream_path;
  std::size_t stream_index = 0;
  viz->add_option("--stream", stream_path, "event file (.evs or .csv)");
  viz->add_option("--index", stream_index, "test-split sample when no file is given");

  auto* exportf = app.add_subcommand("export-features", "fused test features as FEAT + labels");

  auto* retrieve = app.add_subcommand("retrieve", "rank test samples against a class prompt");
  int query_class = 0;
  std::size_t k = 5;
  retrieve->add_option("--class", query_class, "class index")->required();
  retrieve->add_option("--k", k, "results to return");

  auto* scan = app.add_subcommand("scan-order", "Hilbert scan order of a patch grid as CSV");
  evcrab::GridDims dims;
  bool reverse = false;
  scan->add_option("--nx", dims.nx)->required();
  scan->add_option("--ny", dims.ny)->required();
  scan->add_option("--nt", dims.nt)->required();
  scan->add_flag("--reverse", reverse, "backward direction");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(o);
    evcrab::kernels::set_threads(cfg.threads);
    const std::filesystem::path out = cfg.paths.out;
    nlohmann::json summary;
    if (scan->parsed()) {
      summary = cmd::scan_order(out, dims, reverse);
    } else if (synth->parsed()) {
      auto run = cfg;
      if (o.seed) run.synth.seed = *o.seed;
      summary = cmd::synth(run, out);
    } else {
      const auto precision = cmd::precision_from_env();
      if (train->parsed()) {
        summary = cmd::train(cfg, out, precision);
      } else if (eval->parsed()) {
        summary = cmd::eval(cfg, out, precision);
      } else if (ablate->parsed()) {
        if (seeds.empty()) seeds.push_back(cfg.seed);
        summary = cmd::ablate(cfg, out, precision, samplers, seeds);
      } else if (sweep->parsed()) {
        summary = cmd::sweep(cfg, out, precision, sweep_kind);
      } else if (viz->parsed()) {
        summary = cmd::sample_viz(cfg, out, precision, stream_path, stream_index);
      } else if (exportf->parsed()) {
        summary = cmd::export_features(cfg, out, precision);
      } else if (retrieve->parsed()) {
        summary = cmd::retrieve(cfg, out, precision, query_class, k);
      }
      summary["precision"] = cmd::precision_name(precision);
    }
    std::cout << summary.dump() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << cmd::error_record(e).dump() << '\n';
    return cmd::exit_code(e);
  }
}
