#include <doctest.h>

#include <filesystem>

#include "evcrab/commands.hpp"
#include "evcrab/errors.hpp"
#include "evcrab/event_io.hpp"
#include "evcrab/serialize.hpp"
#include "support.hpp"
#include "toy_model.hpp"

using namespace evcrab;
namespace fs = std::filesystem;

TEST_CASE("checkpoint container round trips byte for byte") {
  Model<float> model(test::toy_model_config(), 3, 7);
  const auto entries = checkpoint_entries(model.store);
  const auto bytes = write_checkpoint(entries);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "EVCK");
  const auto parsed = parse_checkpoint(bytes);
  CHECK(parsed == entries);
  CHECK(write_checkpoint(parsed) == bytes);

  Model<float> other(test::toy_model_config(), 3, 8);
  restore_checkpoint(other.store, parsed);
  CHECK(checkpoint_entries(other.store) == entries);

  auto missing = parsed;
  missing.pop_back();
  CHECK_THROWS_AS(restore_checkpoint(other.store, missing), ValidationError);
  auto wrong = parsed;
  wrong[0].dims[0] += 1;
  CHECK_THROWS(restore_checkpoint(other.store, wrong));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(parse_checkpoint(truncated), ParseError);
}

TEST_CASE("feature container round trips byte for byte") {
  test::Gen g(1);
  FeatureTable t{5, 3, {}};
  for (double v : g.reals(15, -1, 1)) t.data.push_back(static_cast<float>(v));
  const auto bytes = write_features(t);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FEAT");
  CHECK(parse_features(bytes) == t);
  CHECK(write_features(parse_features(bytes)) == bytes);
  auto bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(parse_features(bad), ParseError);
}

TEST_CASE("event binary layout") {
  const auto s = make_stream({{5, 1, 2, -1}}, 3, 4, 9);
  const auto b = write_event_binary(s);
  CHECK(b.size() == 4 + 2 + 2 + 2 + 8 + 8 + 13);
  CHECK(std::string(b.begin(), b.begin() + 4) == "EVST");
  CHECK(b[4] == 1);             // version
  CHECK(b[6] == 3);             // height
  CHECK(b[8] == 4);             // width
  CHECK(b.back() == 0);         // negative polarity on disk
  CHECK(parse_event_binary(b) == s);
}

TEST_CASE("run config parses, echoes and rejects unknown keys") {
  const RunConfig base = benchmark_run_config();
  const auto doc = run_config_json(base);
  const RunConfig again = parse_run_config(doc);
  CHECK(run_config_json(again) == doc);

  nlohmann::json bad = {{"model", {{"point", {{"dimm", 4}}}}}};
  try {
    parse_run_config(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model.point.dimm") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_config(nlohmann::json{{"train", {{"epochs", "ten"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(nlohmann::json{{"train", {{"epochs", 0}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(nlohmann::json{{"model", {{"sampler", "eas"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(nlohmann::json{{"model", {{"head", {{"tau", 0}}}}}}), ConfigError);

  const RunConfig partial = parse_run_config(nlohmann::json{{"seed", 11}, {"train", {{"epochs", 3}}}}, base);
  CHECK(partial.seed == 11);
  CHECK(partial.train.seed == 11);
  CHECK(partial.train.epochs == 3);
  CHECK(partial.model.point.dim == base.model.point.dim);
}

TEST_CASE("error records and exit codes") {
  CHECK(cmd::exit_code(ConfigError("x")) == 2);
  CHECK(cmd::exit_code(ParseError("x")) == 2);
  CHECK(cmd::exit_code(ValidationError("x")) == 2);
  CHECK(cmd::exit_code(NumericError("x")) == 1);
  const auto rec = cmd::error_record(ConfigError("bad key"));
  CHECK(rec.at("message") == "bad key");
}

TEST_CASE("commands on a toy run") {
  const fs::path dir = fs::temp_directory_path() / "evcrab_test_commands";
  fs::remove_all(dir);
  RunConfig cfg;
  cfg.synth = test::toy_synth(2, 5);
  cfg.model = test::toy_model_config(SamplerKind::Sliding);
  cfg.train.epochs = 1;
  cfg.train.lr_init = 1e-3;
  cfg.train.batch_size = 4;

  const auto synth = cmd::synth(cfg, dir / "data");
  CHECK(fs::exists(dir / "data" / "manifest.json"));
  cfg.paths.manifest = (dir / "data" / "manifest.json").string();

  const auto trained = cmd::train(cfg, dir / "train", cmd::Precision::F32);
  CHECK(fs::exists(dir / "train" / "checkpoint.evck"));
  CHECK(fs::exists(dir / "train" / "metrics.jsonl"));
  CHECK(fs::exists(dir / "train" / "config.json"));

  CHECK_THROWS_AS(cmd::eval(cfg, dir / "eval", cmd::Precision::F32), ConfigError);
  cfg.paths.checkpoint = (dir / "train" / "checkpoint.evck").string();
  const auto evaluated = cmd::eval(cfg, dir / "eval", cmd::Precision::F32);
  CHECK(evaluated.at("top1") == trained.at("final").at("top1"));

  const auto exported = cmd::export_features(cfg, dir / "feat", cmd::Precision::F32);
  const auto table = parse_features(read_bytes(dir / "feat" / "features.feat"));
  CHECK(table.rows == 2);

  const auto hits = cmd::retrieve(cfg, dir / "ret", cmd::Precision::F32, 1, 5);
  CHECK(hits.at("results").size() == 2);
  CHECK(hits.at("results")[0].contains("class_name"));
  CHECK_THROWS_AS(cmd::retrieve(cfg, dir / "ret", cmd::Precision::F32, 9, 1), ConfigError);

  const auto order = cmd::scan_order(dir / "scan", GridDims{3, 3, 2}, false);
  CHECK(fs::exists(dir / "scan" / "scan_order.csv"));

  // frame features supplied from a file replace the frame encoder
  FeatureTable ff{10, 8, std::vector<float>(80, 0.0f)};
  for (std::size_t r = 0; r < 10; ++r) ff.data[r * 8 + r % 8] = 1.0f;
  write_bytes(dir / "frame.feat", write_features(ff));
  cfg.model.frame_feature_file = (dir / "frame.feat").string();
  CHECK_NOTHROW(cmd::eval(cfg, dir / "eval2", cmd::Precision::F32));
  ff.rows = 9;
  ff.data.resize(72);
  write_bytes(dir / "frame.feat", write_features(ff));
  CHECK_THROWS_AS(cmd::eval(cfg, dir / "eval3", cmd::Precision::F32), ConfigError);
  fs::remove_all(dir);
}
