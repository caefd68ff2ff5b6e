#include "evcrab/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>

#include "evcrab/errors.hpp"
#include "evcrab/event_io.hpp"
#include "evcrab/serialize.hpp"

namespace evcrab::cmd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
  if (!out) throw ValidationError("write failed for " + path.string());
}

json eval_json(const EvalMetrics& m) {
  return {{"top1", m.top1},
          {"top5", m.top5},
          {"per_class", m.per_class},
          {"retained_mean", m.retained_mean},
          {"count", m.count}};
}

const std::string& require_checkpoint(const RunConfig& cfg) {
  if (cfg.paths.checkpoint.empty()) throw ConfigError("checkpoint required");
  return cfg.paths.checkpoint;
}

// Streams, their preparation for one model, and the split views.
template <class T>
struct Workspace {
  std::vector<LabeledStream> streams;
  int classes = 0;
  std::unique_ptr<Model<T>> model;
  std::vector<PreparedSample> train_set, test_set;

  std::vector<std::string> class_names;

  Workspace(const RunConfig& cfg, std::vector<LabeledStream> data, int q,
            std::vector<std::string> names)
      : streams(std::move(data)), classes(q), class_names(std::move(names)) {
    model = std::make_unique<Model<T>>(cfg.model, classes, cfg.seed);
    std::optional<FeatureTable> frame_features;
    if (!cfg.model.frame_feature_file.empty()) {
      frame_features = parse_features(read_bytes(cfg.model.frame_feature_file));
      if (frame_features->rows != streams.size() ||
          frame_features->dim != static_cast<std::uint32_t>(cfg.model.frame.dim)) {
        throw ConfigError("frame feature file has " + std::to_string(frame_features->rows) +
                          "x" + std::to_string(frame_features->dim) + " rows, dataset needs " +
                          std::to_string(streams.size()) + "x" +
                          std::to_string(cfg.model.frame.dim));
      }
    }
    for (std::size_t i = 0; i < streams.size(); ++i) {
      const auto& s = streams[i];
      auto prepared = model->prepare(s.stream, s.label);
      if (frame_features) {
        const auto row = frame_features->row(i);
        prepared.frame_feature = std::vector<float>(row.begin(), row.end());
      }
      (s.split == Split::Train ? train_set : test_set).push_back(std::move(prepared));
    }
  }
};

template <class T>
std::unique_ptr<Workspace<T>> workspace(const RunConfig& cfg) {
  int classes = 0;
  std::vector<std::string> names;
  auto data = load_streams(cfg, &classes, &names);
  return std::make_unique<Workspace<T>>(cfg, std::move(data), classes, std::move(names));
}

template <class T>
std::unique_ptr<Workspace<T>> restored_workspace(const RunConfig& cfg) {
  const auto& ckpt = require_checkpoint(cfg);
  auto ws = workspace<T>(cfg);
  load_checkpoint(ckpt, ws->model->store);
  return ws;
}

template <class T>
json train_impl(const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  echo_config(cfg, out);
  auto ws = workspace<T>(cfg);
  std::ofstream log(out / "metrics.jsonl", std::ios::trunc);
  if (!log) throw ValidationError("cannot write " + (out / "metrics.jsonl").string());
  auto result = evcrab::train(*ws->model, ws->train_set, ws->test_set, cfg.train,
                              [&](const EpochMetrics& m) { log << metrics_json(m) << '\n' << std::flush; });
  save_checkpoint(out / "checkpoint.evck", ws->model->store);
  json summary = {{"command", "train"},
                  {"epochs", result.history.size()},
                  {"initial", eval_json(result.initial)},
                  {"final", eval_json(result.final_eval)},
                  {"checkpoint", (out / "checkpoint.evck").string()}};
  write_text(out / "final_metrics.json", summary.dump(2) + "\n");
  return summary;
}

template <class T>
json eval_impl(const RunConfig& cfg, const fs::path& out) {
  auto ws = restored_workspace<T>(cfg);
  fs::create_directories(out);
  echo_config(cfg, out);
  const auto m = evaluate(*ws->model, ws->test_set);
  json summary = eval_json(m);
  summary["command"] = "eval";
  summary["checkpoint"] = cfg.paths.checkpoint;
  write_text(out / "eval.json", summary.dump(2) + "\n");
  return summary;
}

template <class T>
EvalMetrics train_and_eval(const RunConfig& cfg) {
  auto ws = workspace<T>(cfg);
  return evcrab::train(*ws->model, ws->train_set, ws->test_set, cfg.train).final_eval;
}

std::string csv_number(double v) {
  std::ostringstream s;
  s.precision(6);
  s << std::fixed << v;
  return s.str();
}

template <class T>
json ablate_impl(const RunConfig& cfg, const fs::path& out, const std::vector<std::string>& samplers,
                 const std::vector<std::uint64_t>& seeds) {
  if (samplers.empty() || seeds.empty()) throw ConfigError("ablate needs samplers and seeds");
  for (const auto& s : samplers) parse_sampler(s);
  fs::create_directories(out);
  echo_config(cfg, out);
  std::ostringstream runs;
  runs << "seed,sampler,top1,top5,retained_fraction\n";
  struct Sum {
    double top1 = 0, top5 = 0, retained = 0;
  };
  std::vector<Sum> sums(samplers.size());
  json rows = json::array();
  for (std::uint64_t seed : seeds) {
    for (std::size_t i = 0; i < samplers.size(); ++i) {
      RunConfig run = cfg;
      run.seed = seed;
      run.train.seed = seed;
      run.model.sampler = parse_sampler(samplers[i]);
      const auto m = train_and_eval<T>(run);
      runs << seed << ',' << samplers[i] << ',' << csv_number(m.top1) << ','
           << csv_number(m.top5) << ',' << csv_number(m.retained_mean) << '\n';
      sums[i].top1 += m.top1;
      sums[i].top5 += m.top5;
      sums[i].retained += m.retained_mean;
      rows.push_back({{"seed", seed},
                      {"sampler", samplers[i]},
                      {"top1", m.top1},
                      {"top5", m.top5},
                      {"retained_fraction", m.retained_mean}});
    }
  }
  const double n = static_cast<double>(seeds.size());
  std::ostringstream table;
  table << "# reference Top-1 at full scale (pretrained encoders, real datasets; not reproduced "
           "here): SCL 70.68 SeAct, 94.73 PAF\n";
  table << "# seeds:";
  for (auto s : seeds) table << ' ' << s;
  table << ", epochs per run: " << cfg.train.epochs << '\n';
  table << "sampler,top1,top5,retained_fraction\n";
  json means = json::array();
  for (std::size_t i = 0; i < samplers.size(); ++i) {
    const Sum& s = sums[i];
    table << samplers[i] << ',' << csv_number(s.top1 / n) << ',' << csv_number(s.top5 / n) << ','
          << csv_number(s.retained / n) << '\n';
    means.push_back({{"sampler", samplers[i]},
                     {"top1", s.top1 / n},
                     {"top5", s.top5 / n},
                     {"retained_fraction", s.retained / n}});
  }
  write_text(out / "ablation_runs.csv", runs.str());
  write_text(out / "ablation.csv", table.str());
  return {{"command", "ablate"}, {"runs", rows}, {"means", means}};
}

template <class T>
json sweep_impl(const RunConfig& cfg, const fs::path& out, const std::string& kind) {
  std::vector<double> values;
  if (kind == "lambda") {
    for (int i = 0; i <= 5; ++i) values.push_back(0.2 * i);
  } else if (kind == "blocks") {
    values = {2, 4, 6, 8};
  } else {
    throw ConfigError("unknown sweep \"" + kind + "\" (lambda, blocks)");
  }
  fs::create_directories(out);
  echo_config(cfg, out);
  std::ostringstream csv;
  csv << (kind == "lambda" ? "# reference: best lambda 0.8 at full scale\n"
                           : "# reference: best block count 6 at full scale\n");
  csv << kind << ",top1,top5,final_loss\n";
  json rows = json::array();
  for (double v : values) {
    RunConfig run = cfg;
    if (kind == "lambda") {
      run.model.head.lambda = v;
    } else {
      run.model.point.blocks = static_cast<int>(v);
    }
    auto ws = workspace<T>(run);
    const auto r = evcrab::train(*ws->model, ws->train_set, ws->test_set, run.train);
    const double loss = r.history.back().loss;
    csv << (kind == "lambda" ? csv_number(v) : std::to_string(static_cast<int>(v))) << ','
        << csv_number(r.final_eval.top1) << ',' << csv_number(r.final_eval.top5) << ','
        << csv_number(loss) << '\n';
    rows.push_back({{kind, v}, {"top1", r.final_eval.top1}, {"top5", r.final_eval.top5},
                    {"final_loss", loss}});
  }
  write_text(out / ("sweep_" + kind + ".csv"), csv.str());
  return {{"command", "sweep"}, {"kind", kind}, {"rows", rows}};
}

template <class T>
json sample_viz_impl(const RunConfig& cfg, const fs::path& out, const std::string& stream_path,
                     std::size_t index) {
  RunConfig run = cfg;
  run.model.sampler = SamplerKind::Scl;
  EventStream stream;
  int label = 0;
  if (!stream_path.empty()) {
    stream = read_event_file(stream_path);
    label = stream.label.value_or(0);
  } else {
    int classes = 0;
    auto data = load_streams(run, &classes);
    std::size_t seen = 0;
    bool found = false;
    for (auto& s : data) {
      if (s.split != Split::Test) continue;
      if (seen++ == index) {
        stream = std::move(s.stream);
        label = s.label;
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("test split has no sample " + std::to_string(index));
  }
  const int classes = std::max(label + 1, run.synth.classes);
  Model<T> model(run.model, classes, run.seed);
  if (!run.paths.checkpoint.empty()) load_checkpoint(run.paths.checkpoint, model.store);
  const auto prepared = model.prepare(stream, label);
  ad::NoGradGuard guard;
  const auto fwd = model.forward(prepared);
  std::vector<Event> kept, dropped;
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    (fwd.retained[i] ? kept : dropped).push_back(stream.events[i]);
  }
  auto as_stream = [&](std::vector<Event> ev) {
    EventStream s = stream;
    s.events = std::move(ev);
    return s;
  };
  fs::create_directories(out);
  echo_config(run, out);
  write_text(out / "original.csv", write_event_csv(stream));
  write_text(out / "retained.csv", write_event_csv(as_stream(kept)));
  write_text(out / "dropped.csv", write_event_csv(as_stream(dropped)));
  const auto& tr = fwd.trace;
  json trace = {{"boundaries", tr.boundaries},
                {"slice_counts", tr.slice_counts},
                {"spike_bins", tr.spike_bins},
                {"retained_fraction", tr.retained_fraction},
                {"fallback", tr.fallback},
                {"events", stream.events.size()},
                {"retained_events", kept.size()},
                {"dropped_events", dropped.size()}};
  write_text(out / "trace.json", trace.dump(2) + "\n");
  trace["command"] = "sample-viz";
  return trace;
}

template <class T>
json export_impl(const RunConfig& cfg, const fs::path& out) {
  auto ws = restored_workspace<T>(cfg);
  const auto table = fused_features(*ws->model, ws->test_set);
  fs::create_directories(out);
  echo_config(cfg, out);
  const auto bytes = write_features(table);
  write_bytes(out / "features.feat", bytes);
  std::ostringstream labels;
  labels << "row,label\n";
  for (std::size_t i = 0; i < ws->test_set.size(); ++i) {
    labels << i << ',' << ws->test_set[i].label << '\n';
  }
  write_text(out / "labels.csv", labels.str());
  return {{"command", "export-features"}, {"rows", table.rows}, {"dim", table.dim}};
}

template <class T>
json retrieve_impl(const RunConfig& cfg, const fs::path& out, int query_class, std::size_t k) {
  auto ws = restored_workspace<T>(cfg);
  if (query_class < 0 || query_class >= ws->classes) {
    throw ConfigError("unknown class index " + std::to_string(query_class) + " (have " +
                      std::to_string(ws->classes) + " classes)");
  }
  const auto features = fused_features(*ws->model, ws->test_set);
  const auto prompts = ws->model->prompts.frame();
  const std::size_t d = prompts.dim(1);
  std::vector<double> query(d);
  for (std::size_t i = 0; i < d; ++i) {
    query[i] = static_cast<double>(prompts[static_cast<std::size_t>(query_class) * d + i]);
  }
  const auto hits = evcrab::retrieve(query, features, k);
  json results = json::array();
  for (std::size_t r = 0; r < hits.size(); ++r) {
    results.push_back({{"rank", r + 1},
                       {"index", hits[r].index},
                       {"label", ws->test_set[hits[r].index].label},
                       {"class_name", ws->class_names[ws->test_set[hits[r].index].label]},
                       {"score", hits[r].score}});
  }
  json summary = {{"command", "retrieve"},
                  {"query_class", query_class},
                  {"query_class_name", ws->class_names[query_class]},
                  {"k", k},
                  {"results", results}};
  fs::create_directories(out);
  echo_config(cfg, out);
  write_text(out / "retrieve.json", summary.dump(2) + "\n");
  return summary;
}

}  // namespace

Precision precision_from_env() {
  const char* v = std::getenv("EVCRAB_PRECISION");
  if (v == nullptr || std::string(v).empty() || std::string(v) == "f32") return Precision::F32;
  if (std::string(v) == "f64") return Precision::F64;
  throw ConfigError(std::string("EVCRAB_PRECISION must be f32 or f64, got \"") + v + "\"");
}

std::string precision_name(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

std::vector<LabeledStream> load_streams(const RunConfig& cfg, int* classes,
                                        std::vector<std::string>* class_names) {
  if (cfg.paths.manifest.empty()) {
    if (classes) *classes = cfg.synth.classes;
    if (class_names) {
      class_names->clear();
      for (int q = 0; q < cfg.synth.classes; ++q) {
        class_names->push_back(motif_name(static_cast<Motif>(q)));
      }
    }
    return synthetic_dataset(cfg.synth);
  }
  const auto manifest = load_manifest(cfg.paths.manifest);
  if (classes) *classes = manifest.num_classes();
  if (class_names) *class_names = manifest.class_names;
  return load_dataset(manifest);
}

void echo_config(const RunConfig& cfg, const fs::path& out) {
  write_text(out / "config.json", run_config_json(cfg).dump(2) + "\n");
}

json synth(const RunConfig& cfg, const fs::path& out) {
  validate(cfg.synth);
  fs::create_directories(out);
  echo_config(cfg, out);
  const auto m = write_synthetic_dataset(cfg.synth, out);
  return {{"command", "synth"},
          {"manifest", (out / "manifest.json").string()},
          {"entries", m.entries.size()},
          {"classes", m.num_classes()}};
}

#define EVCRAB_DISPATCH(p, call) \
  ((p) == Precision::F32 ? call<float> : call<double>)

json train(const RunConfig& cfg, const fs::path& out, Precision p) {
  return EVCRAB_DISPATCH(p, train_impl)(cfg, out);
}

json eval(const RunConfig& cfg, const fs::path& out, Precision p) {
  return EVCRAB_DISPATCH(p, eval_impl)(cfg, out);
}

json ablate(const RunConfig& cfg, const fs::path& out, Precision p,
            const std::vector<std::string>& samplers, const std::vector<std::uint64_t>& seeds) {
  return EVCRAB_DISPATCH(p, ablate_impl)(cfg, out, samplers, seeds);
}

json sweep(const RunConfig& cfg, const fs::path& out, Precision p, const std::string& kind) {
  return EVCRAB_DISPATCH(p, sweep_impl)(cfg, out, kind);
}

json sample_viz(const RunConfig& cfg, const fs::path& out, Precision p,
                const std::string& stream_path, std::size_t index) {
  return EVCRAB_DISPATCH(p, sample_viz_impl)(cfg, out, stream_path, index);
}

json export_features(const RunConfig& cfg, const fs::path& out, Precision p) {
  return EVCRAB_DISPATCH(p, export_impl)(cfg, out);
}

json retrieve(const RunConfig& cfg, const fs::path& out, Precision p, int query_class,
              std::size_t k) {
  return EVCRAB_DISPATCH(p, retrieve_impl)(cfg, out, query_class, k);
}

#undef EVCRAB_DISPATCH

json scan_order(const fs::path& out, const GridDims& dims, bool reverse) {
  auto order = build_scan_order(dims);
  if (reverse) order = reverse_order(order);
  fs::create_directories(out);
  write_text(out / "scan_order.csv", scan_order_csv(order));
  return {{"command", "scan-order"},
          {"cells", order.cells.size()},
          {"direction", reverse ? "backward" : "forward"},
          {"mean_step_distance", mean_step_distance(order)}};
}

json error_record(const std::exception& e) {
  std::string kind = "Error";
  if (dynamic_cast<const ConfigError*>(&e)) kind = "ConfigError";
  else if (dynamic_cast<const ValidationError*>(&e)) kind = "ValidationError";
  else if (dynamic_cast<const ParseError*>(&e)) kind = "ParseError";
  else if (dynamic_cast<const ShapeError*>(&e)) kind = "ShapeError";
  else if (dynamic_cast<const NumericError*>(&e)) kind = "NumericError";
  else if (dynamic_cast<const fs::filesystem_error*>(&e)) kind = "IOError";
  return {{"error", kind}, {"message", e.what()}};
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const ParseError*>(&e)) {
    return 2;
  }
  return 1;
}

}  // namespace evcrab::cmd
