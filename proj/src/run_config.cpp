#include "evcrab/run_config.hpp"

#include <fstream>
#include <initializer_list>

#include "evcrab/errors.hpp"

namespace evcrab {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

const json& object_at(const json& doc, const std::string& path) {
  if (!doc.is_object()) throw ConfigError("config key \"" + path + "\" must be an object");
  return doc;
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) throw ConfigError("unknown config key \"" + join(path, item.key()) + "\"");
  }
}

template <class V>
void read(const json& obj, const std::string& path, const char* key, V& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string where = join(path, key);
  try {
    if constexpr (std::is_same_v<V, bool>) {
      if (!it->is_boolean()) throw ConfigError("config key \"" + where + "\" must be a boolean");
    } else if constexpr (std::is_integral_v<V>) {
      if (!it->is_number_integer()) {
        throw ConfigError("config key \"" + where + "\" must be an integer");
      }
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!it->is_number()) throw ConfigError("config key \"" + where + "\" must be a number");
    } else {
      if (!it->is_string()) throw ConfigError("config key \"" + where + "\" must be a string");
    }
    out = it->template get<V>();
  } catch (const json::exception& e) {
    throw ConfigError("config key \"" + where + "\": " + e.what());
  }
}

// enum stored as a string, converted by `parse`
template <class E, class Parse>
void read_enum(const json& obj, const std::string& path, const char* key, E& out, Parse parse) {
  if (!obj.contains(key)) return;
  std::string name;
  read(obj, path, key, name);
  try {
    out = parse(name);
  } catch (const std::exception& e) {
    throw ConfigError("config key \"" + join(path, key) + "\": " + e.what());
  }
}

SliceNorm parse_slice_norm(const std::string& s) {
  if (s == "per_slice") return SliceNorm::PerSlice;
  if (s == "per_stream") return SliceNorm::PerStream;
  throw ConfigError("unknown slice normalization \"" + s + "\" (per_slice, per_stream)");
}

std::string slice_norm_name(SliceNorm n) {
  return n == SliceNorm::PerSlice ? "per_slice" : "per_stream";
}

ad::ScanMode parse_scan(const std::string& s) {
  if (s == "sequential") return ad::ScanMode::Sequential;
  if (s == "parallel") return ad::ScanMode::Parallel;
  throw ConfigError("unknown scan mode \"" + s + "\" (sequential, parallel)");
}

std::string scan_name(ad::ScanMode m) {
  return m == ad::ScanMode::Sequential ? "sequential" : "parallel";
}

void read_synth(const json& j, SynthConfig& s) {
  const std::string p = "synth";
  check_keys(object_at(j, p), p,
             {"classes", "samples_per_class", "height", "width", "duration_us", "noise_rate",
              "speed_scale", "train_fraction", "seed"});
  read(j, p, "classes", s.classes);
  read(j, p, "samples_per_class", s.samples_per_class);
  read(j, p, "height", s.height);
  read(j, p, "width", s.width);
  read(j, p, "duration_us", s.duration_us);
  read(j, p, "noise_rate", s.noise_rate);
  read(j, p, "speed_scale", s.speed_scale);
  read(j, p, "train_fraction", s.train_fraction);
  read(j, p, "seed", s.seed);
}

void read_srrnn(const json& j, SRRNNConfig& s) {
  const std::string p = "model.srrnn";
  check_keys(object_at(j, p), p,
             {"kernel", "alpha", "rho", "surrogate_width", "tau_m", "u_th", "u_reset", "grid_h",
              "grid_w"});
  read(j, p, "kernel", s.kernel);
  read(j, p, "alpha", s.alpha);
  read(j, p, "rho", s.rho);
  read(j, p, "surrogate_width", s.surrogate_width);
  read(j, p, "tau_m", s.lif.tau_m);
  read(j, p, "u_th", s.lif.u_th);
  read(j, p, "u_reset", s.lif.u_reset);
  read(j, p, "grid_h", s.grid_h);
  read(j, p, "grid_w", s.grid_w);
}

void read_point(const json& j, PointEncoderConfig& c) {
  const std::string p = "model.point";
  check_keys(object_at(j, p), p,
             {"dim", "blocks", "patch", "state", "expand", "conv_width", "spgc_ratio", "groups",
              "spike_threshold", "spike_width", "scan"});
  read(j, p, "dim", c.dim);
  read(j, p, "blocks", c.blocks);
  read(j, p, "patch", c.patch);
  read(j, p, "state", c.state);
  read(j, p, "expand", c.expand);
  read(j, p, "conv_width", c.conv_width);
  read(j, p, "spgc_ratio", c.spgc_ratio);
  read(j, p, "groups", c.groups);
  read(j, p, "spike_threshold", c.spike_threshold);
  read(j, p, "spike_width", c.spike_width);
  read_enum(j, p, "scan", c.scan, parse_scan);
}

void read_frame(const json& j, FrameEncoderConfig& c) {
  const std::string p = "model.frame";
  check_keys(object_at(j, p), p,
             {"dim", "depth", "heads", "mlp_ratio", "patch", "frames", "height", "width"});
  read(j, p, "dim", c.dim);
  read(j, p, "depth", c.depth);
  read(j, p, "heads", c.heads);
  read(j, p, "mlp_ratio", c.mlp_ratio);
  read(j, p, "patch", c.patch);
  read(j, p, "frames", c.frames);
  read(j, p, "height", c.height);
  read(j, p, "width", c.width);
}

void read_model(const json& j, ModelConfig& m) {
  const std::string p = "model";
  check_keys(object_at(j, p), p,
             {"sampler", "t_prime", "t_raw", "snn_gain", "freeze_sampler", "slice_norm",
              "raw_frame_loss", "frame_feature_file", "srrnn", "point", "frame", "head",
              "prompts"});
  read_enum(j, p, "sampler", m.sampler, parse_sampler);
  read(j, p, "t_prime", m.t_prime);
  read(j, p, "t_raw", m.t_raw);
  read(j, p, "snn_gain", m.snn_gain);
  read(j, p, "freeze_sampler", m.freeze_sampler);
  read_enum(j, p, "slice_norm", m.slice_norm, parse_slice_norm);
  read(j, p, "raw_frame_loss", m.raw_frame_loss);
  read(j, p, "frame_feature_file", m.frame_feature_file);
  if (j.contains("srrnn")) read_srrnn(j["srrnn"], m.srrnn);
  if (j.contains("point")) read_point(j["point"], m.point);
  if (j.contains("frame")) read_frame(j["frame"], m.frame);
  if (j.contains("head")) {
    const json& h = j["head"];
    const std::string hp = "model.head";
    check_keys(object_at(h, hp), hp, {"tau", "lambda", "loss_variant"});
    read(h, hp, "tau", m.head.tau);
    read(h, hp, "lambda", m.head.lambda);
    read_enum(h, hp, "loss_variant", m.head.variant, parse_loss_variant);
  }
  if (j.contains("prompts")) {
    const json& pr = j["prompts"];
    const std::string pp = "model.prompts";
    check_keys(object_at(pr, pp), pp,
               {"source", "frame_file", "point_file", "frame_template", "point_template"});
    read_enum(pr, pp, "source", m.prompts, parse_prompt_source);
    read(pr, pp, "frame_file", m.prompt_frame_file);
    read(pr, pp, "point_file", m.prompt_point_file);
    read(pr, pp, "frame_template", m.prompt_frame_template);
    read(pr, pp, "point_template", m.prompt_point_template);
  }
}

void read_train(const json& j, TrainConfig& t) {
  const std::string p = "train";
  check_keys(object_at(j, p), p,
             {"lr_init", "lr_min", "weight_decay", "epochs", "batch_size", "beta1", "beta2",
              "eps"});
  read(j, p, "lr_init", t.lr_init);
  read(j, p, "lr_min", t.lr_min);
  read(j, p, "weight_decay", t.weight_decay);
  read(j, p, "epochs", t.epochs);
  read(j, p, "batch_size", t.batch_size);
  read(j, p, "beta1", t.beta1);
  read(j, p, "beta2", t.beta2);
  read(j, p, "eps", t.eps);
}

}  // namespace

RunConfig benchmark_run_config() {
  RunConfig c;
  c.seed = 7;
  c.synth.classes = 8;
  c.synth.samples_per_class = 100;
  c.synth.height = 64;
  c.synth.width = 64;
  c.synth.train_fraction = 0.8;
  c.synth.seed = 7;
  c.model.t_prime = 8;
  c.model.srrnn.alpha = 0.5;
  c.model.srrnn.rho = 0.02;
  c.model.point.dim = 64;
  c.model.point.blocks = 2;
  c.model.frame.dim = 64;
  c.model.head.lambda = 0.8;
  c.train.lr_init = 1e-3;
  c.train.lr_min = 5e-5;
  c.train.epochs = 8;
  return c;
}

void validate(const RunConfig& cfg) {
  if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
  validate(cfg.synth);
  validate(cfg.model);
  validate(cfg.train);
}

RunConfig parse_run_config(const json& doc, const RunConfig& base) {
  RunConfig c = base;
  check_keys(object_at(doc, "<root>"), "",
             {"seed", "threads", "synth", "model", "train", "paths"});
  read(doc, "", "seed", c.seed);
  read(doc, "", "threads", c.threads);
  if (doc.contains("synth")) read_synth(doc["synth"], c.synth);
  if (doc.contains("model")) read_model(doc["model"], c.model);
  if (doc.contains("train")) read_train(doc["train"], c.train);
  if (doc.contains("paths")) {
    const json& p = doc["paths"];
    check_keys(object_at(p, "paths"), "paths", {"manifest", "out", "checkpoint"});
    read(p, "paths", "manifest", c.paths.manifest);
    read(p, "paths", "out", c.paths.out);
    read(p, "paths", "checkpoint", c.paths.checkpoint);
  }
  c.train.seed = c.seed;
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, base);
}

json run_config_json(const RunConfig& c) {
  const auto& m = c.model;
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["synth"] = {{"classes", c.synth.classes},
                {"samples_per_class", c.synth.samples_per_class},
                {"height", c.synth.height},
                {"width", c.synth.width},
                {"duration_us", c.synth.duration_us},
                {"noise_rate", c.synth.noise_rate},
                {"speed_scale", c.synth.speed_scale},
                {"train_fraction", c.synth.train_fraction},
                {"seed", c.synth.seed}};
  j["model"] = {
      {"sampler", sampler_name(m.sampler)},
      {"t_prime", m.t_prime},
      {"t_raw", m.t_raw},
      {"snn_gain", m.snn_gain},
      {"freeze_sampler", m.freeze_sampler},
      {"slice_norm", slice_norm_name(m.slice_norm)},
      {"raw_frame_loss", m.raw_frame_loss},
      {"frame_feature_file", m.frame_feature_file},
      {"srrnn",
       {{"kernel", m.srrnn.kernel},
        {"alpha", m.srrnn.alpha},
        {"rho", m.srrnn.rho},
        {"surrogate_width", m.srrnn.surrogate_width},
        {"tau_m", m.srrnn.lif.tau_m},
        {"u_th", m.srrnn.lif.u_th},
        {"u_reset", m.srrnn.lif.u_reset},
        {"grid_h", m.srrnn.grid_h},
        {"grid_w", m.srrnn.grid_w}}},
      {"point",
       {{"dim", m.point.dim},
        {"blocks", m.point.blocks},
        {"patch", m.point.patch},
        {"state", m.point.state},
        {"expand", m.point.expand},
        {"conv_width", m.point.conv_width},
        {"spgc_ratio", m.point.spgc_ratio},
        {"groups", m.point.groups},
        {"spike_threshold", m.point.spike_threshold},
        {"spike_width", m.point.spike_width},
        {"scan", scan_name(m.point.scan)}}},
      {"frame",
       {{"dim", m.frame.dim},
        {"depth", m.frame.depth},
        {"heads", m.frame.heads},
        {"mlp_ratio", m.frame.mlp_ratio},
        {"patch", m.frame.patch},
        {"frames", m.frame.frames},
        {"height", m.frame.height},
        {"width", m.frame.width}}},
      {"head",
       {{"tau", m.head.tau},
        {"lambda", m.head.lambda},
        {"loss_variant", loss_variant_name(m.head.variant)}}},
      {"prompts",
       {{"source", prompt_source_name(m.prompts)},
        {"frame_file", m.prompt_frame_file},
        {"point_file", m.prompt_point_file},
        {"frame_template", m.prompt_frame_template},
        {"point_template", m.prompt_point_template}}}};
  j["train"] = {{"lr_init", c.train.lr_init},   {"lr_min", c.train.lr_min},
                {"weight_decay", c.train.weight_decay}, {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size}, {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},       {"eps", c.train.eps}};
  j["paths"] = {{"manifest", c.paths.manifest},
                {"out", c.paths.out},
                {"checkpoint", c.paths.checkpoint}};
  return j;
}

}  // namespace evcrab
