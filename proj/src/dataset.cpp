#include "evcrab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "evcrab/errors.hpp"
#include "evcrab/event_io.hpp"

namespace evcrab {

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& e) const {
  std::filesystem::path p(e.path);
  return p.is_absolute() ? p : root / p;
}

std::string manifest_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["class_names"] = m.class_names;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    j["entries"].push_back({{"path", e.path},
                            {"label", e.label},
                            {"split", e.split == Split::Train ? "train" : "test"}});
  }
  return j.dump(2) + "\n";
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << manifest_json(m);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError("manifest " + path.string() + ": " + ex.what());
  }
  DatasetManifest m;
  m.root = path.parent_path();
  try {
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.path = e.at("path").get<std::string>();
      entry.label = e.at("label").get<int>();
      const auto split = e.at("split").get<std::string>();
      if (split == "train") {
        entry.split = Split::Train;
      } else if (split == "test") {
        entry.split = Split::Test;
      } else {
        throw ConfigError("manifest: unknown split \"" + split + "\"");
      }
      m.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError("manifest " + path.string() + ": " + ex.what());
  }
  for (const auto& e : m.entries) {
    if (e.label < 0 || e.label >= m.num_classes()) {
      throw ValidationError("manifest: label " + std::to_string(e.label) + " outside [0, " +
                            std::to_string(m.num_classes()) + ")");
    }
    if (!std::filesystem::exists(m.resolve(e))) {
      throw ValidationError("manifest: missing stream file " + m.resolve(e).string());
    }
  }
  return m;
}

int train_count_per_class(const SynthConfig& cfg) {
  const int n = static_cast<int>(std::lround(cfg.train_fraction * cfg.samples_per_class));
  return std::clamp(n, 1, std::max(1, cfg.samples_per_class - 1));
}

std::vector<LabeledStream> synthetic_dataset(const SynthConfig& cfg) {
  auto streams = synth_generate(cfg);
  const int n_train = train_count_per_class(cfg);
  std::vector<LabeledStream> out;
  out.reserve(streams.size());
  for (std::size_t i = 0; i < streams.size(); ++i) {
    const int label = static_cast<int>(i) / cfg.samples_per_class;
    const int index = static_cast<int>(i) % cfg.samples_per_class;
    out.push_back({std::move(streams[i]), label, index < n_train ? Split::Train : Split::Test});
  }
  return out;
}

DatasetManifest write_synthetic_dataset(const SynthConfig& cfg, const std::filesystem::path& dir) {
  auto data = synthetic_dataset(cfg);
  std::filesystem::create_directories(dir / "streams");
  DatasetManifest m;
  m.root = dir;
  for (int q = 0; q < cfg.classes; ++q) m.class_names.push_back(motif_name(static_cast<Motif>(q)));
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::ostringstream name;
    name << "streams/" << m.class_names[data[i].label] << "_"
         << (static_cast<int>(i) % cfg.samples_per_class) << ".evs";
    write_event_file(dir / name.str(), data[i].stream);
    m.entries.push_back({name.str(), data[i].label, data[i].split});
  }
  save_manifest(m, dir / "manifest.json");
  return m;
}

std::vector<LabeledStream> load_dataset(const DatasetManifest& manifest) {
  std::vector<LabeledStream> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    auto s = read_event_file(manifest.resolve(e));
    s.label = e.label;
    out.push_back({std::move(s), e.label, e.split});
  }
  return out;
}

}  // namespace evcrab
