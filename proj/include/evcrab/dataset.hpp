#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "evcrab/events.hpp"
#include "evcrab/synth.hpp"

namespace evcrab {

enum class Split { Train, Test };

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory unless absolute
  int label = 0;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;
  std::filesystem::path root;  // directory paths are resolved against

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::vector<std::size_t> indices(Split split) const;
  std::filesystem::path resolve(const ManifestEntry& e) const;
};

/// Parses and validates: labels in range, every path resolvable.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
std::string manifest_json(const DatasetManifest& manifest);

/// Writes every synthetic stream in the binary format plus manifest.json.
/// Within each class the first round(train_fraction * n) samples are train.
DatasetManifest write_synthetic_dataset(const SynthConfig& cfg, const std::filesystem::path& dir);

/// In-memory equivalent of write_synthetic_dataset: streams and splits.
struct LabeledStream {
  EventStream stream;
  int label = 0;
  Split split = Split::Train;
};
std::vector<LabeledStream> synthetic_dataset(const SynthConfig& cfg);
std::vector<LabeledStream> load_dataset(const DatasetManifest& manifest);

int train_count_per_class(const SynthConfig& cfg);

}  // namespace evcrab
