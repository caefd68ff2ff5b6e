#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "evcrab/tensor.hpp"

namespace evcrab {

/// One named parameter as stored on disk (always f32).
struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  friend bool operator==(const CheckpointEntry&, const CheckpointEntry&) = default;
};

/// "EVCK" container: u32 version, u32 count, then per entry u32 name length,
/// name bytes, u8 rank, u32 dims, f32 data.
std::vector<CheckpointEntry> parse_checkpoint(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_checkpoint(const std::vector<CheckpointEntry>& entries);

template <class T>
std::vector<CheckpointEntry> checkpoint_entries(const ad::ParameterStore<T>& store);

/// Copies entries into an existing store. Every store parameter must be present
/// with a matching shape; extra entries are rejected too (ValidationError).
template <class T>
void restore_checkpoint(ad::ParameterStore<T>& store, const std::vector<CheckpointEntry>& entries);

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ad::ParameterStore<T>& store);
template <class T>
void load_checkpoint(const std::filesystem::path& path, ad::ParameterStore<T>& store);

/// Row-major feature matrix, one L2-normalized feature per row.
struct FeatureTable {
  std::uint32_t rows = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;

  friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
};

/// "FEAT" container: u32 rows, u32 D, f32 data.
FeatureTable parse_features(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_features(const FeatureTable& table);

}  // namespace evcrab
