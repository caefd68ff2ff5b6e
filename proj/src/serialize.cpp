#include "evcrab/serialize.hpp"

#include <set>

#include "evcrab/errors.hpp"
#include "evcrab/event_io.hpp"

namespace evcrab {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;

void put_magic(std::vector<std::uint8_t>& out, std::string_view magic) {
  out.insert(out.end(), magic.begin(), magic.end());
}
}  // namespace

std::vector<CheckpointEntry> parse_checkpoint(std::span<const std::uint8_t> bytes) {
  le::Reader r(bytes);
  r.expect_magic("EVCK");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<CheckpointEntry> out;
  std::set<std::string> names;
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointEntry e;
    const auto len = r.get<std::uint32_t>();
    e.name = r.get_string(len);
    if (!names.insert(e.name).second) {
      throw ParseError("checkpoint: duplicate parameter \"" + e.name + "\" at byte " +
                       std::to_string(r.offset()));
    }
    const auto rank = r.get<std::uint8_t>();
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      e.dims.push_back(r.get<std::uint32_t>());
      n *= e.dims.back();
    }
    r.need(n * 4);
    e.data.resize(n);
    for (auto& v : e.data) v = r.get_f32();
    out.push_back(std::move(e));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes at offset " + std::to_string(r.offset()));
  return out;
}

std::vector<std::uint8_t> write_checkpoint(const std::vector<CheckpointEntry>& entries) {
  std::vector<std::uint8_t> out;
  put_magic(out, "EVCK");
  le::put<std::uint32_t>(out, kCheckpointVersion);
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    if (e.dims.size() > 255) throw ValidationError("checkpoint: rank too large for " + e.name);
    le::put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) le::put<std::uint32_t>(out, d);
    for (float v : e.data) le::put_f32(out, v);
  }
  return out;
}

template <class T>
std::vector<CheckpointEntry> checkpoint_entries(const ad::ParameterStore<T>& store) {
  std::vector<CheckpointEntry> out;
  for (const auto& p : store.params()) {
    CheckpointEntry e;
    e.name = p.name;
    for (auto d : p.tensor.shape()) e.dims.push_back(static_cast<std::uint32_t>(d));
    for (T v : p.tensor.data()) e.data.push_back(static_cast<float>(v));
    out.push_back(std::move(e));
  }
  return out;
}

template <class T>
void restore_checkpoint(ad::ParameterStore<T>& store, const std::vector<CheckpointEntry>& entries) {
  if (entries.size() != store.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(entries.size()) +
                          " parameters, model has " + std::to_string(store.size()));
  }
  for (const auto& e : entries) {
    if (!store.contains(e.name)) throw ValidationError("checkpoint: unknown parameter \"" + e.name + "\"");
    auto t = store.get(e.name);
    ad::Shape shape(e.dims.begin(), e.dims.end());
    if (shape != t.shape()) {
      throw ValidationError("checkpoint: parameter \"" + e.name + "\" has shape " +
                            ad::to_string(shape) + ", model expects " + ad::to_string(t.shape()));
    }
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e.data[i]);
  }
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ad::ParameterStore<T>& store) {
  write_bytes(path, write_checkpoint(checkpoint_entries(store)));
}

template <class T>
void load_checkpoint(const std::filesystem::path& path, ad::ParameterStore<T>& store) {
  restore_checkpoint(store, parse_checkpoint(read_bytes(path)));
}

FeatureTable parse_features(std::span<const std::uint8_t> bytes) {
  le::Reader r(bytes);
  r.expect_magic("FEAT");
  FeatureTable t;
  t.rows = r.get<std::uint32_t>();
  t.dim = r.get<std::uint32_t>();
  const std::size_t n = static_cast<std::size_t>(t.rows) * t.dim;
  r.need(n * 4);
  t.data.resize(n);
  for (auto& v : t.data) v = r.get_f32();
  if (!r.done()) throw ParseError("features: trailing bytes at offset " + std::to_string(r.offset()));
  return t;
}

std::vector<std::uint8_t> write_features(const FeatureTable& table) {
  if (table.data.size() != static_cast<std::size_t>(table.rows) * table.dim) {
    throw ValidationError("features: data length does not match rows x dim");
  }
  std::vector<std::uint8_t> out;
  put_magic(out, "FEAT");
  le::put<std::uint32_t>(out, table.rows);
  le::put<std::uint32_t>(out, table.dim);
  for (float v : table.data) le::put_f32(out, v);
  return out;
}

#define EVCRAB_INSTANTIATE(T)                                                                 \
  template std::vector<CheckpointEntry> checkpoint_entries<T>(const ad::ParameterStore<T>&);  \
  template void restore_checkpoint<T>(ad::ParameterStore<T>&,                                 \
                                      const std::vector<CheckpointEntry>&);                   \
  template void save_checkpoint<T>(const std::filesystem::path&, const ad::ParameterStore<T>&); \
  template void load_checkpoint<T>(const std::filesystem::path&, ad::ParameterStore<T>&);

EVCRAB_INSTANTIATE(float)
EVCRAB_INSTANTIATE(double)

#undef EVCRAB_INSTANTIATE

}  // namespace evcrab
