#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evcrab/events.hpp"

namespace evcrab {

enum class EventFormat { Binary, Csv };

/// Sidecar metadata for CSV event files.
struct CsvMetadata {
  int height = 0;
  int width = 0;
  std::int64_t duration_us = 0;
  std::optional<int> label;
};

CsvMetadata parse_csv_metadata(std::string_view json_text);
std::string write_csv_metadata(const EventStream& stream);

/// "EVST" container: u16 version, u16 H, u16 W, u64 duration, u64 count,
/// then (u64 t, u16 x, u16 y, u8 p) records. Little-endian throughout.
EventStream parse_event_binary(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_event_binary(const EventStream& stream);

/// Header "t,x,y,p", polarity written as -1/1.
EventStream parse_event_csv(std::string_view text, const CsvMetadata& meta);
std::string write_event_csv(const EventStream& stream);

/// Dispatches on format. CSV input needs its sidecar metadata.
EventStream parse_event_file(std::span<const std::uint8_t> bytes, EventFormat format,
                             const std::optional<CsvMetadata>& meta = std::nullopt);

/// Reads `.evs` (binary) or `.csv` (with `<stem>.json` sidecar) from disk.
EventStream read_event_file(const std::filesystem::path& path);
void write_event_file(const std::filesystem::path& path, const EventStream& stream);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

namespace le {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

template <class U>
void put(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFFu));
  }
}

void put_f32(std::vector<std::uint8_t>& out, float v);

/// Bounds-checked little-endian reader; throws ParseError with the byte offset.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class U>
  U get() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  float get_f32();
  std::string get_string(std::size_t n);
  void expect_magic(std::string_view magic);

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }
  void need(std::size_t n) const;

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace le

}  // namespace evcrab
