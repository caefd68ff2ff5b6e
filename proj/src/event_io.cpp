#include "evcrab/event_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "evcrab/errors.hpp"

namespace evcrab {

namespace le {

void put_f32(std::vector<std::uint8_t>& out, float v) { put(out, std::bit_cast<std::uint32_t>(v)); }

void Reader::need(std::size_t n) const {
  if (pos_ + n > bytes_.size()) {
    throw ParseError("truncated input at byte offset " + std::to_string(pos_) + " (need " +
                     std::to_string(n) + " more bytes)");
  }
}

float Reader::get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }

std::string Reader::get_string(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

void Reader::expect_magic(std::string_view magic) {
  const std::size_t at = pos_;
  if (get_string(magic.size()) != magic) {
    throw ParseError("bad magic at byte offset " + std::to_string(at) + ", expected \"" +
                     std::string(magic) + "\"");
  }
}

}  // namespace le

namespace {

constexpr std::uint16_t kEventVersion = 1;
constexpr std::size_t kMaxU16 = 0xFFFF;

void check_sorted_in_bounds(const EventStream& s) {
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const Event& e = s.events[i];
    if (e.x >= s.width || e.y >= s.height) {
      throw ValidationError("event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," +
                            std::to_string(e.y) + ") outside header bounds " +
                            std::to_string(s.width) + "x" + std::to_string(s.height));
    }
    if (e.t > s.duration) {
      throw ValidationError("event " + std::to_string(i) + " timestamp " + std::to_string(e.t) +
                            " beyond duration " + std::to_string(s.duration));
    }
  }
}

template <class I>
I parse_int(std::string_view field, std::size_t line, const char* what) {
  I v{};
  const auto* b = field.data();
  const auto* e = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e) {
    throw ParseError("line " + std::to_string(line) + ": bad " + what + " field \"" +
                     std::string(field) + "\"");
  }
  return v;
}

}  // namespace

CsvMetadata parse_csv_metadata(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("sidecar metadata: ") + ex.what());
  }
  CsvMetadata m;
  try {
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.duration_us = j.at("duration_us").get<std::int64_t>();
    if (j.contains("label") && !j["label"].is_null()) m.label = j["label"].get<int>();
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("sidecar metadata: ") + ex.what());
  }
  return m;
}

std::string write_csv_metadata(const EventStream& s) {
  nlohmann::ordered_json j;
  j["height"] = s.height;
  j["width"] = s.width;
  j["duration_us"] = s.duration;
  if (s.label) j["label"] = *s.label;
  return j.dump() + "\n";
}

EventStream parse_event_binary(std::span<const std::uint8_t> bytes) {
  le::Reader r(bytes);
  r.expect_magic("EVST");
  const auto version = r.get<std::uint16_t>();
  if (version != kEventVersion) {
    throw ParseError("unsupported event format version " + std::to_string(version));
  }
  EventStream s;
  s.height = r.get<std::uint16_t>();
  s.width = r.get<std::uint16_t>();
  s.duration = static_cast<std::int64_t>(r.get<std::uint64_t>());
  const auto count = r.get<std::uint64_t>();
  constexpr std::size_t kRecord = 8 + 2 + 2 + 1;
  if (count > bytes.size() / kRecord) r.need(count * kRecord);
  s.events.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    Event e;
    e.t = static_cast<std::int64_t>(r.get<std::uint64_t>());
    e.x = r.get<std::uint16_t>();
    e.y = r.get<std::uint16_t>();
    const auto p = r.get<std::uint8_t>();
    if (p > 1) {
      throw ParseError("record " + std::to_string(i) + " at byte offset " + std::to_string(at) +
                       ": polarity byte " + std::to_string(p));
    }
    e.p = p == 1 ? 1 : -1;
    s.events.push_back(e);
  }
  if (!r.done()) {
    throw ParseError("trailing bytes after record block at offset " + std::to_string(r.offset()));
  }
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  check_sorted_in_bounds(s);
  return s;
}

std::vector<std::uint8_t> write_event_binary(const EventStream& s) {
  if (static_cast<std::size_t>(s.height) > kMaxU16 || static_cast<std::size_t>(s.width) > kMaxU16) {
    throw ValidationError("sensor geometry does not fit the binary header");
  }
  std::vector<std::uint8_t> out;
  out.reserve(4 + 2 * 3 + 16 + s.events.size() * 13);
  for (char c : std::string_view("EVST")) out.push_back(static_cast<std::uint8_t>(c));
  le::put<std::uint16_t>(out, kEventVersion);
  le::put<std::uint16_t>(out, static_cast<std::uint16_t>(s.height));
  le::put<std::uint16_t>(out, static_cast<std::uint16_t>(s.width));
  le::put<std::uint64_t>(out, static_cast<std::uint64_t>(s.duration));
  le::put<std::uint64_t>(out, s.events.size());
  for (const Event& e : s.events) {
    le::put<std::uint64_t>(out, static_cast<std::uint64_t>(e.t));
    le::put<std::uint16_t>(out, e.x);
    le::put<std::uint16_t>(out, e.y);
    le::put_u8(out, e.p > 0 ? 1 : 0);
  }
  return out;
}

EventStream parse_event_csv(std::string_view text, const CsvMetadata& meta) {
  EventStream s;
  s.height = meta.height;
  s.width = meta.width;
  s.duration = meta.duration_us;
  s.label = meta.label;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "t,x,y,p") throw ParseError("line 1: expected header \"t,x,y,p\"");
      header_seen = true;
      continue;
    }
    std::string_view fields[4];
    std::size_t n = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (n == 4) throw ParseError("line " + std::to_string(line_no) + ": too many fields");
        fields[n++] = line.substr(start, i - start);
        start = i + 1;
      }
    }
    if (n != 4) throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields");
    Event e;
    e.t = parse_int<std::int64_t>(fields[0], line_no, "t");
    const auto x = parse_int<long>(fields[1], line_no, "x");
    const auto y = parse_int<long>(fields[2], line_no, "y");
    const auto p = parse_int<int>(fields[3], line_no, "p");
    if (e.t < 0) throw ParseError("line " + std::to_string(line_no) + ": negative timestamp");
    if (p != 1 && p != -1) {
      throw ParseError("line " + std::to_string(line_no) + ": polarity must be -1 or 1");
    }
    if (x < 0 || y < 0 || x >= meta.width || y >= meta.height) {
      throw ValidationError("line " + std::to_string(line_no) + ": coordinate (" +
                            std::to_string(x) + "," + std::to_string(y) + ") outside " +
                            std::to_string(meta.width) + "x" + std::to_string(meta.height));
    }
    e.x = static_cast<std::uint16_t>(x);
    e.y = static_cast<std::uint16_t>(y);
    e.p = static_cast<std::int8_t>(p);
    s.events.push_back(e);
  }
  if (!header_seen && line_no > 0) throw ParseError("missing header");
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  check_sorted_in_bounds(s);
  return s;
}

std::string write_event_csv(const EventStream& s) {
  std::string out = "t,x,y,p\n";
  out.reserve(out.size() + s.events.size() * 16);
  for (const Event& e : s.events) {
    out += std::to_string(e.t);
    out += ',';
    out += std::to_string(e.x);
    out += ',';
    out += std::to_string(e.y);
    out += e.p > 0 ? ",1\n" : ",-1\n";
  }
  return out;
}

EventStream parse_event_file(std::span<const std::uint8_t> bytes, EventFormat format,
                             const std::optional<CsvMetadata>& meta) {
  if (format == EventFormat::Binary) return parse_event_binary(bytes);
  if (!meta) throw ParseError("CSV event data needs sidecar metadata");
  return parse_event_csv(
      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), *meta);
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

EventStream read_event_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (path.extension() == ".csv") {
    auto sidecar = path;
    sidecar.replace_extension(".json");
    const auto meta_bytes = read_bytes(sidecar);
    const auto meta = parse_csv_metadata(
        std::string_view(reinterpret_cast<const char*>(meta_bytes.data()), meta_bytes.size()));
    return parse_event_file(bytes, EventFormat::Csv, meta);
  }
  return parse_event_file(bytes, EventFormat::Binary);
}

void write_event_file(const std::filesystem::path& path, const EventStream& stream) {
  if (path.extension() == ".csv") {
    const auto csv = write_event_csv(stream);
    write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
    auto sidecar = path;
    sidecar.replace_extension(".json");
    const auto meta = write_csv_metadata(stream);
    write_bytes(sidecar,
                std::span(reinterpret_cast<const std::uint8_t*>(meta.data()), meta.size()));
    return;
  }
  write_bytes(path, write_event_binary(stream));
}

}  // namespace evcrab
