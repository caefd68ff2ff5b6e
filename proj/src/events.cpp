#include "evcrab/events.hpp"

#include <algorithm>

#include "evcrab/errors.hpp"

namespace evcrab {

void validate(const EventStream& stream) {
  if (stream.height <= 0 || stream.width <= 0) {
    throw ValidationError("sensor geometry must be positive, got " + std::to_string(stream.height) +
                          "x" + std::to_string(stream.width));
  }
  std::int64_t prev = 0;
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const Event& e = stream.events[i];
    if (e.x >= stream.width || e.y >= stream.height) {
      throw ValidationError("event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," +
                            std::to_string(e.y) + ") outside " + std::to_string(stream.width) +
                            "x" + std::to_string(stream.height) + " sensor");
    }
    if (e.p != 1 && e.p != -1) {
      throw ValidationError("event " + std::to_string(i) + " has polarity " + std::to_string(e.p));
    }
    if (e.t < 0) throw ValidationError("event " + std::to_string(i) + " has negative timestamp");
    if (e.t < prev) throw ValidationError("events not sorted at index " + std::to_string(i));
    prev = e.t;
  }
  if (stream.duration < prev) throw ValidationError("duration shorter than last timestamp");
}

EventStream make_stream(std::vector<Event> events, int height, int width, std::int64_t duration,
                        std::optional<int> label) {
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  EventStream s;
  s.events = std::move(events);
  s.height = height;
  s.width = width;
  s.duration = duration;
  if (!s.events.empty()) s.duration = std::max(s.duration, s.events.back().t);
  s.label = label;
  validate(s);
  return s;
}

EventStream slice_window(const EventStream& stream, std::int64_t t0, std::int64_t t1) {
  EventStream out;
  out.height = stream.height;
  out.width = stream.width;
  out.duration = stream.duration;
  out.label = stream.label;
  auto lo = std::lower_bound(stream.events.begin(), stream.events.end(), t0,
                             [](const Event& e, std::int64_t t) { return e.t < t; });
  auto hi = std::upper_bound(lo, stream.events.end(), t1,
                             [](std::int64_t t, const Event& e) { return t < e.t; });
  out.events.assign(lo, hi);
  return out;
}

std::vector<EventStream> partition_stream(const EventStream& stream,
                                          std::span<const std::int64_t> boundaries) {
  std::vector<EventStream> slices;
  if (boundaries.size() < 2) return slices;
  slices.reserve(boundaries.size() - 1);
  for (std::size_t k = 0; k + 1 < boundaries.size(); ++k) {
    // (b_k, b_{k+1}] is [b_k + 1, b_{k+1}] on integer time
    const std::int64_t lo = k == 0 ? boundaries[0] : boundaries[k] + 1;
    if (lo > boundaries[k + 1]) {
      slices.push_back(slice_window(stream, 1, 0));
    } else {
      slices.push_back(slice_window(stream, lo, boundaries[k + 1]));
    }
  }
  return slices;
}

int window_index(std::int64_t t, std::int64_t duration, int n) {
  if (duration <= 0 || t <= 0) return 0;
  const std::int64_t j = (t * n + duration - 1) / duration - 1;
  return static_cast<int>(std::clamp<std::int64_t>(j, 0, n - 1));
}

std::int64_t window_edge(int j, std::int64_t duration, int n) {
  return static_cast<std::int64_t>(j) * duration / n;
}

std::vector<std::int64_t> frame_window_counts(const EventStream& stream, int frames) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(std::max(frames, 0)), 0);
  if (frames <= 0) return counts;
  for (const Event& e : stream.events) ++counts[window_index(e.t, stream.duration, frames)];
  return counts;
}

FrameStack stack_frames(const EventStream& stream, int frames, int height, int width) {
  if (frames < 1) throw ConfigError("stack_frames needs at least one frame");
  FrameStack st;
  st.height = height;
  st.width = width;
  st.frames = frames;
  st.data.assign(static_cast<std::size_t>(height) * width * frames * 3, 0.0f);
  std::vector<float> counts(st.data.size(), 0.0f);
  for (const Event& e : stream.events) {
    const int f = window_index(e.t, stream.duration, frames);
    const int x = static_cast<int>(static_cast<std::int64_t>(e.x) * width / stream.width);
    const int y = static_cast<int>(static_cast<std::int64_t>(e.y) * height / stream.height);
    const std::size_t base = ((static_cast<std::size_t>(y) * width + x) * frames + f) * 3;
    counts[base + (e.p > 0 ? 0 : 1)] += 1.0f;
    counts[base + 2] += 1.0f;
  }
  for (int f = 0; f < frames; ++f) {
    for (int c = 0; c < 3; ++c) {
      float peak = 0.0f;
      for (int p = 0; p < height * width; ++p) {
        peak = std::max(peak, counts[(static_cast<std::size_t>(p) * frames + f) * 3 + c]);
      }
      if (peak == 0.0f) continue;
      for (int p = 0; p < height * width; ++p) {
        const std::size_t i = (static_cast<std::size_t>(p) * frames + f) * 3 + c;
        st.data[i] = counts[i] / peak;
      }
    }
  }
  return st;
}

}  // namespace evcrab
