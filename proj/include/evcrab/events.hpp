#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evcrab {

/// One asynchronous camera event. Polarity is -1 or +1, time in microseconds.
struct Event {
  std::int64_t t = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Time-ordered events plus sensor geometry. Construct through `make_stream`
/// (or the parsers) to get a validated value.
struct EventStream {
  std::vector<Event> events;
  int height = 0;
  int width = 0;
  std::int64_t duration = 0;
  std::optional<int> label;

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

/// Sorts events stably by time and checks every invariant; throws
/// ValidationError on out-of-bounds coordinates, bad polarity or negative time.
/// Duration is raised to the last timestamp if it is smaller.
EventStream make_stream(std::vector<Event> events, int height, int width, std::int64_t duration,
                        std::optional<int> label = std::nullopt);

void validate(const EventStream& stream);

/// Events with t in [t0, t1], order preserved.
EventStream slice_window(const EventStream& stream, std::int64_t t0, std::int64_t t1);

/// Splits a stream along boundaries b_0 <= ... <= b_K. Slice k holds events with
/// t in (b_k, b_{k+1}]; the first slice also owns t == b_0. An event sitting exactly
/// on an interior boundary therefore belongs to the earlier slice.
std::vector<EventStream> partition_stream(const EventStream& stream,
                                          std::span<const std::int64_t> boundaries);

/// Dense H x W x N_t x 3 stack; channel 0 positive counts, 1 negative, 2 total.
struct FrameStack {
  int height = 0;
  int width = 0;
  int frames = 0;
  std::vector<float> data;

  float at(int y, int x, int f, int c) const {
    return data[((static_cast<std::size_t>(y) * width + x) * frames + f) * 3 + c];
  }
};

/// Splits the stream duration into `frames` equal windows and rasterizes each,
/// with nearest-pixel resampling when (height, width) differ from the sensor.
/// Every channel is divided by its per-frame max.
FrameStack stack_frames(const EventStream& stream, int frames, int height, int width);

/// Raw (unnormalized) total counts per frame window; the partition-conservation view
/// of stack_frames.
std::vector<std::int64_t> frame_window_counts(const EventStream& stream, int frames);

/// Window index used by stack_frames / rasterize_bins: window j covers (e_j, e_{j+1}]
/// with e_j = floor(j * duration / n); window 0 also owns t = 0.
int window_index(std::int64_t t, std::int64_t duration, int n);
std::int64_t window_edge(int j, std::int64_t duration, int n);

}  // namespace evcrab
