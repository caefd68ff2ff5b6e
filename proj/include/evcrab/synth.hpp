#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evcrab/events.hpp"

namespace evcrab {

struct SynthConfig {
  int classes = 8;
  int samples_per_class = 100;
  int height = 64;
  int width = 64;
  std::int64_t duration_us = 100000;
  double noise_rate = 0.002;  // background events per microsecond
  double speed_scale = 1.0;   // 0 freezes every motif
  double train_fraction = 0.8;
  std::uint64_t seed = 7;
};

/// Moving-pattern families, one per class index. Classes differ in trajectory
/// (direction of travel, rotation sense, radial direction, flicker) and speed.
enum class Motif {
  BarRight,
  BarLeft,
  BarDown,
  BarUp,
  DotsClockwise,
  DotsCounterClockwise,
  RingExpand,
  RingContract,
  Zigzag,
  Flicker,
};

inline constexpr int kMotifCount = 10;

std::string motif_name(Motif m);

/// Per-sample draw of a motif's geometry. Velocities are in pixels per microsecond.
struct MotifInstance {
  Motif motif = Motif::BarRight;
  double cx = 0.0, cy = 0.0;  // start centre
  double vx = 0.0, vy = 0.0;  // translation
  double size = 0.0;          // bar width / dot radius / ring thickness / square side
  double extent = 0.0;        // bar length / orbit radius / start ring radius
  double rate = 0.0;          // angular (rad/us) or radial (px/us) speed, flicker toggles/us
};

struct SynthSample {
  EventStream stream;
  MotifInstance instance;
};

void validate(const SynthConfig& cfg);

/// Deterministic in (cfg, label, index); independent of every other sample.
SynthSample synth_sample(const SynthConfig& cfg, int label, int index);

/// All samples, class-major order. Pure function of cfg.
std::vector<EventStream> synth_generate(const SynthConfig& cfg);

}  // namespace evcrab
