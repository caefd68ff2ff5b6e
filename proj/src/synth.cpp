#include "evcrab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "evcrab/errors.hpp"

namespace evcrab {

namespace {

constexpr int kSimSteps = 256;

std::mt19937_64 sample_rng(std::uint64_t seed, int label, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(label), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

MotifInstance draw_instance(const SynthConfig& cfg, Motif m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(0.9, 1.1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double w = cfg.width;
  const double h = cfg.height;
  const double s = std::min(w, h);
  const double dur = static_cast<double>(cfg.duration_us);
  const double speed = cfg.speed_scale * jitter(rng);
  MotifInstance in;
  in.motif = m;
  switch (m) {
    case Motif::BarRight:
    case Motif::BarLeft: {
      const double travel = 0.6 * w * speed;
      in.size = 0.08 * s;
      in.extent = 0.55 * h;
      in.cy = h * (0.4 + 0.2 * unit(rng));
      in.cx = m == Motif::BarRight ? 0.2 * w : 0.8 * w;
      in.vx = (m == Motif::BarRight ? 1.0 : -1.0) * travel / dur;
      break;
    }
    case Motif::BarDown:
    case Motif::BarUp: {
      const double travel = 0.6 * h * speed;
      in.size = 0.08 * s;
      in.extent = 0.55 * w;
      in.cx = w * (0.4 + 0.2 * unit(rng));
      in.cy = m == Motif::BarDown ? 0.2 * h : 0.8 * h;
      in.vy = (m == Motif::BarDown ? 1.0 : -1.0) * travel / dur;
      break;
    }
    case Motif::DotsClockwise:
    case Motif::DotsCounterClockwise: {
      in.cx = w * (0.45 + 0.1 * unit(rng));
      in.cy = h * (0.45 + 0.1 * unit(rng));
      in.size = 0.08 * s;
      in.extent = 0.25 * s;
      in.vx = 2.0 * std::numbers::pi * unit(rng);  // start phase
      in.rate = (m == Motif::DotsClockwise ? 1.0 : -1.0) * 1.5 * std::numbers::pi * speed / dur;
      break;
    }
    case Motif::RingExpand:
    case Motif::RingContract: {
      in.cx = w * (0.45 + 0.1 * unit(rng));
      in.cy = h * (0.45 + 0.1 * unit(rng));
      in.size = 0.06 * s;
      const double r0 = 0.08 * s;
      const double r1 = 0.08 * s + 0.32 * s * speed;
      in.extent = m == Motif::RingExpand ? r0 : r1;
      in.rate = (m == Motif::RingExpand ? 1.0 : -1.0) * (r1 - r0) / dur;
      break;
    }
    case Motif::Zigzag: {
      in.cx = 0.2 * w;
      in.cy = h * (0.45 + 0.1 * unit(rng));
      in.size = 0.08 * s;
      in.extent = 0.18 * h;  // vertical amplitude
      in.vx = 0.6 * w * speed / dur;
      in.rate = 2.0 * speed / dur;  // oscillation periods per microsecond
      break;
    }
    case Motif::Flicker: {
      in.cx = w * (0.4 + 0.2 * unit(rng));
      in.cy = h * (0.4 + 0.2 * unit(rng));
      in.size = 0.3 * s;
      in.rate = 6.0 * speed / dur;  // on/off toggles per microsecond
      break;
    }
  }
  return in;
}

bool occupied(const MotifInstance& in, double t, double px, double py) {
  switch (in.motif) {
    case Motif::BarRight:
    case Motif::BarLeft:
    case Motif::BarDown:
    case Motif::BarUp: {
      const double cx = in.cx + in.vx * t;
      const double cy = in.cy + in.vy * t;
      const bool vertical = in.motif == Motif::BarRight || in.motif == Motif::BarLeft;
      const double half_w = 0.5 * (vertical ? in.size : in.extent);
      const double half_h = 0.5 * (vertical ? in.extent : in.size);
      return std::abs(px - cx) <= half_w && std::abs(py - cy) <= half_h;
    }
    case Motif::DotsClockwise:
    case Motif::DotsCounterClockwise: {
      const double phase = in.vx + in.rate * t;
      for (double offset : {0.0, std::numbers::pi}) {
        const double dx = in.cx + in.extent * std::cos(phase + offset) - px;
        const double dy = in.cy + in.extent * std::sin(phase + offset) - py;
        if (dx * dx + dy * dy <= in.size * in.size) return true;
      }
      return false;
    }
    case Motif::RingExpand:
    case Motif::RingContract: {
      const double r = in.extent + in.rate * t;
      const double d = std::hypot(px - in.cx, py - in.cy);
      return std::abs(d - r) <= 0.5 * in.size;
    }
    case Motif::Zigzag: {
      const double cx = in.cx + in.vx * t;
      // triangle wave in [-1, 1]
      const double u = in.rate * t;
      const double tri = 4.0 * std::abs(u - std::floor(u + 0.5)) - 1.0;
      const double cy = in.cy + in.extent * tri;
      const double dx = cx - px;
      const double dy = cy - py;
      return dx * dx + dy * dy <= in.size * in.size;
    }
    case Motif::Flicker: {
      const bool on = static_cast<long long>(std::floor(in.rate * t)) % 2 == 0;
      return on && std::abs(px - in.cx) <= 0.5 * in.size && std::abs(py - in.cy) <= 0.5 * in.size;
    }
  }
  return false;
}

}  // namespace

std::string motif_name(Motif m) {
  switch (m) {
    case Motif::BarRight: return "bar_right";
    case Motif::BarLeft: return "bar_left";
    case Motif::BarDown: return "bar_down";
    case Motif::BarUp: return "bar_up";
    case Motif::DotsClockwise: return "dots_clockwise";
    case Motif::DotsCounterClockwise: return "dots_counterclockwise";
    case Motif::RingExpand: return "ring_expand";
    case Motif::RingContract: return "ring_contract";
    case Motif::Zigzag: return "zigzag";
    case Motif::Flicker: return "flicker";
  }
  return "unknown";
}

void validate(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (cfg.classes > kMotifCount) {
    throw ConfigError("synth: " + std::to_string(cfg.classes) + " classes requested but only " +
                      std::to_string(kMotifCount) + " motifs exist");
  }
  if (cfg.height < 16 || cfg.width < 16) throw ConfigError("synth: sensor must be at least 16x16");
  if (cfg.height > 0xFFFF || cfg.width > 0xFFFF) throw ConfigError("synth: sensor too large");
  if (cfg.samples_per_class < 1) throw ConfigError("synth: samples_per_class must be positive");
  if (cfg.duration_us < kSimSteps) throw ConfigError("synth: duration too short");
  if (!(cfg.noise_rate >= 0.0)) throw ConfigError("synth: noise_rate must be non-negative");
  if (!(cfg.speed_scale >= 0.0)) throw ConfigError("synth: speed_scale must be non-negative");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw ConfigError("synth: train_fraction must lie in (0, 1)");
  }
}

SynthSample synth_sample(const SynthConfig& cfg, int label, int index) {
  validate(cfg);
  if (label < 0 || label >= cfg.classes) throw ConfigError("synth: label out of range");
  auto rng = sample_rng(cfg.seed, label, index);
  SynthSample out;
  out.instance = draw_instance(cfg, static_cast<Motif>(label), rng);

  const int h = cfg.height;
  const int w = cfg.width;
  const double dur = static_cast<double>(cfg.duration_us);
  std::vector<std::uint8_t> prev(static_cast<std::size_t>(h) * w);
  std::vector<std::uint8_t> cur(prev.size());
  auto render = [&](double t, std::vector<std::uint8_t>& img) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        img[static_cast<std::size_t>(y) * w + x] = occupied(out.instance, t, x + 0.5, y + 0.5);
      }
    }
  };

  std::vector<Event> events;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  render(0.0, prev);
  for (int k = 1; k <= kSimSteps; ++k) {
    const double t_prev = dur * (k - 1) / kSimSteps;
    const double t_cur = dur * k / kSimSteps;
    render(t_cur, cur);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (cur[i] == prev[i]) continue;
        Event e;
        e.t = std::min<std::int64_t>(
            cfg.duration_us, static_cast<std::int64_t>(t_prev + (t_cur - t_prev) * unit(rng)));
        e.x = static_cast<std::uint16_t>(x);
        e.y = static_cast<std::uint16_t>(y);
        e.p = cur[i] > prev[i] ? 1 : -1;
        events.push_back(e);
      }
    }
    std::swap(prev, cur);
  }

  if (cfg.noise_rate > 0.0) {
    std::poisson_distribution<long long> count(cfg.noise_rate * dur);
    const long long n = count(rng);
    std::uniform_int_distribution<int> xs(0, w - 1);
    std::uniform_int_distribution<int> ys(0, h - 1);
    std::uniform_int_distribution<std::int64_t> ts(0, cfg.duration_us);
    for (long long i = 0; i < n; ++i) {
      Event e;
      e.t = ts(rng);
      e.x = static_cast<std::uint16_t>(xs(rng));
      e.y = static_cast<std::uint16_t>(ys(rng));
      e.p = unit(rng) < 0.5 ? 1 : -1;
      events.push_back(e);
    }
  }
  out.stream = make_stream(std::move(events), h, w, cfg.duration_us, label);
  return out;
}

std::vector<EventStream> synth_generate(const SynthConfig& cfg) {
  validate(cfg);
  std::vector<EventStream> out(static_cast<std::size_t>(cfg.classes) * cfg.samples_per_class);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(out.size()); ++i) {
    out[i] = synth_sample(cfg, i / cfg.samples_per_class, i % cfg.samples_per_class).stream;
  }
  return out;
}

}  // namespace evcrab
