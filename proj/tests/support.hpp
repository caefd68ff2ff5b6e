#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "evcrab/events.hpp"
#include "evcrab/tensor.hpp"

namespace evcrab::test {

// Small hand-rolled generator for property tests: every case derives from
// (suite seed, case index) so a failure can be replayed in isolation.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  Gen(std::uint64_t seed, std::uint64_t index) : rng_(seed * 0x9E3779B97F4A7C15ull + index) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  std::int64_t integer64(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
  }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  std::vector<double> reals(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = real(lo, hi);
    return v;
  }

  /// Random valid stream. Timestamps may repeat and may sit on any boundary.
  EventStream stream(int max_events = 200, int min_side = 1) {
    const int h = integer(min_side, 48), w = integer(min_side, 48);
    const std::int64_t duration = integer64(8, 100000);
    const int n = integer(0, max_events);
    std::vector<Event> ev;
    ev.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      ev.push_back({coin(0.1) ? 0 : integer64(0, duration), static_cast<std::uint16_t>(integer(0, w - 1)),
                    static_cast<std::uint16_t>(integer(0, h - 1)),
                    static_cast<std::int8_t>(coin() ? 1 : -1)});
    }
    return make_stream(std::move(ev), h, w, duration);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline ad::Tensor<double> leaf(ad::Shape shape, Gen& g, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = ad::numel(shape);
  return ad::Tensor<double>::from(std::move(shape), g.reals(n, lo, hi), true);
}

// Gradient checks run at unit-scale parameters rather than at the initialisation,
// whose small weights leave many gradients below what central differences resolve.
inline void randomize_params(ad::ParameterStore<double>& store, Gen& g, double scale = 1.0) {
  for (auto& p : store.params()) {
    auto t = p.tensor;
    for (auto& v : t.mutable_data()) v = g.real(-scale, scale);
  }
}

}  // namespace evcrab::test
