#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace evcrab {

using Rng = std::mt19937_64;

template <class T>
std::vector<T> normal_values(Rng& rng, std::size_t n, double stddev, double mean = 0.0) {
  std::normal_distribution<double> dist(mean, stddev);
  std::vector<T> out(n);
  for (auto& v : out) v = static_cast<T>(dist(rng));
  return out;
}

template <class T>
std::vector<T> uniform_values(Rng& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> out(n);
  for (auto& v : out) v = static_cast<T>(dist(rng));
  return out;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class T>
std::vector<T> fan_in_values(Rng& rng, std::size_t n, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform_values<T>(rng, n, -bound, bound);
}

}  // namespace evcrab
