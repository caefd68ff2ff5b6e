#include "evcrab/hilbert.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

#include "evcrab/errors.hpp"

namespace evcrab {

namespace {

constexpr int kDims = 3;

void axes_to_transpose(std::array<std::uint32_t, kDims>& x, int bits) {
  const std::uint32_t m = 1u << (bits - 1);
  for (std::uint32_t q = m; q > 1; q >>= 1) {
    const std::uint32_t p = q - 1;
    for (int i = 0; i < kDims; ++i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        const std::uint32_t t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
  for (int i = 1; i < kDims; ++i) x[i] ^= x[i - 1];
  std::uint32_t t = 0;
  for (std::uint32_t q = m; q > 1; q >>= 1) {
    if (x[kDims - 1] & q) t ^= q - 1;
  }
  for (auto& v : x) v ^= t;
}

void transpose_to_axes(std::array<std::uint32_t, kDims>& x, int bits) {
  const std::uint32_t n = 2u << (bits - 1);
  std::uint32_t t = x[kDims - 1] >> 1;
  for (int i = kDims - 1; i > 0; --i) x[i] ^= x[i - 1];
  x[0] ^= t;
  for (std::uint32_t q = 2; q != n; q <<= 1) {
    const std::uint32_t p = q - 1;
    for (int i = kDims - 1; i >= 0; --i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
}

void check_bits(int bits) {
  if (bits < 0 || bits > 20) throw std::out_of_range("hilbert order must lie in [0, 20]");
}

}  // namespace

std::uint64_t hilbert_encode(const GridCell& c, int bits) {
  check_bits(bits);
  const std::int64_t side = std::int64_t{1} << bits;
  for (int v : {c.x, c.y, c.t}) {
    if (v < 0 || v >= side) {
      throw std::out_of_range("hilbert_encode: coordinate " + std::to_string(v) +
                              " outside [0, " + std::to_string(side) + ")");
    }
  }
  if (bits == 0) return 0;
  std::array<std::uint32_t, kDims> x{static_cast<std::uint32_t>(c.x),
                                      static_cast<std::uint32_t>(c.y),
                                      static_cast<std::uint32_t>(c.t)};
  axes_to_transpose(x, bits);
  std::uint64_t index = 0;
  for (int b = bits - 1; b >= 0; --b) {
    for (int i = 0; i < kDims; ++i) index = (index << 1) | ((x[i] >> b) & 1u);
  }
  return index;
}

GridCell hilbert_decode(std::uint64_t index, int bits) {
  check_bits(bits);
  if (bits == 0) {
    if (index != 0) throw std::out_of_range("hilbert_decode: index outside the curve");
    return {};
  }
  if (index >> (kDims * bits)) throw std::out_of_range("hilbert_decode: index outside the curve");
  std::array<std::uint32_t, kDims> x{0, 0, 0};
  int shift = kDims * bits;
  for (int b = bits - 1; b >= 0; --b) {
    for (int i = 0; i < kDims; ++i) {
      --shift;
      x[i] |= static_cast<std::uint32_t>((index >> shift) & 1u) << b;
    }
  }
  transpose_to_axes(x, bits);
  return {static_cast<int>(x[0]), static_cast<int>(x[1]), static_cast<int>(x[2])};
}

int hilbert_bits(const GridDims& dims) {
  const int m = std::max({dims.nx, dims.ny, dims.nt});
  int b = 0;
  while ((1 << b) < m) ++b;
  return b;
}

ScanOrder build_scan_order(const GridDims& dims) {
  if (dims.nx < 1 || dims.ny < 1 || dims.nt < 1) {
    throw ConfigError("grid dims must be positive");
  }
  const int bits = hilbert_bits(dims);
  ScanOrder order;
  order.dims = dims;
  order.cells.reserve(dims.cells());
  const std::uint64_t total = std::uint64_t{1} << (kDims * bits);
  for (std::uint64_t i = 0; i < total; ++i) {
    const GridCell c = hilbert_decode(i, bits);
    if (c.x < dims.nx && c.y < dims.ny && c.t < dims.nt) order.cells.push_back(c);
  }
  return order;
}

ScanOrder reverse_order(const ScanOrder& order) {
  ScanOrder r = order;
  std::reverse(r.cells.begin(), r.cells.end());
  r.direction =
      order.direction == ScanDirection::Forward ? ScanDirection::Backward : ScanDirection::Forward;
  return r;
}

ScanOrder raster_order(const GridDims& dims) {
  ScanOrder order;
  order.dims = dims;
  for (int t = 0; t < dims.nt; ++t) {
    for (int y = 0; y < dims.ny; ++y) {
      for (int x = 0; x < dims.nx; ++x) order.cells.push_back({x, y, t});
    }
  }
  return order;
}

std::vector<std::size_t> token_permutation(const ScanOrder& order) {
  std::vector<std::size_t> out;
  out.reserve(order.cells.size());
  for (const auto& c : order.cells) out.push_back(token_index(c, order.dims));
  return out;
}

double mean_step_distance(const ScanOrder& order) {
  if (order.cells.size() < 2) return 0.0;
  double total = 0;
  for (std::size_t i = 1; i < order.cells.size(); ++i) {
    const auto& a = order.cells[i - 1];
    const auto& b = order.cells[i];
    total += std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.t - b.t);
  }
  return total / static_cast<double>(order.cells.size() - 1);
}

std::string scan_order_csv(const ScanOrder& order) {
  std::string out = "index,x,y,t\n";
  for (std::size_t i = 0; i < order.cells.size(); ++i) {
    const auto& c = order.cells[i];
    out += std::to_string(i) + "," + std::to_string(c.x) + "," + std::to_string(c.y) + "," +
           std::to_string(c.t) + "\n";
  }
  return out;
}

}  // namespace evcrab
