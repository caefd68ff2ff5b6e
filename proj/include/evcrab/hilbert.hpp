#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace evcrab {

struct GridDims {
  int nx = 1, ny = 1, nt = 1;
  std::size_t cells() const { return static_cast<std::size_t>(nx) * ny * nt; }
};

struct GridCell {
  int x = 0, y = 0, t = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

enum class ScanDirection { Forward, Backward };

struct ScanOrder {
  GridDims dims;
  ScanDirection direction = ScanDirection::Forward;
  std::vector<GridCell> cells;
};

/// 3D Hilbert index of (x, y, t) on a 2^bits cube (Skilling's transpose
/// algorithm, identity initial rotation). Throws std::out_of_range when a
/// coordinate is >= 2^bits.
std::uint64_t hilbert_encode(const GridCell& c, int bits);
GridCell hilbert_decode(std::uint64_t index, int bits);

/// Smallest b with 2^b >= max(nx, ny, nt).
int hilbert_bits(const GridDims& dims);

/// Walks the padded 2^b cube in curve order and keeps cells inside `dims`.
ScanOrder build_scan_order(const GridDims& dims);
ScanOrder reverse_order(const ScanOrder& order);

/// Row-major raster order (x fastest, then y, then t) for locality comparisons.
ScanOrder raster_order(const GridDims& dims);

/// Position of a cell in the patch-token layout ((y * nx + x) * nt + t).
inline std::size_t token_index(const GridCell& c, const GridDims& d) {
  return (static_cast<std::size_t>(c.y) * d.nx + c.x) * d.nt + c.t;
}

/// Token indices in scan order.
std::vector<std::size_t> token_permutation(const ScanOrder& order);

/// Mean Manhattan distance between consecutive cells.
double mean_step_distance(const ScanOrder& order);

/// "index,x,y,t" lines with a header.
std::string scan_order_csv(const ScanOrder& order);

}  // namespace evcrab
