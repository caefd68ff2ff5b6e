#include <doctest.h>

#include <set>
#include <stdexcept>

#include "evcrab/hilbert.hpp"

using namespace evcrab;

namespace {

// Order-2 3D curve from an independent Skilling transform (the `hilbertcurve`
// Python package, point_from_distance(i) for i = 0..63, axes (x, y, t)).
const GridCell kCurve64[] = {
    {0, 0, 0}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}, {0, 0, 1},
    {0, 0, 2}, {0, 0, 3}, {1, 0, 3}, {1, 0, 2}, {1, 1, 2}, {1, 1, 3}, {0, 1, 3}, {0, 1, 2},
    {0, 2, 2}, {0, 2, 3}, {0, 3, 3}, {0, 3, 2}, {1, 3, 2}, {1, 3, 3}, {1, 2, 3}, {1, 2, 2},
    {1, 2, 1}, {0, 2, 1}, {0, 3, 1}, {1, 3, 1}, {1, 3, 0}, {0, 3, 0}, {0, 2, 0}, {1, 2, 0},
    {2, 2, 0}, {3, 2, 0}, {3, 3, 0}, {2, 3, 0}, {2, 3, 1}, {3, 3, 1}, {3, 2, 1}, {2, 2, 1},
    {2, 2, 2}, {2, 2, 3}, {2, 3, 3}, {2, 3, 2}, {3, 3, 2}, {3, 3, 3}, {3, 2, 3}, {3, 2, 2},
    {3, 1, 2}, {3, 1, 3}, {2, 1, 3}, {2, 1, 2}, {2, 0, 2}, {2, 0, 3}, {3, 0, 3}, {3, 0, 2},
    {3, 0, 1}, {3, 1, 1}, {2, 1, 1}, {2, 0, 1}, {2, 0, 0}, {2, 1, 0}, {3, 1, 0}, {3, 0, 0},
};

int manhattan(const GridCell& a, const GridCell& b) {
  return std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.t - b.t);
}

}  // namespace

TEST_CASE("origin encodes to zero") {
  for (int bits = 1; bits <= 10; ++bits) CHECK(hilbert_encode({0, 0, 0}, bits) == 0);
}

TEST_CASE("order-2 curve matches the reference transform") {
  for (std::uint64_t i = 0; i < 64; ++i) {
    CHECK(hilbert_decode(i, 2) == kCurve64[i]);
    CHECK(hilbert_encode(kCurve64[i], 2) == i);
  }
  // Spot values at order 4 from the same reference.
  CHECK(hilbert_encode({5, 9, 3}, 4) == 2011);
  CHECK(hilbert_encode({15, 15, 15}, 4) == 2925);
  CHECK(hilbert_encode({0, 15, 0}, 4) == 1901);
  CHECK(hilbert_encode({7, 8, 9}, 4) == 1532);
}

TEST_CASE("8x8x8 cube: bijection and unit steps") {
  std::set<std::uint64_t> seen;
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y)
      for (int t = 0; t < 8; ++t) {
        const auto i = hilbert_encode({x, y, t}, 3);
        CHECK(hilbert_decode(i, 3) == GridCell{x, y, t});
        seen.insert(i);
      }
  CHECK(seen.size() == 512);
  for (std::uint64_t i = 0; i + 1 < 512; ++i) {
    CHECK(manhattan(hilbert_decode(i, 3), hilbert_decode(i + 1, 3)) == 1);
  }
}

TEST_CASE("out-of-range coordinates throw") {
  CHECK_THROWS_AS(hilbert_encode({8, 0, 0}, 3), std::out_of_range);
  CHECK_THROWS_AS(hilbert_encode({0, -1, 0}, 3), std::out_of_range);
}

TEST_CASE("scan orders over small grids") {
  CHECK(build_scan_order({1, 1, 1}).cells.size() == 1);

  const auto cube = build_scan_order({2, 2, 2});
  REQUIRE(cube.cells.size() == 8);
  std::set<std::size_t> tokens;
  for (std::size_t i = 0; i < 8; ++i) {
    tokens.insert(token_index(cube.cells[i], cube.dims));
    if (i + 1 < 8) CHECK(manhattan(cube.cells[i], cube.cells[i + 1]) == 1);
  }
  CHECK(tokens.size() == 8);

  const auto odd = build_scan_order({3, 3, 2});
  REQUIRE(odd.cells.size() == 18);
  std::size_t pos = 0;
  for (const auto& c : odd.cells) {
    while (pos < 64 && !(kCurve64[pos] == c)) ++pos;
    CHECK(pos < 64);
    ++pos;
  }
}

TEST_CASE("reverse order") {
  const auto fwd = build_scan_order({5, 3, 4});
  const auto bwd = reverse_order(fwd);
  CHECK(bwd.direction == ScanDirection::Backward);
  CHECK(bwd.cells.front() == fwd.cells.back());
  CHECK(reverse_order(bwd).cells == fwd.cells);
  CHECK(reverse_order(bwd).direction == ScanDirection::Forward);
  auto perm = token_permutation(bwd);
  std::sort(perm.begin(), perm.end());
  for (std::size_t i = 0; i < perm.size(); ++i) CHECK(perm[i] == i);
}

TEST_CASE("full cubes are at least as local as raster order") {
  for (int side : {2, 4, 8}) {
    const GridDims d{side, side, side};
    CHECK(mean_step_distance(build_scan_order(d)) <= mean_step_distance(raster_order(d)));
  }
}

TEST_CASE("scan order csv") {
  const auto csv = scan_order_csv(build_scan_order({2, 1, 1}));
  CHECK(csv == "index,x,y,t\n0,0,0,0\n1,1,0,0\n");
}
