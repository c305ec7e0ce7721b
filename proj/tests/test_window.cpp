#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sa2vp/window.hpp"
#include "support/testing.hpp"

using namespace sa2vp;

TEST_CASE("width-1 window is exactly the center") {
  auto w = make_window(5, 5, {2, 3}, 1);
  REQUIRE(w.valid.size() == 1);
  CHECK(w.valid[0] == GridPos{2, 3});
  CHECK(w.linear[0] == 2 * 5 + 3);
}

TEST_CASE("3x3 window at a corner keeps the in-bounds quadrant") {
  auto w = make_window(4, 4, {0, 0}, 3);
  REQUIRE(w.valid.size() == 4);
  CHECK(w.valid[0] == GridPos{0, 0});
  CHECK(w.valid[1] == GridPos{0, 1});
  CHECK(w.valid[2] == GridPos{1, 0});
  CHECK(w.valid[3] == GridPos{1, 1});
}

TEST_CASE("3x3 window at an interior point is complete and row-major") {
  auto w = make_window(4, 4, {2, 2}, 3);
  REQUIRE(w.valid.size() == 9);
  size_t i = 0;
  for (int64_t r = 1; r <= 3; ++r)
    for (int64_t c = 1; c <= 3; ++c) CHECK(w.valid[i++] == GridPos{r, c});
}

TEST_CASE("even widths and out-of-grid centers are rejected") {
  CHECK_THROWS_AS(make_window(4, 4, {1, 1}, 2), Error);
  CHECK_THROWS_AS(make_window(4, 4, {4, 0}, 3), Error);
  CHECK_THROWS_AS(make_window(4, 4, {0, -1}, 1), Error);
}

TEST_CASE("valid count is bounded by ceil(c/2)^2 and c^2, with equality iff interior") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    int64_t h = rng.uniform_int(1, 8);
    int64_t w = rng.uniform_int(1, 8);
    int width = static_cast<int>(2 * rng.uniform_int(0, 3) + 1);
    GridPos center{rng.uniform_int(0, h - 1), rng.uniform_int(0, w - 1)};
    auto spec = make_window(h, w, center, width);
    int64_t r = width / 2;
    // corner case keeps ceil(c/2) positions per axis, clipped by the grid
    int64_t lo = std::min(h, r + 1) * std::min(w, r + 1);
    int64_t hi = static_cast<int64_t>(width) * width;
    int64_t n = static_cast<int64_t>(spec.valid.size());
    CHECK(n >= lo);
    CHECK(n <= hi);
    if (h >= r + 1 && w >= r + 1) CHECK(n >= (r + 1) * (r + 1));
    bool interior = center.row - r >= 0 && center.row + r < h && center.col - r >= 0 &&
                    center.col + r < w;
    CHECK((n == hi) == interior);
  }
}

TEST_CASE("coordinate map: identity, coarser, finer, invalid") {
  CHECK(map_coord({3, 2}, 4, 4, 4, 4) == GridPos{3, 2});
  // 4x4 queries onto a 2x2 kv grid: floor division by 2
  CHECK(map_coord({3, 2}, 4, 4, 2, 2) == GridPos{1, 1});
  CHECK(map_coord({0, 1}, 4, 4, 2, 2) == GridPos{0, 0});
  // 2x2 queries onto a 4x4 kv grid: block centers
  CHECK(map_coord({0, 0}, 2, 2, 4, 4) == GridPos{1, 1});
  CHECK(map_coord({1, 0}, 2, 2, 4, 4) == GridPos{3, 1});
  CHECK_THROWS_AS(map_coord({0, 0}, 3, 3, 2, 2), Error);
}

TEST_CASE("build_windows yields one window per query position") {
  auto ws = build_windows({4, 4}, {4, 4}, 3);
  REQUIRE(ws.size() == 16);
  CHECK(ws[0].size() == 4);    // corner
  CHECK(ws[5].size() == 9);    // interior (1,1)
  auto scaled = build_windows({4, 4}, {2, 2}, 1);
  REQUIRE(scaled.size() == 16);
  for (size_t i = 0; i < scaled.size(); ++i) {
    int64_t r = static_cast<int64_t>(i) / 4, c = static_cast<int64_t>(i) % 4;
    CHECK(scaled[i] == std::vector<int64_t>{(r / 2) * 2 + (c / 2)});
  }
}
