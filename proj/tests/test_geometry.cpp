#include <cmath>

#include <doctest.h>

#include "detkit/geometry.hpp"
#include "detkit/rng.hpp"
#include "raster_iou.hpp"

using detkit::geom::Box;

TEST_CASE("corner conversion") {
  const auto c = detkit::geom::to_corners({1, 1, 2, 2});
  CHECK(c.x1 == 0.0);
  CHECK(c.y1 == 0.0);
  CHECK(c.x2 == 2.0);
  CHECK(c.y2 == 2.0);

  const auto zero = detkit::geom::to_corners({0, 0, 0, 0});
  CHECK(zero.x1 == 0.0);
  CHECK(zero.x2 == 0.0);

  const auto shifted = detkit::geom::to_corners({2, 2, 2, 2});
  CHECK(shifted.x1 == 1.0);
  CHECK(shifted.y1 == 1.0);
  CHECK(shifted.x2 == 3.0);
  CHECK(shifted.y2 == 3.0);
}

TEST_CASE("iou identity, disjoint, degenerate") {
  const Box b{3, 4, 2, 1.5};
  CHECK(detkit::geom::iou(b, b) == 1.0);
  CHECK(detkit::geom::iou({0, 0, 2, 2}, {10, 0, 2, 2}) == 0.0);
  CHECK(detkit::geom::iou({1, 1, 0, 0}, {1, 1, 0, 0}) == 0.0);
}

TEST_CASE("iou overlap case equals 1/7 and the raster oracle") {
  const Box a{1, 1, 2, 2}, b{2, 2, 2, 2};
  const double v = detkit::geom::iou(a, b);
  CHECK(std::abs(v - 1.0 / 7.0) < 1e-12);
  CHECK(std::abs(v - testoracle::raster_iou(a, b, 1e-3)) < 2e-3);
}

TEST_CASE("enclosing dims") {
  const Box b{3, 4, 2, 1.5};
  const auto same = detkit::geom::enclosing_dims(b, b);
  CHECK(same.wg == b.w);
  CHECK(same.hg == b.h);

  const auto diag = detkit::geom::enclosing_dims({1, 1, 2, 2}, {2, 2, 2, 2});
  CHECK(diag.wg == 3.0);
  CHECK(diag.hg == 3.0);

  const auto wide = detkit::geom::enclosing_dims({0, 0, 2, 2}, {10, 0, 2, 2});
  CHECK(wide.wg == 12.0);
  CHECK(wide.hg == 2.0);
}

TEST_CASE("center distances") {
  CHECK(detkit::geom::center_dist_sq({1, 2, 3, 4}, {1, 2, 9, 9}) == 0.0);
  CHECK(detkit::geom::center_dist_sq({0, 0, 1, 1}, {3, 4, 1, 1}) == 25.0);
  CHECK(detkit::geom::center_dist_sq({1, 1, 1, 1}, {2, 2, 1, 1}) == 2.0);
}

TEST_CASE("iou symmetry, range, scale and translation invariance") {
  detkit::Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const Box a{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0.1, 5),
                rng.uniform(0.1, 5)};
    const Box b{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0.1, 5),
                rng.uniform(0.1, 5)};
    const double v = detkit::geom::iou(a, b);
    CHECK(v == detkit::geom::iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);

    const double s = rng.uniform(0.1, 7.0);
    const Box as{a.cx * s, a.cy * s, a.w * s, a.h * s};
    const Box bs{b.cx * s, b.cy * s, b.w * s, b.h * s};
    CHECK(std::abs(detkit::geom::iou(as, bs) - v) <= 1e-12);

    const double tx = rng.uniform(-20, 20), ty = rng.uniform(-20, 20);
    const Box at{a.cx + tx, a.cy + ty, a.w, a.h};
    const Box bt{b.cx + tx, b.cy + ty, b.w, b.h};
    CHECK(std::abs(detkit::geom::iou(at, bt) - v) <= 1e-12);
    const auto e0 = detkit::geom::enclosing_dims(a, b);
    const auto e1 = detkit::geom::enclosing_dims(at, bt);
    CHECK(std::abs(e0.wg - e1.wg) <= 1e-12);
    CHECK(std::abs(e0.hg - e1.hg) <= 1e-12);
    CHECK(std::abs(detkit::geom::center_dist_sq(at, bt) -
                   detkit::geom::center_dist_sq(a, b)) <= 1e-12);
  }
}

TEST_CASE("iou matches the raster oracle on 1000 random pairs") {
  detkit::Rng rng(47);
  for (int trial = 0; trial < 1000; ++trial) {
    const Box a{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0.5, 5),
                rng.uniform(0.5, 5)};
    const Box b{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0.5, 5),
                rng.uniform(0.5, 5)};
    const double fast = detkit::geom::iou(a, b);
    const double slow = testoracle::raster_iou(a, b, 2e-4);
    CHECK(std::abs(fast - slow) < 2e-3);
  }
}
