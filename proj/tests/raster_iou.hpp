#pragma once

// Rasterization IoU oracle for tests: counts grid-cell centers falling inside
// each box, axis by axis (the boxes are axis-aligned so membership is
// separable). Never touches the min/max interval arithmetic under test.

#include "detkit/geometry.hpp"

namespace testoracle {

inline double raster_iou(const detkit::geom::Box& a, const detkit::geom::Box& b,
                         double cell) {
  const auto ca = detkit::geom::to_corners(a);
  const auto cb = detkit::geom::to_corners(b);

  auto axis_counts = [cell](double a1, double a2, double b1, double b2,
                            long& only_a, long& only_b, long& both) {
    only_a = only_b = both = 0;
    double lo = a1 < b1 ? a1 : b1;
    double hi = a2 > b2 ? a2 : b2;
    for (double x = lo + cell / 2.0; x < hi; x += cell) {
      const bool in_a = x >= a1 && x < a2;
      const bool in_b = x >= b1 && x < b2;
      if (in_a) ++only_a;
      if (in_b) ++only_b;
      if (in_a && in_b) ++both;
    }
  };

  long ax, bx, ix, ay, by, iy;
  axis_counts(ca.x1, ca.x2, cb.x1, cb.x2, ax, bx, ix);
  axis_counts(ca.y1, ca.y2, cb.y1, cb.y2, ay, by, iy);

  const double area = cell * cell;
  const double inter = static_cast<double>(ix) * iy * area;
  const double uni = static_cast<double>(ax) * ay * area +
                     static_cast<double>(bx) * by * area - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

}  // namespace testoracle
