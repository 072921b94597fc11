#include "detkit/geometry.hpp"

#include <algorithm>

namespace detkit::geom {

bool valid(const Box& b) { return b.w >= 0.0 && b.h >= 0.0; }

Corners to_corners(const Box& b) {
  return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0,
          b.cy + b.h / 2.0};
}

double iou(const Box& a, const Box& b) {
  const Corners ca = to_corners(a), cb = to_corners(b);
  const double iw =
      std::max(0.0, std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1));
  const double ih =
      std::max(0.0, std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

EnclosureDims enclosing_dims(const Box& a, const Box& b) {
  const Corners ca = to_corners(a), cb = to_corners(b);
  return {std::max(ca.x2, cb.x2) - std::min(ca.x1, cb.x1),
          std::max(ca.y2, cb.y2) - std::min(ca.y1, cb.y1)};
}

double center_dist_sq(const Box& a, const Box& b) {
  const double dx = a.cx - b.cx, dy = a.cy - b.cy;
  return dx * dx + dy * dy;
}

}  // namespace detkit::geom
