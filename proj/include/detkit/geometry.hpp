#pragma once

namespace detkit::geom {

// Axis-aligned box in center/size form. Sizes are non-negative by contract.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

struct Corners {
  double x1, y1, x2, y2;
};

// Width/height of the smallest axis-aligned box covering a pair of boxes.
struct EnclosureDims {
  double wg, hg;
};

bool valid(const Box& b);

Corners to_corners(const Box& b);

// Intersection area over union area, in [0, 1].
// Returns 0 when the union is degenerate (both boxes zero-area).
double iou(const Box& a, const Box& b);

EnclosureDims enclosing_dims(const Box& a, const Box& b);

// Squared euclidean distance between centers.
double center_dist_sq(const Box& a, const Box& b);

}  // namespace detkit::geom
