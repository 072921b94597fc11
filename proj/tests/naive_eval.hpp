#pragma once

// Self-contained reference evaluator for the detection metrics, kept apart
// from the library on purpose: corner-form boxes, quadratic scans, its own
// matching loop and envelope integration. Shares only the input structs.
//
// Reduction orders (ranks ascending, categories ascending, thresholds
// ascending) follow the evaluation contract so results are comparable
// bit-for-bit with any conforming implementation.

#include <map>
#include <vector>

#include "detkit/metrics.hpp"

namespace testoracle {

struct NaiveEval {
  std::map<int, double> ap_per_category;
  double map = 0.0;
};

NaiveEval naive_evaluate(const std::vector<detkit::metrics::Detection>& dets,
                         const std::vector<detkit::metrics::GroundTruth>& gts,
                         double iou_threshold);

// (map50, map5095) over thresholds 0.50 .. 0.95.
std::pair<double, double> naive_map_over_thresholds(
    const std::vector<detkit::metrics::Detection>& dets,
    const std::vector<detkit::metrics::GroundTruth>& gts);

}  // namespace testoracle
