#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "detkit/geometry.hpp"

namespace detkit::metrics {

struct Detection {
  std::string image_id;
  int category_id = 0;
  double confidence = 0.0;
  geom::Box box;
};

struct GroundTruth {
  std::string image_id;
  int category_id = 0;
  geom::Box box;
};

struct CategoryCounts {
  long tp = 0, fp = 0, fn = 0;
};

// Per-detection flags in descending-confidence order plus per-category counts.
struct MatchResult {
  struct Flag {
    std::size_t detection_index;  // index into the input span
    bool is_tp;
  };
  std::vector<Flag> flags;
  std::map<int, CategoryCounts> per_category;
};

// Greedy matching: detections in descending confidence (ties: input order);
// each takes the unmatched same-category same-image ground truth with the
// highest IoU (ties: lowest ground-truth index) when that IoU clears the
// threshold, else counts as FP. Unmatched ground truths are FN.
MatchResult match_detections(std::span<const Detection> dets,
                             std::span<const GroundTruth> gts,
                             double iou_threshold);

// Aggregate over categories. Empty denominators follow the convention
// precision = 1 when there are no detections, recall = 1 when there is no
// ground truth.
std::pair<double, double> precision_recall(const MatchResult& m);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

// One point per detection rank in confidence order; single-category inputs
// (the evaluation pipeline filters by category before calling).
std::vector<PrPoint> pr_curve(std::span<const Detection> dets,
                              std::span<const GroundTruth> gts,
                              double iou_threshold);

// Area under the precision envelope: precision at recall r is the maximum
// precision at any recall >= r; recall never reached contributes 0.
double average_precision(std::span<const PrPoint> curve);

// Arithmetic mean over categories with ground truth; throws when empty.
double mean_ap(const std::map<int, double>& per_category_ap);

struct EvalResult {
  std::map<int, double> ap_per_category;
  std::map<int, CategoryCounts> counts_per_category;
  double map = 0.0;
};

// Per-category AP at one IoU threshold plus their mean. Categories absent
// from the ground truth are excluded.
EvalResult evaluate(std::span<const Detection> dets,
                    std::span<const GroundTruth> gts, double iou_threshold);

// mAP at 0.5 and the mean of mAP over thresholds 0.50, 0.55, ..., 0.95.
std::pair<double, double> map_over_thresholds(std::span<const Detection> dets,
                                              std::span<const GroundTruth> gts);

inline std::vector<double> standard_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

// One record per line: image_id category_id confidence cx cy w h, normalized
// coordinates. Throws with the line number on malformed input.
std::vector<Detection> parse_detections(std::istream& in,
                                        const std::string& source_name);
std::vector<Detection> load_detections(const std::filesystem::path& path);

}  // namespace detkit::metrics
