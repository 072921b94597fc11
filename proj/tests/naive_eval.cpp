#include "naive_eval.hpp"

#include <algorithm>
#include <set>

namespace testoracle {

namespace {

using detkit::metrics::Detection;
using detkit::metrics::GroundTruth;

struct CornerBox {
  double x1, y1, x2, y2, area;
};

CornerBox corners_of(const detkit::geom::Box& b) {
  CornerBox c;
  c.x1 = b.cx - b.w / 2.0;
  c.y1 = b.cy - b.h / 2.0;
  c.x2 = b.cx + b.w / 2.0;
  c.y2 = b.cy + b.h / 2.0;
  c.area = b.w * b.h;
  return c;
}

double overlap_ratio(const CornerBox& a, const CornerBox& b) {
  double iw = (a.x2 < b.x2 ? a.x2 : b.x2) - (a.x1 > b.x1 ? a.x1 : b.x1);
  double ih = (a.y2 < b.y2 ? a.y2 : b.y2) - (a.y1 > b.y1 ? a.y1 : b.y1);
  if (iw < 0.0) iw = 0.0;
  if (ih < 0.0) ih = 0.0;
  const double inter = iw * ih;
  const double uni = a.area + b.area - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

// AP for one category from the raw TP sequence, all-point envelope.
double category_ap(const std::vector<bool>& tp_sequence, std::size_t gt_count) {
  if (tp_sequence.empty()) return 0.0;
  std::vector<double> precision(tp_sequence.size());
  std::vector<double> recall(tp_sequence.size());
  long tp = 0;
  for (std::size_t rank = 0; rank < tp_sequence.size(); ++rank) {
    if (tp_sequence[rank]) ++tp;
    precision[rank] = double(tp) / double(rank + 1);
    recall[rank] = gt_count == 0 ? 1.0 : double(tp) / double(gt_count);
  }
  for (std::size_t i = precision.size() - 1; i > 0; --i)
    if (precision[i] > precision[i - 1]) precision[i - 1] = precision[i];
  double area = 0.0;
  for (std::size_t rank = 0; rank < tp_sequence.size(); ++rank) {
    const double r_prev = rank == 0 ? 0.0 : recall[rank - 1];
    area += (recall[rank] - r_prev) * precision[rank];
  }
  return area;
}

}  // namespace

NaiveEval naive_evaluate(const std::vector<Detection>& dets,
                         const std::vector<GroundTruth>& gts,
                         double iou_threshold) {
  std::set<int> categories;
  for (const auto& g : gts) categories.insert(g.category_id);

  NaiveEval out;
  double ap_sum = 0.0;
  for (int cat : categories) {
    // detections of this category, most confident first, stable on ties
    std::vector<std::size_t> ranked;
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (dets[i].category_id == cat) ranked.push_back(i);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&](std::size_t a, std::size_t b) {
                       return dets[a].confidence > dets[b].confidence;
                     });

    std::vector<bool> taken(gts.size(), false);
    std::vector<bool> tp_sequence;
    std::size_t gt_count = 0;
    for (const auto& g : gts)
      if (g.category_id == cat) ++gt_count;

    for (std::size_t di : ranked) {
      const CornerBox det_box = corners_of(dets[di].box);
      double best = -1.0;
      std::size_t best_gi = gts.size();
      for (std::size_t gi = 0; gi < gts.size(); ++gi) {
        if (taken[gi] || gts[gi].category_id != cat ||
            gts[gi].image_id != dets[di].image_id)
          continue;
        const double v = overlap_ratio(det_box, corners_of(gts[gi].box));
        if (v > best) {
          best = v;
          best_gi = gi;
        }
      }
      if (best_gi < gts.size() && best >= iou_threshold) {
        taken[best_gi] = true;
        tp_sequence.push_back(true);
      } else {
        tp_sequence.push_back(false);
      }
    }

    const double ap = category_ap(tp_sequence, gt_count);
    out.ap_per_category[cat] = ap;
    ap_sum += ap;
  }
  out.map = categories.empty() ? 0.0 : ap_sum / double(categories.size());
  return out;
}

std::pair<double, double> naive_map_over_thresholds(
    const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts) {
  double first = 0.0, total = 0.0;
  for (int step = 0; step < 10; ++step) {
    const double threshold = (50 + 5 * step) / 100.0;
    const double map = naive_evaluate(dets, gts, threshold).map;
    if (step == 0) first = map;
    total += map;
  }
  return {first, total / 10.0};
}

}  // namespace testoracle
