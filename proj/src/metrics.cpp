#include "detkit/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace detkit::metrics {

MatchResult match_detections(std::span<const Detection> dets,
                             std::span<const GroundTruth> gts,
                             double iou_threshold) {
  MatchResult result;
  for (const auto& g : gts) result.per_category[g.category_id];

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });

  std::vector<bool> matched(gts.size(), false);
  std::map<int, long> matched_per_category;

  result.flags.reserve(dets.size());
  for (std::size_t di : order) {
    const Detection& det = dets[di];
    std::size_t best = gts.size();
    double best_iou = -1.0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (matched[gi]) continue;
      if (gts[gi].category_id != det.category_id ||
          gts[gi].image_id != det.image_id)
        continue;
      const double v = geom::iou(det.box, gts[gi].box);
      if (v > best_iou) {
        best_iou = v;
        best = gi;
      }
    }
    const bool tp = best < gts.size() && best_iou >= iou_threshold;
    if (tp) {
      matched[best] = true;
      ++matched_per_category[det.category_id];
      ++result.per_category[det.category_id].tp;
    } else {
      ++result.per_category[det.category_id].fp;
    }
    result.flags.push_back({di, tp});
  }

  for (auto& [cat, counts] : result.per_category) {
    long total_gt = 0;
    for (const auto& g : gts)
      if (g.category_id == cat) ++total_gt;
    counts.fn = total_gt - matched_per_category[cat];
  }
  return result;
}

std::pair<double, double> precision_recall(const MatchResult& m) {
  long tp = 0, fp = 0, fn = 0;
  for (const auto& [cat, c] : m.per_category) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  const double precision =
      (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall =
      (tp + fn) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return {precision, recall};
}

std::vector<PrPoint> pr_curve(std::span<const Detection> dets,
                              std::span<const GroundTruth> gts,
                              double iou_threshold) {
  const MatchResult m = match_detections(dets, gts, iou_threshold);
  std::vector<PrPoint> curve;
  curve.reserve(m.flags.size());
  long tp = 0, fp = 0;
  const double total_gt = static_cast<double>(gts.size());
  for (const auto& flag : m.flags) {
    flag.is_tp ? ++tp : ++fp;
    PrPoint p;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = total_gt == 0.0 ? 1.0 : static_cast<double>(tp) / total_gt;
    curve.push_back(p);
  }
  return curve;
}

double average_precision(std::span<const PrPoint> curve) {
  if (curve.empty()) return 0.0;
  // precision envelope from the right, then rectangle sum over recall steps
  std::vector<double> envelope(curve.size());
  double running = 0.0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    running = std::max(running, curve[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    ap += (curve[i].recall - prev_recall) * envelope[i];
    prev_recall = curve[i].recall;
  }
  return ap;
}

double mean_ap(const std::map<int, double>& per_category_ap) {
  if (per_category_ap.empty())
    throw std::invalid_argument("mean_ap: no categories with ground truth");
  double sum = 0.0;
  for (const auto& [cat, ap] : per_category_ap) sum += ap;
  return sum / static_cast<double>(per_category_ap.size());
}

EvalResult evaluate(std::span<const Detection> dets,
                    std::span<const GroundTruth> gts, double iou_threshold) {
  EvalResult result;
  std::vector<int> categories;
  for (const auto& g : gts) categories.push_back(g.category_id);
  std::sort(categories.begin(), categories.end());
  categories.erase(std::unique(categories.begin(), categories.end()),
                   categories.end());

  for (int cat : categories) {
    std::vector<Detection> cat_dets;
    std::vector<GroundTruth> cat_gts;
    for (const auto& d : dets)
      if (d.category_id == cat) cat_dets.push_back(d);
    for (const auto& g : gts)
      if (g.category_id == cat) cat_gts.push_back(g);
    const auto curve = pr_curve(cat_dets, cat_gts, iou_threshold);
    result.ap_per_category[cat] = average_precision(curve);
    const MatchResult m = match_detections(cat_dets, cat_gts, iou_threshold);
    result.counts_per_category[cat] = m.per_category.at(cat);
  }
  result.map = mean_ap(result.ap_per_category);
  return result;
}

std::pair<double, double> map_over_thresholds(std::span<const Detection> dets,
                                              std::span<const GroundTruth> gts) {
  double map50 = 0.0, sum = 0.0;
  const auto thresholds = standard_thresholds();
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double map = evaluate(dets, gts, thresholds[i]).map;
    if (i == 0) map50 = map;
    sum += map;
  }
  return {map50, sum / static_cast<double>(thresholds.size())};
}

std::vector<Detection> parse_detections(std::istream& in,
                                        const std::string& source_name) {
  std::vector<Detection> dets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    Detection d;
    std::string extra;
    if (!(fields >> d.image_id >> d.category_id >> d.confidence >> d.box.cx >>
          d.box.cy >> d.box.w >> d.box.h) ||
        (fields >> extra)) {
      throw std::runtime_error(source_name + ":" + std::to_string(line_no) +
                               ": expected 'image_id category confidence cx cy w h'");
    }
    if (d.category_id < 0)
      throw std::runtime_error(source_name + ":" + std::to_string(line_no) +
                               ": category_id must be >= 0");
    if (d.confidence < 0.0 || d.confidence > 1.0)
      throw std::runtime_error(source_name + ":" + std::to_string(line_no) +
                               ": confidence outside [0, 1]");
    for (double v : {d.box.cx, d.box.cy, d.box.w, d.box.h})
      if (v < 0.0 || v > 1.0)
        throw std::runtime_error(source_name + ":" + std::to_string(line_no) +
                                 ": box fields must be normalized to [0, 1]");
    dets.push_back(std::move(d));
  }
  return dets;
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open detections file: " + path.string());
  return parse_detections(in, path.filename().string());
}

}  // namespace detkit::metrics
