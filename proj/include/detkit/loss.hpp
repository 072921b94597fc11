#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "detkit/geometry.hpp"

namespace detkit::loss {

enum class LossKind { L1, Iou, Giou, Wiou1, Wiou2, Wiou3 };

// Exact keyword set shared by the CLI and the benchmark config:
// l1, iou, giou, wiou1, wiou2, wiou3.
LossKind kind_from_keyword(const std::string& keyword);
const char* keyword(LossKind kind);

// Hyperparameters of the focusing mechanisms.
//   alpha, delta: shape of the non-monotonic gain r = beta / (delta * alpha^(beta-delta));
//                 alpha > 1 so r has a single interior maximum at beta = 1/ln(alpha)
//   gamma:        exponent of the monotonic v2 coefficient
//   momentum:     running-mean update rate, in (0, 1]
struct WiouConfig {
  double alpha = 1.9;
  double delta = 3.0;
  double gamma = 0.5;
  double momentum = 0.01;

  void validate() const;  // throws std::invalid_argument on a bad field
};

// Momentum-tracked mean of detached 1-IoU values. Single logical writer per
// run; concurrent runs own independent states.
struct LossState {
  double running_mean = 1.0;
  std::uint64_t updates_seen = 0;
};

// running_mean <- (1-m)*old + m*mean(batch), clamped below at 1e-8.
// Returns false and leaves the state untouched when the batch is empty.
bool update_running_mean(LossState& state, std::span<const double> batch_liou,
                         double momentum);

// Loss value plus its analytic gradient with respect to the anchor's
// (cx, cy, w, h). Detached sub-expressions contribute value but no gradient.
struct LossResult {
  double value = 0.0;
  std::array<double, 4> grad{};
};

// 1 - IoU. The gradient is identically zero for strictly disjoint pairs.
LossResult liou(const geom::Box& anchor, const geom::Box& target);

// |cx-cx_gt| + |cy-cy_gt| + |w-w_gt| + |h-h_gt|; subgradient 0 at ties.
LossResult l1_yolov2(const geom::Box& anchor, const geom::Box& target);

// 2 - w_gt*h_gt for normalized target sizes; multiplier in [1, 2].
// Throws std::domain_error when w_gt or h_gt falls outside [0, 1].
double yolov3_scale_factor(const geom::Box& target);

// 1 - IoU + (enclosure - union)/enclosure. Nonzero gradient for disjoint
// pairs; falls back to liou when the enclosure area is degenerate.
LossResult giou_loss(const geom::Box& anchor, const geom::Box& target);

// exp(center_dist_sq / (Wg^2 + Hg^2)) with a detached denominator: the
// gradient treats Wg^2 + Hg^2 as a constant, so d/dw = d/dh = 0.
// Degenerate enclosing diagonal yields value 1, gradient 0.
LossResult r_wiou(const geom::Box& anchor, const geom::Box& target);

// r_wiou * liou, product rule with r_wiou's frozen denominator.
LossResult wiou_v1(const geom::Box& anchor, const geom::Box& target);

// beta: detached 1-IoU over the tracked running mean. Carries no gradient.
double outlier_degree(double liou_detached, const LossState& state);

// r = beta / (delta * alpha^(beta - delta)); equals 1 at beta == delta.
double focusing_r(double beta, const WiouConfig& cfg);

// (L*/mean)^gamma * wiou_v1 with the coefficient detached.
LossResult wiou_v2(const geom::Box& anchor, const geom::Box& target,
                   const LossState& state, const WiouConfig& cfg);

// focusing_r(outlier_degree) * wiou_v1 with r constant under differentiation.
LossResult wiou_v3(const geom::Box& anchor, const geom::Box& target,
                   const LossState& state, const WiouConfig& cfg);

// Keyword-driven dispatch used by the benchmark and the CLI.
LossResult evaluate(LossKind kind, const geom::Box& anchor,
                    const geom::Box& target, const LossState& state,
                    const WiouConfig& cfg);

}  // namespace detkit::loss
