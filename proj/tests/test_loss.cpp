#include <cmath>
#include <vector>

#include <doctest.h>

#include "detkit/gradcheck.hpp"
#include "detkit/loss.hpp"
#include "detkit/rng.hpp"

using detkit::geom::Box;
using namespace detkit::loss;

namespace {

bool grad_zero(const LossResult& r) {
  return r.grad[0] == 0.0 && r.grad[1] == 0.0 && r.grad[2] == 0.0 &&
         r.grad[3] == 0.0;
}

double grad_norm(const LossResult& r) {
  return std::sqrt(r.grad[0] * r.grad[0] + r.grad[1] * r.grad[1] +
                   r.grad[2] * r.grad[2] + r.grad[3] * r.grad[3]);
}

// Strictly disjoint pair with a comfortable gap along one axis.
std::pair<Box, Box> random_disjoint(detkit::Rng& rng) {
  Box target{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0.5, 4),
             rng.uniform(0.5, 4)};
  Box anchor{0, 0, rng.uniform(0.5, 4), rng.uniform(0.5, 4)};
  const double gap = rng.uniform(0.2, 4.0);
  if (rng.unit() < 0.5) {
    anchor.cx = target.cx + (target.w + anchor.w) / 2 + gap;
    anchor.cy = target.cy + rng.uniform(-1, 1);
  } else {
    anchor.cy = target.cy + (target.h + anchor.h) / 2 + gap;
    anchor.cx = target.cx + rng.uniform(-1, 1);
  }
  return {anchor, target};
}

}  // namespace

TEST_CASE("liou values") {
  const Box b{2, 3, 2, 1};
  CHECK(liou(b, b).value == 0.0);

  const double v = liou({1, 1, 2, 2}, {2, 2, 2, 2}).value;
  CHECK(std::abs(v - 6.0 / 7.0) < 1e-12);

  const LossResult disjoint = liou({0, 0, 2, 2}, {10, 0, 2, 2});
  CHECK(disjoint.value == 1.0);
  CHECK(grad_zero(disjoint));
}

TEST_CASE("l1 loss") {
  const Box b{1, 2, 3, 4};
  CHECK(l1_yolov2(b, b).value == 0.0);
  CHECK(l1_yolov2({0, 0, 1, 1}, {1, 1, 1, 1}).value == 2.0);

  const LossResult r = l1_yolov2({0, 0, 1, 1}, {1, 1, 2, 2});
  CHECK(r.grad[0] == -1.0);
  CHECK(r.grad[1] == -1.0);
  CHECK(r.grad[2] == -1.0);
  CHECK(r.grad[3] == -1.0);
}

TEST_CASE("yolov3 scale factor") {
  CHECK(yolov3_scale_factor({0.5, 0.5, 1, 1}) == 1.0);
  CHECK(yolov3_scale_factor({0.5, 0.5, 0, 0}) == 2.0);
  CHECK(std::abs(yolov3_scale_factor({0.5, 0.5, 0.5, 0.4}) - 1.8) < 1e-15);
  CHECK_THROWS_AS(yolov3_scale_factor({0.5, 0.5, 1.2, 0.4}), std::domain_error);
}

TEST_CASE("giou values and disjoint gradient") {
  const Box b{4, 4, 1, 2};
  CHECK(giou_loss(b, b).value == 0.0);

  const double v = giou_loss({1, 1, 2, 2}, {2, 2, 2, 2}).value;
  CHECK(std::abs(v - (6.0 / 7.0 + 2.0 / 9.0)) < 1e-12);

  const LossResult dj = giou_loss({0, 0, 2, 2}, {10, 0, 2, 2});
  CHECK(grad_norm(dj) > 0.0);
}

TEST_CASE("distance attention factor") {
  const LossResult same = r_wiou({3, 3, 2, 2}, {3, 3, 1, 1});
  CHECK(same.value == 1.0);
  CHECK(same.grad[0] == 0.0);

  // exp(2/18) and exp(100/148), high-precision reference values
  const double v1 = r_wiou({1, 1, 2, 2}, {2, 2, 2, 2}).value;
  CHECK(std::abs(v1 - 1.1175190687418636) < 1e-12);
  const double v2 = r_wiou({0, 0, 2, 2}, {10, 0, 2, 2}).value;
  CHECK(std::abs(v2 - 1.9653604737063956) < 1e-12);

  const LossResult degenerate = r_wiou({5, 5, 0, 0}, {5, 5, 0, 0});
  CHECK(degenerate.value == 1.0);
  CHECK(grad_zero(degenerate));
}

TEST_CASE("wiou v1 values and nonzero disjoint gradient") {
  const Box b{2, 2, 2, 2};
  CHECK(wiou_v1(b, b).value == 0.0);

  const double v = wiou_v1({1, 1, 2, 2}, {2, 2, 2, 2}).value;
  CHECK(std::abs(v - 0.95787348749302598) < 1e-12);

  const LossResult dj = wiou_v1({0, 0, 2, 2}, {10, 0, 2, 2});
  CHECK(std::abs(dj.value - 1.9653604737063956) < 1e-12);
  CHECK(std::abs(dj.grad[0] - (-0.26558925320356697)) < 1e-12);
}

TEST_CASE("outlier degree") {
  LossState state;
  state.running_mean = 0.4;
  CHECK(outlier_degree(0.4, state) == 1.0);
  CHECK(outlier_degree(0.0, state) == 0.0);
  CHECK(outlier_degree(0.8, state) == 2.0);
}

TEST_CASE("focusing gain r") {
  const WiouConfig cfg;  // alpha 1.9, delta 3
  CHECK(focusing_r(cfg.delta, cfg) == 1.0);
  CHECK(focusing_r(0.0, cfg) == 0.0);
  CHECK(std::abs(focusing_r(1.0, cfg) - 1.9 * 1.9 / 3.0) < 1e-12);
}

TEST_CASE("running mean updates") {
  LossState s;
  const double batch1[] = {0.3};
  CHECK(update_running_mean(s, batch1, 1.0));
  CHECK(s.running_mean == 0.3);
  CHECK(s.updates_seen == 1);

  LossState s2;
  const double batch2[] = {0.9, 0.1};
  CHECK(update_running_mean(s2, batch2, 0.0));
  CHECK(s2.running_mean == 1.0);

  LossState s3;
  const double batch3[] = {0.5};
  CHECK(update_running_mean(s3, batch3, 0.01));
  CHECK(std::abs(s3.running_mean - 0.995) < 1e-15);

  LossState s4;
  CHECK_FALSE(update_running_mean(s4, {}, 0.5));
  CHECK(s4.running_mean == 1.0);
  CHECK(s4.updates_seen == 0);
}

TEST_CASE("wiou v2 coefficient") {
  WiouConfig cfg;
  LossState state;

  // coefficient 1 when detached loss equals the mean
  const Box anchor{1, 1, 2, 2}, target{2, 2, 2, 2};
  state.running_mean = liou(anchor, target).value;
  const LossResult v2 = wiou_v2(anchor, target, state, cfg);
  const LossResult v1 = wiou_v1(anchor, target);
  CHECK(v2.value == v1.value);

  state.running_mean = 0.4;
  CHECK(std::abs(std::pow(0.8 / 0.4, cfg.gamma) - std::sqrt(2.0)) < 1e-12);

  const Box b{4, 4, 1, 1};
  CHECK(wiou_v2(b, b, state, cfg).value == 0.0);
}

TEST_CASE("wiou v3 values") {
  WiouConfig cfg;
  LossState state;
  const Box b{4, 4, 1, 1};
  CHECK(wiou_v3(b, b, state, cfg).value == 0.0);

  const Box anchor{1, 1, 2, 2}, target{2, 2, 2, 2};
  // beta == delta forces r == 1, so v3 equals v1 exactly
  state.running_mean = liou(anchor, target).value / cfg.delta;
  CHECK(wiou_v3(anchor, target, state, cfg).value ==
        wiou_v1(anchor, target).value);

  // beta == 1 at mean == 6/7
  state.running_mean = liou(anchor, target).value;
  const double v = wiou_v3(anchor, target, state, cfg).value;
  CHECK(std::abs(v - 1.1526410966166079) < 1e-12);
}

TEST_CASE("gradients match finite differences of the detach-frozen surrogate") {
  const auto report = detkit::gradcheck::check_losses(101, 500, 1e-5);
  for (const auto& op : report.ops) {
    INFO(op.op, " max_err_ratio ", op.max_err_ratio);
    CHECK(op.pass);
    CHECK(op.cases == 500);
  }
}

TEST_CASE("vanishing-gradient dichotomy on disjoint pairs") {
  detkit::Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto [anchor, target] = random_disjoint(rng);
    REQUIRE(detkit::geom::iou(anchor, target) == 0.0);
    CHECK(grad_zero(liou(anchor, target)));
    CHECK(grad_norm(wiou_v1(anchor, target)) > 0.0);
    CHECK(grad_norm(giou_loss(anchor, target)) > 0.0);
  }
}

TEST_CASE("every loss is exactly zero at the identity") {
  detkit::Rng rng(13);
  WiouConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const Box b{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0.1, 5),
                rng.uniform(0.1, 5)};
    LossState state;
    state.running_mean = rng.uniform(0.05, 1.0);
    for (LossKind kind : {LossKind::L1, LossKind::Iou, LossKind::Giou,
                          LossKind::Wiou1, LossKind::Wiou2, LossKind::Wiou3})
      CHECK(evaluate(kind, b, b, state, cfg).value == 0.0);
  }
}

TEST_CASE("distance attention is at least 1, equal only at shared centers") {
  detkit::Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Box a{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0.1, 5),
                rng.uniform(0.1, 5)};
    const Box t{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0.1, 5),
                rng.uniform(0.1, 5)};
    const double v = r_wiou(a, t).value;
    CHECK(v >= 1.0);
    if (a.cx != t.cx || a.cy != t.cy) CHECK(v > 1.0);
  }
  const Box shared_a{3, 3, 1, 1}, shared_t{3, 3, 4, 2};
  CHECK(r_wiou(shared_a, shared_t).value == 1.0);
}

TEST_CASE("v2 coefficient is strictly increasing in the detached loss") {
  WiouConfig cfg;
  const double mean = 0.37;
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double coefficient = std::pow((i / 100.0) / mean, cfg.gamma);
    CHECK(coefficient > prev);
    prev = coefficient;
  }
}

TEST_CASE("focusing gain peaks once at 1/ln(alpha)") {
  WiouConfig cfg;
  double best_beta = 0.0, best = -1.0;
  std::size_t best_idx = 0, idx = 0;
  std::vector<double> values;
  for (double beta = 0.0; beta <= 10.0 + 1e-12; beta += 1e-4, ++idx) {
    const double r = focusing_r(beta, cfg);
    values.push_back(r);
    if (r > best) {
      best = r;
      best_beta = beta;
      best_idx = idx;
    }
  }
  CHECK(std::abs(best_beta - 1.0 / std::log(1.9)) < 1e-3);
  // increasing up to the peak, decreasing after
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (i <= best_idx)
      CHECK(values[i] > values[i - 1]);
    else
      CHECK(values[i] < values[i - 1]);
  }
}

TEST_CASE("running mean stays within [1e-8, 1] for batches in [0, 1]") {
  detkit::Rng rng(19);
  LossState state;
  for (int step = 0; step < 2000; ++step) {
    const double batch[] = {rng.unit(), rng.unit(), rng.unit()};
    update_running_mean(state, batch, rng.uniform(0.001, 1.0));
    CHECK(state.running_mean >= 1e-8);
    CHECK(state.running_mean <= 1.0);
  }
}

TEST_CASE("wiou v1 and liou share the argmin over same-center anchors") {
  // anchors centred inside the target, small enough that the enclosure (and
  // with it the distance attention) is the same for every candidate
  const Box target{5, 5, 4, 4};
  const Box center{5.5, 5.5, 0, 0};
  double best_liou = 1e9, best_v1 = 1e9;
  std::size_t argmin_liou = 0, argmin_v1 = 0, idx = 0;
  for (double w = 0.5; w <= 2.0; w += 0.25)
    for (double h = 0.5; h <= 2.0; h += 0.25, ++idx) {
      const Box anchor{center.cx, center.cy, w, h};
      const double lv = liou(anchor, target).value;
      const double wv = wiou_v1(anchor, target).value;
      if (lv < best_liou) {
        best_liou = lv;
        argmin_liou = idx;
      }
      if (wv < best_v1) {
        best_v1 = wv;
        argmin_v1 = idx;
      }
    }
  CHECK(argmin_liou == argmin_v1);
}

TEST_CASE("loss keywords round-trip") {
  for (const char* kw : {"l1", "iou", "giou", "wiou1", "wiou2", "wiou3"})
    CHECK(keyword(kind_from_keyword(kw)) == std::string(kw));
  CHECK_THROWS_AS(kind_from_keyword("diou"), std::invalid_argument);
}

TEST_CASE("wiou config validation") {
  WiouConfig ok;
  CHECK_NOTHROW(ok.validate());
  WiouConfig bad_alpha;
  bad_alpha.alpha = 1.0;
  CHECK_THROWS_AS(bad_alpha.validate(), std::invalid_argument);
  WiouConfig bad_m;
  bad_m.momentum = 0.0;
  CHECK_THROWS_AS(bad_m.validate(), std::invalid_argument);
}
