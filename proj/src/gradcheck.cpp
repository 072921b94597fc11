#include "detkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "detkit/bra.hpp"
#include "detkit/rng.hpp"

namespace detkit::gradcheck {

using geom::Box;
using loss::LossKind;

namespace {

Box box_from(const Tensor& x) { return {x.data[0], x.data[1], x.data[2], x.data[3]}; }

Tensor tensor_from(const Box& b) {
  Tensor t({4}, 0.0);
  t.data = {b.cx, b.cy, b.w, b.h};
  return t;
}

// |a - b| measured against the pass bound; <= 1 passes.
double err_ratio(double analytic, double fd) {
  const double scale = std::max(std::abs(analytic), std::abs(fd));
  return std::abs(analytic - fd) / std::max(1e-7, 1e-4 * scale);
}

// True when any max/min pair or overlap width sits within `margin` of a tie;
// finite differences straddle the kink there.
bool near_boundary(const Box& a, const Box& b, double margin) {
  const geom::Corners ca = geom::to_corners(a), cb = geom::to_corners(b);
  const double diffs[] = {ca.x1 - cb.x1, ca.x2 - cb.x2, ca.y1 - cb.y1,
                          ca.y2 - cb.y2,
                          std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1),
                          std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1),
                          a.cx - b.cx, a.cy - b.cy, a.w - b.w, a.h - b.h};
  for (double d : diffs)
    if (std::abs(d) < margin) return true;
  return false;
}

}  // namespace

std::function<double(const Tensor&)> loss_surrogate(LossKind kind,
                                                    const Box& base_anchor,
                                                    const Box& target,
                                                    const loss::LossState& state,
                                                    const loss::WiouConfig& cfg) {
  // frozen at the base point
  const geom::EnclosureDims e = geom::enclosing_dims(base_anchor, target);
  const double denom = e.wg * e.wg + e.hg * e.hg;
  const double base_liou = loss::liou(base_anchor, target).value;

  auto rwiou_frozen = [denom, target](const Box& a) {
    if (denom <= 0.0) return 1.0;
    return std::exp(geom::center_dist_sq(a, target) / denom);
  };

  switch (kind) {
    case LossKind::L1:
      return [target](const Tensor& x) {
        return loss::l1_yolov2(box_from(x), target).value;
      };
    case LossKind::Iou:
      return [target](const Tensor& x) {
        return loss::liou(box_from(x), target).value;
      };
    case LossKind::Giou:
      return [target](const Tensor& x) {
        return loss::giou_loss(box_from(x), target).value;
      };
    case LossKind::Wiou1:
      return [rwiou_frozen, target](const Tensor& x) {
        const Box a = box_from(x);
        return rwiou_frozen(a) * loss::liou(a, target).value;
      };
    case LossKind::Wiou2: {
      const double coef = std::pow(base_liou / state.running_mean, cfg.gamma);
      return [rwiou_frozen, target, coef](const Tensor& x) {
        const Box a = box_from(x);
        return coef * rwiou_frozen(a) * loss::liou(a, target).value;
      };
    }
    case LossKind::Wiou3: {
      const double r =
          loss::focusing_r(loss::outlier_degree(base_liou, state), cfg);
      return [rwiou_frozen, target, r](const Tensor& x) {
        const Box a = box_from(x);
        return r * rwiou_frozen(a) * loss::liou(a, target).value;
      };
    }
  }
  throw std::invalid_argument("bad loss kind");
}

bool Report::all_pass() const {
  return std::all_of(ops.begin(), ops.end(),
                     [](const OpReport& o) { return o.pass; });
}

Report check_losses(std::uint64_t seed, std::size_t cases_per_op, double eps) {
  const LossKind kinds[] = {LossKind::L1,    LossKind::Iou,   LossKind::Giou,
                            LossKind::Wiou1, LossKind::Wiou2, LossKind::Wiou3};
  // the r_wiou factor is exercised on its own as well, not only inside wiou1
  Report report;
  loss::WiouConfig cfg;

  for (LossKind kind : kinds) {
    Rng rng(seed);
    OpReport op{loss::keyword(kind), 0, 0.0, 0.0, true};
    while (op.cases < cases_per_op) {
      Box anchor{rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0),
                 rng.uniform(0.1, 5.0), rng.uniform(0.1, 5.0)};
      Box target{rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0),
                 rng.uniform(0.1, 5.0), rng.uniform(0.1, 5.0)};
      if (near_boundary(anchor, target, 2.0 * eps)) continue;
      ++op.cases;

      loss::LossState state;
      state.running_mean = rng.uniform(0.05, 1.0);

      const loss::LossResult res =
          loss::evaluate(kind, anchor, target, state, cfg);
      const Tensor fd = finite_diff_grad(
          loss_surrogate(kind, anchor, target, state, cfg), tensor_from(anchor),
          eps);
      for (int i = 0; i < 4; ++i) {
        op.max_err_ratio = std::max(op.max_err_ratio,
                                    err_ratio(res.grad[i], fd.data[i]));
        op.max_abs_diff =
            std::max(op.max_abs_diff, std::abs(res.grad[i] - fd.data[i]));
      }
    }
    op.pass = op.max_err_ratio <= 1.0;
    report.ops.push_back(op);
  }

  // r_wiou on its own: value gradient with the frozen diagonal
  {
    Rng rng(seed + 1);
    OpReport op{"r_wiou", 0, 0.0, 0.0, true};
    while (op.cases < cases_per_op) {
      Box anchor{rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0),
                 rng.uniform(0.1, 5.0), rng.uniform(0.1, 5.0)};
      Box target{rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0),
                 rng.uniform(0.1, 5.0), rng.uniform(0.1, 5.0)};
      if (near_boundary(anchor, target, 2.0 * eps)) continue;
      ++op.cases;
      const geom::EnclosureDims e = geom::enclosing_dims(anchor, target);
      const double denom = e.wg * e.wg + e.hg * e.hg;
      const loss::LossResult res = loss::r_wiou(anchor, target);
      const Tensor fd = finite_diff_grad(
          [denom, target](const Tensor& x) {
            return std::exp(geom::center_dist_sq(box_from(x), target) / denom);
          },
          tensor_from(anchor), eps);
      for (int i = 0; i < 4; ++i) {
        op.max_err_ratio =
            std::max(op.max_err_ratio, err_ratio(res.grad[i], fd.data[i]));
        op.max_abs_diff =
            std::max(op.max_abs_diff, std::abs(res.grad[i] - fd.data[i]));
      }
    }
    op.pass = op.max_err_ratio <= 1.0;
    report.ops.push_back(op);
  }
  return report;
}

Report check_bra(std::uint64_t seed, std::size_t cases, double eps) {
  Report report;
  OpReport op{"bra_backward", 0, 0.0, 0.0, true};
  Rng rng(seed);

  struct Shape {
    std::size_t h, w, c, s, k, heads;
  };
  const Shape shapes[] = {
      {4, 4, 2, 2, 1, 1}, {4, 4, 2, 2, 2, 2}, {4, 4, 2, 2, 4, 1},
      {2, 2, 2, 1, 1, 2}, {6, 6, 2, 3, 4, 1}, {4, 4, 4, 2, 3, 2},
  };

  for (std::size_t case_i = 0; case_i < cases; ++case_i) {
    const Shape& sh = shapes[case_i % std::size(shapes)];
    bra::BraConfig cfg{sh.s, sh.k, sh.c, sh.heads, 0.0};
    bra::FeatureMap fm = bra::FeatureMap::zeros(sh.h, sh.w, sh.c);
    for (double& v : fm.values.data) v = rng.uniform(-1.0, 1.0);
    bra::BraParams params = bra::BraParams::random(sh.c, rng.raw());

    // upstream: all-ones half the time, random otherwise
    Tensor upstream(fm.values.shape, 1.0);
    if (case_i % 2 == 1)
      for (double& v : upstream.data) v = rng.uniform(-1.0, 1.0);

    const bra::RoutingIndex routing = bra::bra_forward(fm, params, cfg).routing;
    const bra::BraGrads grads = bra::bra_backward(fm, params, cfg, upstream);

    auto weighted_sum = [&](const bra::FeatureMap& out) {
      double acc = 0.0;
      for (std::size_t i = 0; i < out.values.size(); ++i)
        acc += upstream.data[i] * out.values.data[i];
      return acc;
    };

    // d/d(feature map) with the routing replayed
    const Tensor fd_fm = finite_diff_grad(
        [&](const Tensor& x) {
          bra::FeatureMap probe{fm.height, fm.width, fm.channels, x};
          return weighted_sum(
              bra::bra_forward_with_routing(probe, params, cfg, routing));
        },
        fm.values, eps);
    for (std::size_t i = 0; i < fd_fm.size(); ++i) {
      op.max_err_ratio = std::max(
          op.max_err_ratio, err_ratio(grads.grad_fm.data[i], fd_fm.data[i]));
      op.max_abs_diff = std::max(
          op.max_abs_diff, std::abs(grads.grad_fm.data[i] - fd_fm.data[i]));
    }

    // d/d(projections)
    const Tensor* weights[] = {&params.wq, &params.wk, &params.wv, &params.wo};
    const Tensor* analytic[] = {&grads.grad_params.wq, &grads.grad_params.wk,
                                &grads.grad_params.wv, &grads.grad_params.wo};
    for (int wi = 0; wi < 4; ++wi) {
      const Tensor fd_w = finite_diff_grad(
          [&](const Tensor& x) {
            bra::BraParams probe{params.wq, params.wk, params.wv, params.wo};
            if (wi == 0) probe.wq = x;
            if (wi == 1) probe.wk = x;
            if (wi == 2) probe.wv = x;
            if (wi == 3) probe.wo = x;
            return weighted_sum(
                bra::bra_forward_with_routing(fm, probe, cfg, routing));
          },
          *weights[wi], eps);
      for (std::size_t i = 0; i < fd_w.size(); ++i) {
        op.max_err_ratio = std::max(
            op.max_err_ratio, err_ratio(analytic[wi]->data[i], fd_w.data[i]));
        op.max_abs_diff = std::max(
            op.max_abs_diff, std::abs(analytic[wi]->data[i] - fd_w.data[i]));
      }
    }
    ++op.cases;
  }

  op.pass = op.max_err_ratio <= 1.0;
  report.ops.push_back(op);
  return report;
}

Report run_all(std::uint64_t seed, std::size_t cases_per_op, double eps) {
  Report report = check_losses(seed, cases_per_op, eps);
  Report bra_report = check_bra(seed + 17, cases_per_op, eps);
  report.ops.insert(report.ops.end(), bra_report.ops.begin(),
                    bra_report.ops.end());
  return report;
}

std::string report_text(const Report& report) {
  std::ostringstream out;
  for (const auto& op : report.ops) {
    out << (op.pass ? "PASS" : "FAIL") << ' ' << op.op << " cases " << op.cases
        << " max_err_ratio " << op.max_err_ratio << " max_abs_diff "
        << op.max_abs_diff << '\n';
  }
  out << (report.all_pass() ? "gradcheck: all ops within tolerance\n"
                            : "gradcheck: FAILURES present\n");
  return out.str();
}

}  // namespace detkit::gradcheck
