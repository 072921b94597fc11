#include "detkit/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace detkit::loss {

using geom::Box;
using geom::Corners;
using geom::to_corners;

namespace {

using Grad4 = std::array<double, 4>;

Grad4 operator*(double s, const Grad4& g) {
  return {s * g[0], s * g[1], s * g[2], s * g[3]};
}

Grad4 operator+(const Grad4& a, const Grad4& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]};
}

// IoU with its derivative wrt the anchor's (cx, cy, w, h). Branch indicators
// pick the active side of each max/min; at exact ties the target side wins,
// which is the one-sided derivative (the loss surface is piecewise smooth).
struct IouGrad {
  double iou = 0.0;
  Grad4 d{};
  double inter = 0.0;
  double uni = 0.0;
  Grad4 d_uni{};
};

IouGrad iou_with_grad(const Box& a, const Box& b) {
  const Corners ca = to_corners(a), cb = to_corners(b);

  // intersection extents; d/d(cx) and d/d(w) of each active bound
  const double xlo = std::max(ca.x1, cb.x1);
  const double xhi = std::min(ca.x2, cb.x2);
  const double ylo = std::max(ca.y1, cb.y1);
  const double yhi = std::min(ca.y2, cb.y2);

  const bool a_xlo = ca.x1 > cb.x1, a_xhi = ca.x2 < cb.x2;
  const bool a_ylo = ca.y1 > cb.y1, a_yhi = ca.y2 < cb.y2;

  double iw = xhi - xlo, ih = yhi - ylo;
  double diw_dcx = 0, diw_dw = 0, dih_dcy = 0, dih_dh = 0;
  if (iw > 0.0) {
    diw_dcx = (a_xhi ? 1.0 : 0.0) - (a_xlo ? 1.0 : 0.0);
    diw_dw = (a_xhi ? 0.5 : 0.0) + (a_xlo ? 0.5 : 0.0);
  } else {
    iw = 0.0;
  }
  if (ih > 0.0) {
    dih_dcy = (a_yhi ? 1.0 : 0.0) - (a_ylo ? 1.0 : 0.0);
    dih_dh = (a_yhi ? 0.5 : 0.0) + (a_ylo ? 0.5 : 0.0);
  } else {
    ih = 0.0;
  }

  IouGrad r;
  r.inter = iw * ih;
  const Grad4 d_inter = {ih * diw_dcx, iw * dih_dcy, ih * diw_dw, iw * dih_dh};

  r.uni = a.w * a.h + b.w * b.h - r.inter;
  const Grad4 d_area = {0.0, 0.0, a.h, a.w};
  r.d_uni = d_area + (-1.0 * d_inter);

  if (r.uni <= 0.0) {
    r.iou = 0.0;
    return r;
  }
  r.iou = r.inter / r.uni;
  const double inv_u2 = 1.0 / (r.uni * r.uni);
  for (int i = 0; i < 4; ++i)
    r.d[i] = (d_inter[i] * r.uni - r.inter * r.d_uni[i]) * inv_u2;
  return r;
}

// Enclosure dims with derivatives wrt the anchor.
struct EncloseGrad {
  double wg, hg;
  Grad4 d_wg{}, d_hg{};
};

EncloseGrad enclose_with_grad(const Box& a, const Box& b) {
  const Corners ca = to_corners(a), cb = to_corners(b);
  EncloseGrad e{};
  e.wg = std::max(ca.x2, cb.x2) - std::min(ca.x1, cb.x1);
  e.hg = std::max(ca.y2, cb.y2) - std::min(ca.y1, cb.y1);
  const bool a_right = ca.x2 > cb.x2, a_left = ca.x1 < cb.x1;
  const bool a_top = ca.y2 > cb.y2, a_bot = ca.y1 < cb.y1;
  e.d_wg = {(a_right ? 1.0 : 0.0) - (a_left ? 1.0 : 0.0), 0.0,
            (a_right ? 0.5 : 0.0) + (a_left ? 0.5 : 0.0), 0.0};
  e.d_hg = {0.0, (a_top ? 1.0 : 0.0) - (a_bot ? 1.0 : 0.0), 0.0,
            (a_top ? 0.5 : 0.0) + (a_bot ? 0.5 : 0.0)};
  return e;
}

}  // namespace

LossKind kind_from_keyword(const std::string& keyword) {
  if (keyword == "l1") return LossKind::L1;
  if (keyword == "iou") return LossKind::Iou;
  if (keyword == "giou") return LossKind::Giou;
  if (keyword == "wiou1") return LossKind::Wiou1;
  if (keyword == "wiou2") return LossKind::Wiou2;
  if (keyword == "wiou3") return LossKind::Wiou3;
  throw std::invalid_argument("unknown loss keyword: " + keyword);
}

const char* keyword(LossKind kind) {
  switch (kind) {
    case LossKind::L1: return "l1";
    case LossKind::Iou: return "iou";
    case LossKind::Giou: return "giou";
    case LossKind::Wiou1: return "wiou1";
    case LossKind::Wiou2: return "wiou2";
    case LossKind::Wiou3: return "wiou3";
  }
  throw std::invalid_argument("bad loss kind");
}

void WiouConfig::validate() const {
  if (!(alpha > 1.0)) throw std::invalid_argument("wiou alpha must be > 1");
  if (!(delta > 0.0)) throw std::invalid_argument("wiou delta must be > 0");
  if (!(gamma > 0.0)) throw std::invalid_argument("wiou gamma must be > 0");
  if (!(momentum > 0.0) || momentum > 1.0)
    throw std::invalid_argument("wiou momentum must be in (0, 1]");
}

bool update_running_mean(LossState& state, std::span<const double> batch_liou,
                         double momentum) {
  if (batch_liou.empty()) return false;
  double sum = 0.0;
  for (double v : batch_liou) sum += v;
  const double batch_mean = sum / static_cast<double>(batch_liou.size());
  state.running_mean =
      std::max(1e-8, (1.0 - momentum) * state.running_mean + momentum * batch_mean);
  ++state.updates_seen;
  return true;
}

LossResult liou(const Box& anchor, const Box& target) {
  const IouGrad g = iou_with_grad(anchor, target);
  return {1.0 - g.iou, -1.0 * g.d};
}

LossResult l1_yolov2(const Box& anchor, const Box& target) {
  const double d[4] = {anchor.cx - target.cx, anchor.cy - target.cy,
                       anchor.w - target.w, anchor.h - target.h};
  LossResult r;
  for (int i = 0; i < 4; ++i) {
    r.value += std::abs(d[i]);
    r.grad[i] = d[i] > 0.0 ? 1.0 : (d[i] < 0.0 ? -1.0 : 0.0);
  }
  return r;
}

double yolov3_scale_factor(const Box& target) {
  if (target.w < 0.0 || target.w > 1.0 || target.h < 0.0 || target.h > 1.0)
    throw std::domain_error(
        "yolov3_scale_factor: target sizes must be normalized to [0, 1]");
  return 2.0 - target.w * target.h;
}

LossResult giou_loss(const Box& anchor, const Box& target) {
  const IouGrad g = iou_with_grad(anchor, target);
  const EncloseGrad e = enclose_with_grad(anchor, target);
  const double c = e.wg * e.hg;
  if (c <= 0.0) return {1.0 - g.iou, -1.0 * g.d};

  // loss = 1 - iou + (c - union)/c = 1 - iou + 1 - union/c
  const Grad4 d_c = e.hg * e.d_wg + e.wg * e.d_hg;
  LossResult r;
  r.value = 1.0 - g.iou + (c - g.uni) / c;
  const double inv_c2 = 1.0 / (c * c);
  for (int i = 0; i < 4; ++i)
    r.grad[i] = -g.d[i] - (g.d_uni[i] * c - g.uni * d_c[i]) * inv_c2;
  return r;
}

LossResult r_wiou(const Box& anchor, const Box& target) {
  const geom::EnclosureDims e = geom::enclosing_dims(anchor, target);
  const double denom = e.wg * e.wg + e.hg * e.hg;
  if (denom <= 0.0) return {1.0, {0, 0, 0, 0}};
  const double value = std::exp(geom::center_dist_sq(anchor, target) / denom);
  // denom is detached: no size gradient, only the center pull
  LossResult r;
  r.value = value;
  r.grad[0] = value * 2.0 * (anchor.cx - target.cx) / denom;
  r.grad[1] = value * 2.0 * (anchor.cy - target.cy) / denom;
  return r;
}

LossResult wiou_v1(const Box& anchor, const Box& target) {
  const LossResult l = liou(anchor, target);
  const LossResult rw = r_wiou(anchor, target);
  return {rw.value * l.value, rw.value * l.grad + l.value * rw.grad};
}

double outlier_degree(double liou_detached, const LossState& state) {
  return liou_detached / state.running_mean;
}

double focusing_r(double beta, const WiouConfig& cfg) {
  return beta / (cfg.delta * std::pow(cfg.alpha, beta - cfg.delta));
}

LossResult wiou_v2(const Box& anchor, const Box& target, const LossState& state,
                   const WiouConfig& cfg) {
  const LossResult v1 = wiou_v1(anchor, target);
  const double liou_detached = liou(anchor, target).value;
  const double coef =
      std::pow(liou_detached / state.running_mean, cfg.gamma);
  return {coef * v1.value, coef * v1.grad};
}

LossResult wiou_v3(const Box& anchor, const Box& target, const LossState& state,
                   const WiouConfig& cfg) {
  const LossResult v1 = wiou_v1(anchor, target);
  const double beta = outlier_degree(liou(anchor, target).value, state);
  const double r = focusing_r(beta, cfg);
  return {r * v1.value, r * v1.grad};
}

LossResult evaluate(LossKind kind, const Box& anchor, const Box& target,
                    const LossState& state, const WiouConfig& cfg) {
  switch (kind) {
    case LossKind::L1: return l1_yolov2(anchor, target);
    case LossKind::Iou: return liou(anchor, target);
    case LossKind::Giou: return giou_loss(anchor, target);
    case LossKind::Wiou1: return wiou_v1(anchor, target);
    case LossKind::Wiou2: return wiou_v2(anchor, target, state, cfg);
    case LossKind::Wiou3: return wiou_v3(anchor, target, state, cfg);
  }
  throw std::invalid_argument("bad loss kind");
}

}  // namespace detkit::loss
