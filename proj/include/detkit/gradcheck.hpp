#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "detkit/geometry.hpp"
#include "detkit/loss.hpp"
#include "detkit/tensor.hpp"

namespace detkit::gradcheck {

// The function finite differences are taken of: the loss value with every
// detached quantity frozen at the base point (the enclosure diagonal inside
// the distance attention; the v2 coefficient; the v3 gain; the loss state).
std::function<double(const Tensor&)> loss_surrogate(
    loss::LossKind kind, const geom::Box& base_anchor, const geom::Box& target,
    const loss::LossState& state, const loss::WiouConfig& cfg);

struct OpReport {
  std::string op;
  std::size_t cases = 0;
  double max_err_ratio = 0.0;  // |analytic - fd| / max(1e-7, 1e-4 * scale)
  double max_abs_diff = 0.0;
  bool pass = false;
};

struct Report {
  std::vector<OpReport> ops;
  bool all_pass() const;
};

// Every loss op against central differences of its surrogate on random
// non-degenerate pairs; pairs near a min/max tie or an overlap boundary are
// excluded (the loss surfaces are only piecewise smooth).
Report check_losses(std::uint64_t seed, std::size_t cases_per_op, double eps);

// bra_backward against finite differences of the routing-frozen forward,
// over every feature-map entry and every projection entry.
Report check_bra(std::uint64_t seed, std::size_t cases, double eps);

Report run_all(std::uint64_t seed, std::size_t cases_per_op, double eps);

std::string report_text(const Report& report);

}  // namespace detkit::gradcheck
