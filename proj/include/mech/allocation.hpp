#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mech/error.hpp"
#include "mech/mechanism.hpp"

namespace mech {

struct AlphaResult {
  double alpha = 1.0;
  std::optional<std::size_t> binding;  // lowest-index row attaining the minimum
};

struct AllocationResult {
  std::vector<double> x;
  double alpha0 = 1.0;
  std::optional<std::size_t> binding_constraint;
  bool was_interior = true;  // demand was already feasible, x == y
};

/// Scaling of the anchored ray theta + alpha (y - theta) onto the innermost
/// face: alpha = min over rows with A_l^T (y - theta) > 1e-12 of
/// (c_l - A_l^T theta) / A_l^T (y - theta). Capped at 1 with no binding row
/// when the minimum exceeds 1; a point on a face returns (1, l).
inline AlphaResult alpha0(const ReducedInstance& red, std::span<const double> theta_r,
                          std::span<const double> y_r) {
  AlphaResult best{std::numeric_limits<double>::infinity(), std::nullopt};
  for (std::size_t l = 0; l < red.L; ++l) {
    double num = red.caps[l];
    double den = 0.0;
    const double* row = red.coeffs.data() + l * red.K;
    for (std::size_t k = 0; k < red.K; ++k) {
      num -= row[k] * theta_r[k];
      den += row[k] * (y_r[k] - theta_r[k]);
    }
    if (den <= 1e-12) continue;
    const double a = num / den;
    if (a > 0.0 && a < best.alpha) best = {a, l};
  }
  if (!best.binding || best.alpha > 1.0 + 1e-12) return {1.0, std::nullopt};
  best.alpha = std::min(best.alpha, 1.0);
  return best;
}

/// alpha0 on a non-degenerate mechanism with full-space theta and demand.
inline AlphaResult alpha0(const Mechanism& mech, std::span<const double> y) {
  return alpha0(mech.reduced(), mech.theta_reduced(), mech.reduced().restrict_to_representatives(y));
}

namespace detail {

inline void check_demand(const Instance& inst, std::span<const double> y) {
  if (y.size() != inst.n_agents())
    throw DimensionMismatch("demand has " + std::to_string(y.size()) + " entries, expected " +
                            std::to_string(inst.n_agents()));
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!(y[i] > inst.d()[i]) || !std::isfinite(y[i]))
      throw DemandOutOfBox("y_" + std::to_string(i) + " = " + std::to_string(y[i]) +
                           " not in (d_i, inf)");
}

inline bool reduced_feasible(const ReducedInstance& red, std::span<const double> y_r) {
  for (std::size_t l = 0; l < red.L; ++l) {
    if (red.implied[l]) continue;
    if (red.row_dot(l, y_r) > red.caps[l] + 1e-12 * (1.0 + std::abs(red.caps[l]))) return false;
  }
  return true;
}

/// Proportional allocation in the reduced space.
inline AllocationResult project_reduced(const Mechanism& mech, std::span<const double> y_r) {
  const ReducedInstance& red = mech.reduced();
  AllocationResult res;
  std::vector<double> x_r(y_r.begin(), y_r.end());
  if (reduced_feasible(red, y_r)) {
    res.was_interior = true;
    res.alpha0 = 1.0;
    res.binding_constraint = alpha0(red, mech.theta_reduced(), y_r).binding;
  } else {
    const AlphaResult a = alpha0(red, mech.theta_reduced(), y_r);
    const auto& th = mech.theta_reduced();
    for (std::size_t k = 0; k < red.K; ++k) x_r[k] = th[k] + a.alpha * (y_r[k] - th[k]);
    res.was_interior = false;
    res.alpha0 = a.alpha;
    res.binding_constraint = a.binding;
  }
  res.x = red.expand(x_r);
  return res;
}

}  // namespace detail

/// Contract allocation for a non-degenerate instance: x = y inside the
/// feasible set, otherwise the boundary point on the segment [theta, y].
inline AllocationResult allocate(const Mechanism& mech, std::span<const double> y) {
  if (mech.instance().degenerate())
    throw PreconditionError("allocate requires singleton equality groups; use allocate_degenerate");
  detail::check_demand(mech.instance(), y);
  AllocationResult res = detail::project_reduced(mech, y);
  if (res.was_interior) res.x.assign(y.begin(), y.end());
  return res;
}

/// Contract allocation with equality groups: average each group's demands,
/// allocate proportionally in the reduced polytope, and give every member of
/// a group the same share.
inline AllocationResult allocate_degenerate(const Mechanism& mech, std::span<const double> y) {
  if (!mech.instance().degenerate())
    throw PreconditionError("allocate_degenerate requires a non-singleton equality group");
  detail::check_demand(mech.instance(), y);
  return detail::project_reduced(mech, mech.reduced().average(y));
}

/// Dispatches on the instance's group structure.
inline AllocationResult allocate_contract(const Mechanism& mech, std::span<const double> y) {
  return mech.instance().degenerate() ? allocate_degenerate(mech, y) : allocate(mech, y);
}

/// Allocation vector only; the hot path for payoff evaluation.
inline std::vector<double> allocation(const Mechanism& mech, std::span<const double> y) {
  return allocate_contract(mech, y).x;
}

struct GradientSign {
  int sign = 0;
  double derivative = 0.0;
};

/// One-sided (forward, h = 1e-7) derivative of x_i with respect to y_i.
/// Differences within rounding of x_i count as zero: a group pinned alone
/// against a binding row has slope exactly 0.
inline GradientSign allocation_gradient_sign(const Mechanism& mech, std::span<const double> y,
                                             std::size_t i) {
  constexpr double h = 1e-7;
  std::vector<double> yp(y.begin(), y.end());
  yp[i] += h;
  const double x0 = allocation(mech, y)[i];
  const double deriv = (allocation(mech, yp)[i] - x0) / h;
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x0)) / h;
  return {deriv > noise ? 1 : (deriv < -noise ? -1 : 0), deriv};
}

/// Largest y_i (others fixed) for which the averaged demand stays feasible.
/// +inf when no row limits agent i's group; -inf when the other groups
/// already violate a row that agent i cannot relax.
inline double demand_kink(const Mechanism& mech, std::span<const double> y, std::size_t i) {
  const ReducedInstance& red = mech.reduced();
  const std::size_t k = red.group_of[i];
  const double nk = static_cast<double>(red.group_size[k]);
  std::vector<double> y_r = red.average(y);
  const double others = nk * y_r[k] - y[i];
  double limit = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < red.L; ++l) {
    if (red.implied[l]) continue;
    const double a = red.coeff(l, k);
    double rest = 0.0;
    for (std::size_t q = 0; q < red.K; ++q)
      if (q != k) rest += red.coeff(l, q) * y_r[q];
    const double room = red.caps[l] - rest;
    if (a > 0.0) {
      limit = std::min(limit, room / a);
    } else if (room < -1e-12 * (1.0 + std::abs(red.caps[l]))) {
      return -std::numeric_limits<double>::infinity();
    }
  }
  if (!std::isfinite(limit)) return limit;
  return nk * limit - others;
}

/// Largest violation of any row plus any within-group spread.
inline double max_violation(const Instance& inst, std::span<const double> x) {
  double v = 0.0;
  for (std::size_t l = 0; l < inst.n_constraints(); ++l)
    v = std::max(v, inst.row_dot(l, x) - inst.cap(l));
  for (const auto& g : inst.equality_groups())
    for (std::size_t i : g) v = std::max(v, std::abs(x[i] - x[g.front()]));
  return v;
}

/// Full-space membership y in C (all rows, including equality rows).
inline bool in_feasible_set(const Instance& inst, std::span<const double> y, double tol = 1e-12) {
  for (std::size_t l = 0; l < inst.n_constraints(); ++l)
    if (inst.row_dot(l, y) > inst.cap(l) + tol * (1.0 + std::abs(inst.cap(l)))) return false;
  return true;
}

}  // namespace mech
