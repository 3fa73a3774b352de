#pragma once

// Independent reference computations for the tests. Everything here is
// written from the defining formulas with plain loops and long double
// accumulation, and shares no code with the library beyond data access.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "mech/mech.hpp"

namespace oracle {

using mech::Instance;
using mech::MessageProfile;

inline std::vector<std::size_t> agents_on(const Instance& inst, std::size_t l) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < inst.n_agents(); ++i)
    if (inst.coeff(l, i) != 0.0) out.push_back(i);
  return out;
}

inline double pbar(const Instance& inst, const MessageProfile& prof, std::size_t i, std::size_t l) {
  const auto on = agents_on(inst, l);
  long double s = 0.0L;
  for (std::size_t j : on)
    if (j != i) s += prof.price(j, l);
  return static_cast<double>(s / static_cast<long double>(on.size() - 1));
}

inline double row_dot(const Instance& inst, std::size_t l, const std::vector<double>& x) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < inst.n_agents(); ++i) s += static_cast<long double>(inst.coeff(l, i)) * x[i];
  return static_cast<double>(s);
}

/// t_i^l = A_li x_i pbar + (p_i - pbar)^2 + eta pbar p_i slack^2.
inline double base_tax_term(const Instance& inst, const std::vector<double>& x, const MessageProfile& prof,
                            std::size_t i, std::size_t l) {
  const long double pb = oracle::pbar(inst, prof, i, l);
  const long double p = prof.price(i, l);
  const long double slack = inst.cap(l) - row_dot(inst, l, x);
  return static_cast<double>(inst.coeff(l, i) * x[i] * pb + (p - pb) * (p - pb) + inst.eta() * pb * p * slack * slack);
}

inline double base_tax(const Instance& inst, const std::vector<double>& x, const MessageProfile& prof,
                       std::size_t i) {
  long double s = 0.0L;
  for (std::size_t l = 0; l < inst.n_constraints(); ++l)
    if (inst.coeff(l, i) != 0.0) s += base_tax_term(inst, x, prof, i, l);
  return static_cast<double>(s);
}

/// At-equilibrium rebate on a row with nonnegative coefficients and
/// singleton groups.
inline double rebate_ne(const Instance& inst, const MessageProfile& prof, std::size_t i, std::size_t l) {
  const auto on = agents_on(inst, l);
  const long double n = static_cast<long double>(on.size());
  if (on.size() == 2) {
    const std::size_t j = on[0] == i ? on[1] : on[0];
    return inst.coeff(l, j) * prof.y[j] * prof.price(j, l);
  }
  const long double pb = oracle::pbar(inst, prof, i, l);
  long double s = 0.0L;
  for (std::size_t j : on)
    if (j != i) s += static_cast<long double>(inst.coeff(l, j)) * prof.y[j] * (pb - prof.price(j, l) / (n - 1));
  return static_cast<double>(s / (n - 2));
}

/// Off-equilibrium rebate with every sum written out, including the
/// quadruple sum classified by the overlap of {j, q} and {k, s}.
inline double rebate_offeq(const Instance& inst, const MessageProfile& prof, std::size_t i, std::size_t l) {
  std::vector<std::size_t> M;
  for (std::size_t j : agents_on(inst, l))
    if (j != i) M.push_back(j);
  const long double n = static_cast<long double>(M.size() + 1);
  const long double c = inst.cap(l);
  auto p = [&](std::size_t j) -> long double { return prof.price(j, l); };
  auto ay = [&](std::size_t j) -> long double { return static_cast<long double>(inst.coeff(l, j)) * prof.y[j]; };
  auto phi = [&](std::size_t k) { return ay(k) * ay(k) - 2 * c * ay(k); };

  const long double f1 = oracle::rebate_ne(inst, prof, i, l);

  long double f2 = 0.0L, f3a = 0.0L, f3b = 0.0L, f3c = 0.0L;
  for (std::size_t a = 0; a < M.size(); ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      const std::size_t j = M[a], q = M[b];
      const long double d = p(j) - p(q);
      f2 += d * d;
      f3a += p(j) * p(q);
      long double rest = 0.0L;
      for (std::size_t k : M)
        if (k != j && k != q) rest += p(j) * p(q) * phi(k);
      f3b += rest / (n - 3) + p(j) * p(q) * (phi(j) + phi(q)) / (n - 2);

      long double b0 = 0.0L, b1 = 0.0L, b2 = 0.0L;
      for (std::size_t e = 0; e < M.size(); ++e) {
        for (std::size_t f = 0; f < e; ++f) {
          const std::size_t k = M[e], s = M[f];
          const int overlap = (k == j || k == q) + (s == j || s == q);
          const long double psi = p(j) * p(q) * ay(k) * ay(s);
          if (overlap == 0)
            b0 += psi;
          else if (overlap == 1)
            b1 += psi;
          else if (k == j && s == q)
            b2 += psi;
        }
      }
      f3c += b0 / (n - 4) + b1 / (n - 3) + b2 / (n - 2);
    }
  }
  f2 *= n / ((n - 1) * (n - 1) * (n - 2));
  f3a *= 2 * c * c / ((n - 1) * (n - 2));
  f3b *= 2 / (n - 1);
  f3c *= 4 / (n - 1);
  return static_cast<double>(f1 + f2 + inst.eta() * (f3a + f3b + f3c));
}

inline bool feasible(const Instance& inst, const std::vector<double>& x, double tol) {
  for (std::size_t l = 0; l < inst.n_constraints(); ++l)
    if (row_dot(inst, l, x) > inst.cap(l) + tol) return false;
  return true;
}

/// Proportional allocation by bisection on the ray from theta through the
/// group-averaged demand, instead of the closed-form minimum ratio.
inline std::vector<double> allocation_bisection(const Instance& inst, const std::vector<double>& theta,
                                                const std::vector<double>& y) {
  std::vector<double> ybar(y.size());
  for (const auto& g : inst.equality_groups()) {
    long double s = 0.0L;
    for (std::size_t i : g) s += y[i];
    for (std::size_t i : g) ybar[i] = static_cast<double>(s / static_cast<long double>(g.size()));
  }
  if (feasible(inst, ybar, 1e-12)) return ybar;
  auto at = [&](double a) {
    std::vector<double> x(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = theta[i] + a * (ybar[i] - theta[i]);
    return x;
  };
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    (feasible(inst, at(mid), 0.0) ? lo : hi) = mid;
  }
  return at(lo);
}

/// Argmax of f over a uniform grid of n + 1 points on [lo, hi].
template <class F>
std::pair<double, double> scan_argmax(F&& f, double lo, double hi, std::size_t n) {
  double best_x = lo, best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= n; ++k) {
    const double x = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n);
    const double v = f(x);
    if (v > best) best = v, best_x = x;
  }
  return {best_x, best};
}

/// Central difference.
template <class F>
double derivative(F&& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double sum(const std::vector<double>& v) {
  long double s = 0.0L;
  for (double x : v) s += x;
  return static_cast<double>(s);
}

inline double sum_abs(const std::vector<double>& v) {
  long double s = 0.0L;
  for (double x : v) s += std::abs(x);
  return static_cast<double>(s);
}

/// Sum of v_i over a full allocation.
inline double objective(const Instance& inst, const std::vector<double>& x) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < inst.n_agents(); ++i) s += inst.valuation(i).value(x[i]);
  return static_cast<double>(s);
}

}  // namespace oracle

namespace fixtures {

/// Two agents on one unit-cap link with LogShift(1, 1) valuations.
inline mech::Instance canonical() {
  using namespace mech;
  return Instance({Valuation::log_shift(1.0, 1.0), Valuation::log_shift(1.0, 1.0)},
                  {Constraint{{{0, 1.0}, {1, 1.0}}, 1.0}}, {}, {0.01, 0.01}, 10.0, 1.0);
}

/// One link of n agents with the given coefficients and cap.
inline mech::Instance single_link(const std::vector<double>& coeffs, double cap, double eta = 1.0) {
  using namespace mech;
  std::vector<Valuation> vals;
  Constraint row;
  row.cap = cap;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    vals.push_back(Valuation::log_shift(1.0, 1.0 + 0.5 * static_cast<double>(i)));
    row.terms.push_back({i, coeffs[i]});
  }
  return Instance(vals, {row}, {}, std::vector<double>(coeffs.size(), 0.01), 10.0, eta);
}

/// One public good shared by {0, 1}: mean usage capped at cap, plus the
/// +-1 cycle rows that tie the two allocations together.
inline mech::Instance shared_pair(double cap) {
  using namespace mech;
  return Instance({Valuation::log_shift(1.0, 1.0), Valuation::log_shift(1.0, 2.0)},
                  {Constraint{{{0, 0.5}, {1, 0.5}}, cap}, Constraint{{{0, 1.0}, {1, -1.0}}, 0.0},
                   Constraint{{{1, 1.0}, {0, -1.0}}, 0.0}},
                  {{0, 1}}, {0.01, 0.01}, 10.0, 1.0);
}

/// Demand d + t r with r > 0 random and t strictly below the first row it
/// would cross, so y is feasible and above d in every coordinate.
inline std::vector<double> feasible_demand(const mech::Instance& inst, mech::Rng& rng) {
  std::vector<double> r(inst.n_agents());
  for (double& v : r) v = rng.uniform(0.05, 1.0);
  double t_max = inst.D();
  for (std::size_t l = 0; l < inst.n_constraints(); ++l) {
    const double ar = oracle::row_dot(inst, l, r);
    if (ar > 0.0) t_max = std::min(t_max, (inst.cap(l) - oracle::row_dot(inst, l, inst.d())) / ar);
  }
  const double t = t_max * rng.uniform(0.05, 0.95);
  std::vector<double> y(r.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = inst.d()[i] + t * r[i];
  return y;
}

}  // namespace fixtures
