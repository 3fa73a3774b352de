#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mech/equality_rows.hpp"
#include "mech/error.hpp"
#include "mech/instance.hpp"
#include "mech/summation.hpp"
#include "mech/validate.hpp"

namespace mech {

struct KktResiduals {
  double primal = 0.0;        // max_l max(0, A_l^T x - c_l), plus group spread
  double dual = 0.0;          // max_l max(0, -lambda_l)
  double slack = 0.0;         // max_l |lambda_l (A_l^T x - c_l)|
  double stationarity = 0.0;  // reduced: max_k |sum_{i in k} v_i'(x) - sum_l A~_lk lambda_l|

  double max() const { return std::max({primal, dual, slack, stationarity}); }
};

struct CentralizedSolution {
  std::vector<double> x_star;
  std::vector<double> lambda_star;
  KktResiduals residuals;
  std::size_t iterations = 0;
  /// False for rows whose multiplier is not pinned down by the KKT system
  /// (linearly dependent active rows, equality rows).
  std::vector<bool> multiplier_unique;
  /// Per-agent |v_i'(x_i) - sum_l A_li lambda_l| including equality rows.
  double full_stationarity = 0.0;
  AssumptionCheck a2;
};

struct SolveOptions {
  double tol = 1e-8;
  std::size_t max_iterations = 100000;
};

inline double objective(const Instance& inst, std::span<const double> x) {
  CompensatedSum s;
  for (std::size_t i = 0; i < inst.n_agents(); ++i) s += inst.valuation(i).value(x[i]);
  return s.value();
}

inline KktResiduals kkt_residuals(const Instance& inst, std::span<const double> x,
                                  std::span<const double> lambda) {
  if (x.size() != inst.n_agents() || lambda.size() != inst.n_constraints())
    throw DimensionMismatch("kkt_residuals: x has " + std::to_string(x.size()) + ", lambda has " +
                            std::to_string(lambda.size()));
  const ReducedInstance red = detail::reduce_unchecked(inst);
  KktResiduals r;
  for (std::size_t l = 0; l < inst.n_constraints(); ++l) {
    const double g = inst.row_dot(l, x) - inst.cap(l);
    r.primal = std::max(r.primal, g);
    r.dual = std::max(r.dual, -lambda[l]);
    r.slack = std::max(r.slack, std::abs(lambda[l] * g));
  }
  for (const auto& grp : inst.equality_groups())
    for (std::size_t i : grp) r.primal = std::max(r.primal, std::abs(x[i] - x[grp.front()]));
  for (std::size_t k = 0; k < red.K; ++k) {
    const double z = x[red.representative[k]];
    double marginal = 0.0;
    for (std::size_t i : inst.equality_groups()[k]) marginal += inst.valuation(i).deriv(z);
    double price = 0.0;
    for (std::size_t l = 0; l < red.L; ++l) price += red.coeff(l, k) * lambda[l];
    r.stationarity = std::max(r.stationarity, std::abs(marginal - price));
  }
  return r;
}

namespace detail {

/// Aggregated valuation of one equality group in the reduced space.
class GroupValue {
public:
  GroupValue(const Instance& inst, std::size_t k) {
    for (std::size_t i : inst.equality_groups()[k]) members_.push_back(&inst.valuation(i));
  }
  double value(double z) const {
    double s = 0.0;
    for (const Valuation* v : members_) s += v->value(z);
    return s;
  }
  double deriv(double z) const {
    double s = 0.0;
    for (const Valuation* v : members_) s += v->deriv(z);
    return s;
  }
  double second(double z) const {
    double s = 0.0;
    for (const Valuation* v : members_) s += v->second(z);
    return s;
  }

private:
  std::vector<const Valuation*> members_;
};

/// argmax_{z in [0, upper]} V(z) - price * z via Newton with bisection.
inline double maximize_concave(const GroupValue& V, double price, double upper, double start) {
  if (V.deriv(0.0) - price <= 0.0) return 0.0;
  if (V.deriv(upper) - price >= 0.0) return upper;
  double lo = 0.0, hi = upper;
  double z = std::clamp(start, 0.0, upper);
  if (!(z > lo && z < hi)) z = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = V.deriv(z) - price;
    if (f > 0.0)
      lo = z;
    else if (f < 0.0)
      hi = z;
    else
      return z;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, z)) break;
    const double fp = V.second(z);
    double next = z - f / fp;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    z = next;
  }
  return z;
}

struct PolishResult {
  std::vector<double> z;
  std::vector<double> lambda;  // reduced-row multipliers (0 off the active set)
  std::vector<std::size_t> active;
  std::size_t rank = 0;
};

// Bound state of a reduced coordinate during the polish.
enum class Bound { Free, Lower, Upper };

struct NewtonOutcome {
  bool converged = false;
  std::optional<std::size_t> blocked;  // free coordinate the line search pinned at a bound
  std::vector<double> z;
  std::vector<double> mu;
  std::size_t rank = 0;
};

/// Newton's method on the KKT system restricted to the free coordinates and
/// the active rows S; bound coordinates stay at their bound.
inline NewtonOutcome newton_on_active_set(const ReducedInstance& red, const std::vector<GroupValue>& V,
                                          double upper, const std::vector<std::size_t>& S,
                                          const std::vector<Bound>& bound, std::vector<double> z,
                                          std::vector<double> mu) {
  std::vector<std::size_t> F;
  for (std::size_t k = 0; k < red.K; ++k) {
    if (bound[k] == Bound::Free)
      F.push_back(k);
    else
      z[k] = bound[k] == Bound::Lower ? 0.0 : upper;
  }
  const std::size_t nf = F.size();
  const std::size_t m = S.size();
  NewtonOutcome out;
  {
    Eigen::MatrixXd B(m, nf);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t q = 0; q < nf; ++q) B(j, q) = red.coeff(S[j], F[q]);
    out.rank = m == 0 || nf == 0 ? 0 : static_cast<std::size_t>(Eigen::FullPivLU<Eigen::MatrixXd>(B).rank());
  }
  double scale = 1.0;
  for (std::size_t j = 0; j < m; ++j) scale = std::max(scale, std::abs(red.caps[S[j]]));
  Eigen::MatrixXd M(nf + m, nf + m);
  Eigen::VectorXd rhs(nf + m);
  for (int it = 0; it < 80; ++it) {
    double res = 0.0;
    for (std::size_t q = 0; q < nf; ++q) {
      const std::size_t k = F[q];
      double r = V[k].deriv(z[k]);
      for (std::size_t j = 0; j < m; ++j) r -= red.coeff(S[j], k) * mu[j];
      rhs[q] = -r;
      res = std::max(res, std::abs(r));
    }
    for (std::size_t j = 0; j < m; ++j) {
      const double e = red.row_dot(S[j], z) - red.caps[S[j]];
      rhs[nf + j] = -e;
      res = std::max(res, std::abs(e));
    }
    if (!std::isfinite(res)) return out;
    if (res <= 1e-14 * scale) {
      out.converged = true;
      out.z = std::move(z);
      out.mu = std::move(mu);
      return out;
    }
    M.setZero();
    for (std::size_t q = 0; q < nf; ++q) M(q, q) = V[F[q]].second(z[F[q]]);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t q = 0; q < nf; ++q) {
        M(q, nf + j) = -red.coeff(S[j], F[q]);
        M(nf + j, q) = red.coeff(S[j], F[q]);
      }
    const Eigen::VectorXd step = M.completeOrthogonalDecomposition().solve(rhs);
    // Largest step keeping free coordinates strictly inside (0, upper].
    double t = 1.0;
    std::optional<std::size_t> limiting;
    for (std::size_t q = 0; q < nf; ++q) {
      const double zq = z[F[q]], sq = step[q];
      if (sq < 0.0 && zq + sq <= 0.0) {
        const double tq = 0.99 * zq / -sq;
        if (tq < t) t = tq, limiting = F[q];
      } else if (sq > 0.0 && zq + sq > upper) {
        const double tq = (upper - zq) / sq;
        if (tq < t) t = tq, limiting = F[q];
      }
    }
    if (limiting && t < 1e-6) {
      out.blocked = limiting;
      return out;
    }
    for (std::size_t q = 0; q < nf; ++q) z[F[q]] = std::clamp(z[F[q]] + t * step[q], 1e-300, upper);
    for (std::size_t j = 0; j < m; ++j) mu[j] += t * step[nf + j];
  }
  return out;
}

/// Active-set refinement of a dual-ascent iterate: rows and coordinate bounds
/// enter and leave until the Newton point satisfies every KKT sign condition.
inline std::optional<PolishResult> polish(const ReducedInstance& red, const std::vector<GroupValue>& V,
                                          double upper, const std::vector<double>& z0,
                                          const std::vector<double>& lambda0) {
  std::vector<std::size_t> S;
  for (std::size_t l = 0; l < red.L; ++l) {
    if (red.implied[l]) continue;
    const double g = red.row_dot(l, z0) - red.caps[l];
    if (lambda0[l] > 0.0 || g > -1e-6 * (1.0 + std::abs(red.caps[l]))) S.push_back(l);
  }
  std::vector<Bound> bound(red.K, Bound::Free);
  std::vector<double> z = z0;
  for (std::size_t k = 0; k < red.K; ++k) {
    if (z0[k] <= 0.0) bound[k] = Bound::Lower;
    if (z0[k] >= upper) bound[k] = Bound::Upper;
  }
  const auto price_of = [&](std::size_t k, const std::vector<double>& lam) {
    double p = 0.0;
    for (std::size_t l = 0; l < red.L; ++l) p += red.coeff(l, k) * lam[l];
    return p;
  };

  for (std::size_t round = 0; round < 4 * (red.L + red.K) + 10; ++round) {
    std::vector<double> mu;
    for (std::size_t l : S) mu.push_back(lambda0[l]);
    NewtonOutcome nt = newton_on_active_set(red, V, upper, S, bound, z, mu);
    if (nt.blocked) {
      const std::size_t k = *nt.blocked;
      bound[k] = z[k] + 1.0 > upper ? Bound::Upper : Bound::Lower;
      continue;
    }
    if (!nt.converged) return std::nullopt;
    // Drop the most negative multiplier, else add the most violated row,
    // else release a bound whose sign condition fails.
    std::optional<std::size_t> drop;
    double worst = -1e-12;
    for (std::size_t j = 0; j < S.size(); ++j)
      if (nt.mu[j] < worst) worst = nt.mu[j], drop = j;
    if (drop) {
      S.erase(S.begin() + static_cast<std::ptrdiff_t>(*drop));
      continue;
    }
    std::optional<std::size_t> add;
    double viol = 0.0;
    for (std::size_t l = 0; l < red.L; ++l) {
      if (red.implied[l] || std::find(S.begin(), S.end(), l) != S.end()) continue;
      const double g = red.row_dot(l, nt.z) - red.caps[l];
      if (g > 1e-12 * (1.0 + std::abs(red.caps[l])) && g > viol) viol = g, add = l;
    }
    if (add) {
      S.push_back(*add);
      std::sort(S.begin(), S.end());
      continue;
    }
    std::vector<double> lam(red.L, 0.0);
    for (std::size_t j = 0; j < S.size(); ++j) lam[S[j]] = std::max(0.0, nt.mu[j]);
    std::optional<std::size_t> release;
    for (std::size_t k = 0; k < red.K && !release; ++k) {
      const double g = V[k].deriv(nt.z[k]) - price_of(k, lam);
      if ((bound[k] == Bound::Lower && g > 1e-12) || (bound[k] == Bound::Upper && g < -1e-12)) release = k;
    }
    if (release) {
      z = nt.z;
      z[*release] = bound[*release] == Bound::Lower ? std::min(1e-3, 0.5 * upper) : 0.9 * upper;
      bound[*release] = Bound::Free;
      continue;
    }
    PolishResult out;
    out.z = nt.z;
    out.lambda = std::move(lam);
    out.active = S;
    out.rank = nt.rank;
    return out;
  }
  return std::nullopt;
}

/// Stationarity in the reduced space with the sign conditions of the
/// coordinate bounds: at 0 only a positive gap counts, at D only a negative.
inline double projected_stationarity(const Instance& inst, const ReducedInstance& red,
                                     std::span<const double> x, std::span<const double> lambda) {
  double worst = 0.0;
  for (std::size_t k = 0; k < red.K; ++k) {
    const double z = x[red.representative[k]];
    double g = 0.0;
    for (std::size_t i : inst.equality_groups()[k]) g += inst.valuation(i).deriv(z);
    for (std::size_t l = 0; l < red.L; ++l) g -= red.coeff(l, k) * lambda[l];
    if (z <= 0.0) g = std::max(g, 0.0);
    if (z >= inst.D()) g = std::min(g, 0.0);
    worst = std::max(worst, std::abs(g));
  }
  return worst;
}

}  // namespace detail

/// Social optimum and multipliers. Projected dual ascent in the reduced
/// space (coordinatewise inner maximization, diagonally scaled diminishing
/// steps) followed by an active-set Newton polish of the KKT system.
inline CentralizedSolution solve(const Instance& inst, SolveOptions opt = {}) {
  if (!(opt.tol > 0.0)) throw PreconditionError("solve: tol must be positive");
  const ReducedInstance red = reduce_equalities(inst);
  const std::size_t K = red.K;
  const std::size_t L = red.L;
  const double upper = inst.D();
  std::vector<detail::GroupValue> V;
  for (std::size_t k = 0; k < K; ++k) V.emplace_back(inst, k);

  std::vector<double> lambda(L, 0.0), z(K, 0.0), price(K, 0.0);
  const auto inner = [&] {
    for (std::size_t k = 0; k < K; ++k) {
      double p = 0.0;
      for (std::size_t l = 0; l < L; ++l) p += red.coeff(l, k) * lambda[l];
      price[k] = p;
      z[k] = detail::maximize_concave(V[k], p, upper, z[k] > 0.0 ? z[k] : 0.5 * upper);
    }
  };

  const EqualityGraph graph(inst, red);
  const auto finish = [&](const std::vector<double>& zr, const std::vector<double>& lam_r,
                          const std::vector<bool>& unique, std::size_t iters) {
    CentralizedSolution sol;
    sol.x_star = red.expand(zr);
    sol.lambda_star = lam_r;
    std::vector<double> residual(inst.n_agents(), 0.0);
    for (std::size_t i = 0; i < inst.n_agents(); ++i) {
      double r = inst.valuation(i).deriv(sol.x_star[i]);
      for (std::size_t l : inst.index().constraints_of_agent[i])
        if (!red.is_equality_row(l)) r -= inst.coeff(l, i) * lam_r[l];
      residual[i] = r;
    }
    const std::vector<double> mu = graph.route(inst, residual, L);
    for (std::size_t l = 0; l < L; ++l)
      if (red.is_equality_row(l)) sol.lambda_star[l] = mu[l];
    sol.multiplier_unique = unique;
    for (std::size_t l = 0; l < L; ++l)
      if (red.is_equality_row(l)) sol.multiplier_unique[l] = false;
    sol.residuals = kkt_residuals(inst, sol.x_star, sol.lambda_star);
    for (std::size_t i = 0; i < inst.n_agents(); ++i) {
      double r = inst.valuation(i).deriv(sol.x_star[i]);
      for (std::size_t l : inst.index().constraints_of_agent[i]) r -= inst.coeff(l, i) * sol.lambda_star[l];
      sol.full_stationarity = std::max(sol.full_stationarity, std::abs(r));
    }
    sol.iterations = iters;
    sol.a2 = check_optimum_bounds(inst, sol.x_star);
    return sol;
  };
  // Corner optima (A2 violated) cannot zero the plain stationarity residual;
  // convergence is judged with the bound-aware one and A2 flags the corner.
  const auto converged = [&](const CentralizedSolution& sol) {
    const double stat = detail::projected_stationarity(inst, red, sol.x_star, sol.lambda_star);
    return std::max({sol.residuals.primal, sol.residuals.dual, sol.residuals.slack, stat}) <= opt.tol;
  };

  for (std::size_t t = 0; t < opt.max_iterations; ++t) {
    inner();
    const double rho = 0.5 / std::sqrt(1.0 + static_cast<double>(t) / 100.0);
    for (std::size_t l = 0; l < L; ++l) {
      if (red.implied[l]) continue;
      const double g = red.row_dot(l, z) - red.caps[l];
      double curvature = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double a = red.coeff(l, k);
        if (a != 0.0) curvature += a * a / std::max(1e-12, std::abs(V[k].second(std::max(z[k], 1e-12))));
      }
      lambda[l] = std::max(0.0, lambda[l] + rho * g / std::max(curvature, 1e-12));
    }

    if (t >= 5 && t % 10 == 5) {
      inner();
      if (auto pol = detail::polish(red, V, upper, z, lambda)) {
        std::vector<bool> unique(L, true);
        if (pol->rank < pol->active.size())
          for (std::size_t l : pol->active) unique[l] = false;
        CentralizedSolution sol = finish(pol->z, pol->lambda, unique, t + 1);
        if (converged(sol)) return sol;
      }
    }
  }
  inner();
  CentralizedSolution sol = finish(z, lambda, std::vector<bool>(L, true), opt.max_iterations);
  if (converged(sol)) return sol;
  throw NoConvergence(opt.max_iterations);
}

struct OracleResult {
  std::vector<double> x;
  double value = 0.0;
};

/// Exhaustive search over the grid step * Z^K inside the reduced polytope
/// (test oracle for tiny instances). The last coordinate is resolved with a
/// prefix-maximum table, so the work is the number of outer grid points.
inline OracleResult brute_force_oracle(const Instance& inst, double grid_step) {
  if (!(grid_step > 0.0)) throw PreconditionError("grid_step must be positive");
  const ReducedInstance red = reduce_equalities(inst);
  const std::size_t K = red.K;
  if (K > 4) throw TooLarge("oracle supports at most 4 free variables, got " + std::to_string(K));

  std::vector<std::size_t> count(K);
  double outer = 1.0;
  for (std::size_t k = 0; k < K; ++k) {
    double u = inst.D();
    for (std::size_t l = 0; l < red.L; ++l)
      if (red.coeff(l, k) > 0.0) u = std::min(u, red.caps[l] / red.coeff(l, k));
    count[k] = static_cast<std::size_t>(std::floor(u / grid_step + 1e-9)) + 1;
    if (k + 1 < K) outer *= static_cast<double>(count[k]);
  }
  if (outer > 1e8) throw TooLarge("oracle grid has " + std::to_string(outer) + " outer points");

  std::vector<std::vector<double>> table(K);
  for (std::size_t k = 0; k < K; ++k) {
    detail::GroupValue V(inst, k);
    table[k].resize(count[k]);
    for (std::size_t j = 0; j < count[k]; ++j) table[k][j] = V.value(static_cast<double>(j) * grid_step);
  }
  const std::size_t last = K - 1;
  std::vector<double> prefix_best(count[last]);
  std::vector<std::size_t> prefix_arg(count[last]);
  for (std::size_t j = 0; j < count[last]; ++j) {
    if (j == 0 || table[last][j] > prefix_best[j - 1]) {
      prefix_best[j] = table[last][j];
      prefix_arg[j] = j;
    } else {
      prefix_best[j] = prefix_best[j - 1];
      prefix_arg[j] = prefix_arg[j - 1];
    }
  }

  std::vector<double> used(red.L, 0.0);
  std::vector<std::size_t> idx(K, 0), best_idx(K, 0);
  double best = -std::numeric_limits<double>::infinity();
  const auto tol = [&](std::size_t l) { return 1e-12 * (1.0 + std::abs(red.caps[l])); };

  auto recurse = [&](auto&& self, std::size_t k, double partial) -> void {
    if (k == last) {
      double room = static_cast<double>(count[last] - 1);
      for (std::size_t l = 0; l < red.L; ++l) {
        const double a = red.coeff(l, last);
        if (a > 0.0) room = std::min(room, std::floor((red.caps[l] - used[l] + tol(l)) / a / grid_step + 1e-9));
      }
      if (room < 0.0) return;
      const auto m = static_cast<std::size_t>(room);
      const double value = partial + prefix_best[m];
      if (value > best) {
        best = value;
        best_idx = idx;
        best_idx[last] = prefix_arg[m];
      }
      return;
    }
    for (std::size_t j = 0; j < count[k]; ++j) {
      const double zk = static_cast<double>(j) * grid_step;
      bool feasible = true;
      for (std::size_t l = 0; l < red.L; ++l) {
        used[l] += red.coeff(l, k) * zk;
        if (used[l] > red.caps[l] + tol(l)) feasible = false;
      }
      if (feasible) {
        idx[k] = j;
        self(self, k + 1, partial + table[k][j]);
      }
      for (std::size_t l = 0; l < red.L; ++l) used[l] -= red.coeff(l, k) * zk;
      if (!feasible) break;
    }
  };
  recurse(recurse, 0, 0.0);

  std::vector<double> zr(K);
  for (std::size_t k = 0; k < K; ++k) zr[k] = static_cast<double>(best_idx[k]) * grid_step;
  OracleResult res;
  res.x = red.expand(zr);
  res.value = objective(inst, res.x);
  return res;
}

}  // namespace mech
