#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mech/allocation.hpp"
#include "mech/centralized.hpp"
#include "mech/error.hpp"
#include "mech/mechanism.hpp"
#include "mech/random.hpp"
#include "mech/taxation.hpp"

namespace mech {

struct Outcome {
  std::vector<double> x;
  TaxBreakdown taxes;
  std::vector<double> utilities;
};

inline Outcome evaluate(const Mechanism& mech, GameVariant variant, const MessageProfile& prof) {
  const Instance& inst = mech.instance();
  check_profile(inst, prof);
  Outcome o;
  o.x = allocation(mech, prof.y);
  o.taxes = taxes(inst, variant, o.x, prof);
  o.utilities.resize(inst.n_agents());
  for (std::size_t i = 0; i < inst.n_agents(); ++i)
    o.utilities[i] = inst.valuation(i).value(o.x[i]) - o.taxes.totals[i];
  return o;
}

/// v_i(x_i) - T_i under the variant.
inline double utility(const Mechanism& mech, GameVariant variant, const MessageProfile& prof, std::size_t i) {
  const Instance& inst = mech.instance();
  const std::vector<double> x = allocation(mech, prof.y);
  return inst.valuation(i).value(x[i]) - (agent_base_tax(inst, x, prof, i) - agent_rebate(inst, variant, prof, i));
}

/// v_i(x_i) - t_i: the part of every variant's utility that agent i's own
/// message controls. Rebates depend on the other agents only, so every
/// variant shares this payoff's argmax.
inline double controlled_payoff(const Mechanism& mech, const MessageProfile& prof, std::size_t i) {
  const Instance& inst = mech.instance();
  const std::vector<double> x = allocation(mech, prof.y);
  return inst.valuation(i).value(x[i]) - agent_base_tax(inst, x, prof, i);
}

/// Minimizer of (p - pbar)^2 + eta pbar p slack^2 over p >= 0, with the
/// slack taken at allocation x.
inline double best_response_price(const Instance& inst, std::span<const double> x, const MessageProfile& prof,
                                  std::size_t i, std::size_t l) {
  const double pb = pbar(inst, prof, i, l);
  const double slack = inst.cap(l) - inst.row_dot(l, x);
  return std::max(0.0, pb - 0.5 * inst.eta() * pb * slack * slack);
}

inline double best_response_price(const Mechanism& mech, const MessageProfile& prof, std::size_t i,
                                  std::size_t l) {
  return best_response_price(mech.instance(), allocation(mech, prof.y), prof, i, l);
}

struct Bracket {
  double lo = 0.0;
  double hi = 0.0;
};

namespace detail {

constexpr double kInvPhi = 0.6180339887498948482;

template <class F>
std::pair<double, double> maximize_on_piece(F&& f, double a, double b) {
  // Coarse scan on a grid that is uniform and geometric near a, so that both
  // wide brackets and optima just above the lower bound are resolved.
  std::vector<double> grid;
  constexpr int kUniform = 12;
  constexpr int kGeometric = 12;
  for (int k = 0; k <= kUniform; ++k) grid.push_back(a + (b - a) * k / kUniform);
  for (int k = 1; k < kGeometric; ++k) grid.push_back(a + (b - a) * std::pow(2.0, -k));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::size_t best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  std::vector<double> vals(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    vals[k] = f(grid[k]);
    if (vals[k] > best_val) best_val = vals[k], best = k;
  }
  double lo = grid[best > 0 ? best - 1 : 0];
  double hi = grid[std::min(best + 1, grid.size() - 1)];
  double x_best = grid[best];

  // Golden-section search on the cell around the best grid point.
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > 1e-10 * std::max(1.0, std::abs(lo))) {
    if (f1 >= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = f(x2);
    }
  }
  if (f1 > best_val) best_val = f1, x_best = x1;
  if (f2 > best_val) best_val = f2, x_best = x2;

  // Parabolic refinement through three points around the incumbent.
  const double h = 1e-6 * std::max(1.0, std::abs(x_best));
  if (x_best - h > a && x_best + h < b) {
    const double fm = f(x_best - h), f0 = best_val, fp = f(x_best + h);
    const double denom = fp - 2.0 * f0 + fm;
    if (denom < 0.0) {
      const double vertex = x_best - 0.5 * h * (fp - fm) / denom;
      if (std::abs(vertex - x_best) <= h && vertex > a && vertex < b) {
        const double fv = f(vertex);
        if (fv > best_val) best_val = fv, x_best = vertex;
      }
    }
  }
  return {x_best, best_val};
}

}  // namespace detail

/// Agent i's best demand against the others' messages, searched over the
/// bracket (default (d_i, D + 1]). The payoff is smooth on each side of the
/// demand at which the profile leaves the feasible set, so both pieces are
/// searched separately. The current demand is kept unless a candidate beats
/// it by more than a floating-point tie band.
inline double best_response_demand(const Mechanism& mech, const MessageProfile& prof, std::size_t i,
                                   std::optional<Bracket> bracket = std::nullopt) {
  const Instance& inst = mech.instance();
  check_profile(inst, prof);
  const double d_i = inst.d()[i];
  Bracket br = bracket.value_or(Bracket{d_i, inst.D() + 1.0});
  if (!std::isfinite(br.lo) || !std::isfinite(br.hi) || br.lo < d_i || !(br.hi > br.lo))
    throw BracketInvalid("bracket [" + std::to_string(br.lo) + ", " + std::to_string(br.hi) +
                         "] is not inside (d_i, inf) = (" + std::to_string(d_i) + ", inf)");
  const double a = br.lo + 1e-12 * (1.0 + std::abs(br.lo));
  const double b = br.hi;
  if (!(b > a)) throw BracketInvalid("bracket is empty");

  MessageProfile trial = prof;
  auto payoff = [&](double t) {
    trial.y[i] = t;
    return controlled_payoff(mech, trial, i);
  };

  std::vector<std::pair<double, double>> pieces;
  const double kink = demand_kink(mech, prof.y, i);
  if (kink > a && kink < b) {
    pieces.emplace_back(a, kink);
    pieces.emplace_back(kink, b);
  } else {
    pieces.emplace_back(a, b);
  }

  double best_y = prof.y[i];
  const bool current_in_bracket = prof.y[i] >= br.lo && prof.y[i] <= br.hi && prof.y[i] > d_i;
  const double current = current_in_bracket ? payoff(prof.y[i]) : -std::numeric_limits<double>::infinity();
  double best_val = current;
  for (const auto& [lo, hi] : pieces) {
    const auto [yk, vk] = detail::maximize_on_piece(payoff, lo, hi);
    if (vk > best_val) best_val = vk, best_y = yk;
  }
  if (current_in_bracket && best_val <= current + 1e-14 * std::max(1.0, std::abs(current))) return prof.y[i];
  return best_y;
}

/// Best responses under a variant. The variant's rebate does not depend on
/// agent i's own message, so the argmax is that of the controlled payoff;
/// the variant only contributes its preconditions.
inline double best_response_price(const Mechanism& mech, GameVariant variant, const MessageProfile& prof,
                                  std::size_t i, std::size_t l) {
  check_variant(mech.instance(), variant);
  return best_response_price(mech, prof, i, l);
}

inline double best_response_demand(const Mechanism& mech, GameVariant variant, const MessageProfile& prof,
                                   std::size_t i, std::optional<Bracket> bracket = std::nullopt) {
  check_variant(mech.instance(), variant);
  return best_response_demand(mech, prof, i, bracket);
}

// --- dynamics ---------------------------------------------------------------

enum class PriceRule {
  BestResponse,  // p <- argmin of own price tax
  Tatonnement,   // best response plus a clamped step toward clearing price-taking demand
};

struct Schedule {
  PriceRule price_rule = PriceRule::Tatonnement;
  double gamma = 1.0;
  double step_init = 0.05;
  double step_min = 1e-15;
  double step_max = 1.0;
  double step_grow = 1.2;
  double step_shrink = 0.5;
  bool stay_feasible = true;  // cap each demand step at the feasible-set boundary
};

struct StopRule {
  std::size_t max_rounds = 100000;
  double tol = 1e-8;
  std::size_t record_every = 1;  // the final round is always recorded
};

struct Snapshot {
  std::size_t round = 0;
  MessageProfile profile;
  std::vector<double> x;
  std::vector<double> taxes;
  std::vector<double> utilities;
  std::vector<double> slacks;  // c_l - A_l^T x
  double max_violation = 0.0;
  double budget_imbalance = 0.0;
  double max_change = 0.0;
};

struct RunTrace {
  std::vector<Snapshot> snapshots;
  bool converged = false;
  std::size_t rounds = 0;
  MessageProfile final_profile;
  std::vector<double> final_x;
};

/// y = d + 0.1, all prices zero.
inline MessageProfile default_init(const Instance& inst) {
  std::vector<double> y = inst.d();
  for (double& v : y) v += 0.1;
  return MessageProfile(std::move(y), inst.n_constraints());
}

inline Snapshot make_snapshot(const Mechanism& mech, GameVariant variant, const MessageProfile& prof,
                              std::size_t round, double change) {
  const Instance& inst = mech.instance();
  Outcome o = evaluate(mech, variant, prof);
  Snapshot s;
  s.round = round;
  s.profile = prof;
  s.slacks.resize(inst.n_constraints());
  for (std::size_t l = 0; l < inst.n_constraints(); ++l) s.slacks[l] = inst.cap(l) - inst.row_dot(l, o.x);
  s.max_violation = max_violation(inst, o.x);
  s.budget_imbalance = total_tax(o.taxes);
  s.taxes = std::move(o.taxes.totals);
  s.utilities = std::move(o.utilities);
  s.x = std::move(o.x);
  s.max_change = change;
  return s;
}

namespace detail {

/// argmax over [0, cap] of v(x) - q x.
inline double price_taking_demand(const Valuation& v, double q, double cap) {
  double x = cap;
  switch (v.family) {
    case ValuationFamily::LogShift:
      if (q > 0.0) x = (v.a * v.b / q - 1.0) / v.b;
      break;
    case ValuationFamily::Power:
      if (q > 0.0) x = std::pow(q / (v.a * v.b), 1.0 / (v.b - 1.0));
      break;
    case ValuationFamily::QuadCap: x = v.b - q / v.a; break;
  }
  return std::clamp(x, 0.0, cap);
}

/// A_l^T x^d - c_l, where x^d is every agent's price-taking demand at the
/// mean quoted prices of its constraints.
inline double demand_excess(const Instance& inst, const MessageProfile& prof, std::size_t l) {
  const auto& idx = inst.index();
  double excess = -inst.cap(l);
  for (std::size_t j : idx.agents_on_constraint[l]) {
    double q = 0.0;
    for (std::size_t k : idx.constraints_of_agent[j]) {
      double mean = 0.0;
      for (std::size_t m : idx.agents_on_constraint[k]) mean += prof.price(m, k);
      q += inst.coeff(k, j) * mean / static_cast<double>(idx.agents_on_constraint[k].size());
    }
    excess += inst.coeff(l, j) * price_taking_demand(inst.valuation(j), q, inst.D());
  }
  return excess;
}

}  // namespace detail

/// Round-robin dynamics: each agent in index order updates its prices, then
/// its demand. Converged when no message moves by more than stop.tol in a
/// full round.
inline RunTrace run_dynamics(const Mechanism& mech, GameVariant variant, MessageProfile init,
                             const Schedule& schedule = {}, const StopRule& stop = {}) {
  const Instance& inst = mech.instance();
  check_profile(inst, init);
  (void)allocation(mech, init.y);  // rejects demands outside the message space
  const std::size_t L = inst.n_constraints();
  RunTrace trace;
  MessageProfile prof = std::move(init);
  std::vector<double> step(L, schedule.step_init);
  std::vector<int> last_sign(L, 0);

  for (std::size_t round = 1; round <= stop.max_rounds; ++round) {
    double change = 0.0;
    for (std::size_t i = 0; i < inst.n_agents(); ++i) {
      const std::vector<double> x = allocation(mech, prof.y);
      // All of agent i's quotes are computed from the same profile, so the
      // order of its constraints does not matter.
      const auto& rows = inst.index().constraints_of_agent[i];
      std::vector<double> quotes(rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const std::size_t l = rows[k];
        quotes[k] = best_response_price(inst, x, prof, i, l);
        if (schedule.price_rule == PriceRule::Tatonnement) {
          const double excess = detail::demand_excess(inst, prof, l);
          quotes[k] = std::max(0.0, quotes[k] + std::clamp(schedule.gamma * excess, -step[l], step[l]));
        }
      }
      for (std::size_t k = 0; k < rows.size(); ++k) {
        change = std::max(change, std::abs(quotes[k] - prof.price(i, rows[k])));
        prof.price(i, rows[k]) = quotes[k];
      }
      std::optional<Bracket> br;
      if (schedule.stay_feasible) {
        const double kink = demand_kink(mech, prof.y, i);
        const double lo = inst.d()[i];
        if (kink > lo + 1e-9 * (1.0 + lo)) br = Bracket{lo, std::min(kink, inst.D() + 1.0)};
      }
      const double y = best_response_demand(mech, prof, i, br);
      change = std::max(change, std::abs(y - prof.y[i]));
      prof.y[i] = y;
    }
    if (schedule.price_rule == PriceRule::Tatonnement) {
      for (std::size_t l = 0; l < L; ++l) {
        const double excess = detail::demand_excess(inst, prof, l);
        const int sign = std::abs(excess) <= 1e-15 * (1.0 + std::abs(inst.cap(l))) ? 0 : (excess > 0 ? 1 : -1);
        if (sign * last_sign[l] > 0)
          step[l] = std::min(step[l] * schedule.step_grow, schedule.step_max);
        else if (sign * last_sign[l] < 0)
          step[l] = std::max(step[l] * schedule.step_shrink, schedule.step_min);
        if (sign != 0) last_sign[l] = sign;
      }
    }
    trace.rounds = round;
    trace.converged = change < stop.tol;
    const bool last = trace.converged || round == stop.max_rounds;
    if (last || (stop.record_every > 0 && round % stop.record_every == 0))
      trace.snapshots.push_back(make_snapshot(mech, variant, prof, round, change));
    if (trace.converged) break;
  }
  trace.final_x = allocation(mech, prof.y);
  trace.final_profile = std::move(prof);
  return trace;
}

// --- equilibrium construction and verification ------------------------------

/// Demands equal to the optimum and every price equal to its multiplier.
inline MessageProfile construct_candidate_ne(const Instance& inst, const CentralizedSolution& sol) {
  if (sol.x_star.size() != inst.n_agents() || sol.lambda_star.size() != inst.n_constraints())
    throw DimensionMismatch("solution does not match the instance");
  for (std::size_t i = 0; i < inst.n_agents(); ++i)
    if (!(sol.x_star[i] > inst.d()[i]))
      throw A2Violation("x*_" + std::to_string(i) + " = " + std::to_string(sol.x_star[i]) +
                        " is not above d_i = " + std::to_string(inst.d()[i]));
  MessageProfile prof(sol.x_star, inst.n_constraints());
  for (std::size_t i = 0; i < inst.n_agents(); ++i)
    for (std::size_t l : inst.index().constraints_of_agent[i]) prof.price(i, l) = sol.lambda_star[l];
  return prof;
}

struct Deviation {
  std::string kind = "none";  // price, demand, joint, sampled
  std::optional<std::size_t> constraint;
  double gain = 0.0;
  double y = 0.0;
  std::vector<double> prices;  // agent's deviating prices, indexed by l
};

struct NEReport {
  bool passed = true;
  double eps = 0.0;
  std::vector<double> max_gain;        // per agent
  std::vector<Deviation> best;         // per agent, the most profitable deviation found
  std::vector<double> utilities;       // per agent at the profile
  std::vector<double> price_spread;    // per constraint, max - min quoted price
  double max_price_spread = 0.0;
  double cs_residual = 0.0;            // max_l |mean price * (c_l - A_l^T x)|
  double stationarity = 0.0;           // max_i |v_i'(x_i) - sum_l A_li mean price|
  std::vector<double> ir_margin;       // u_i - v_i(0)
  double min_ir_margin = 0.0;

  double max_gain_overall() const {
    double g = -std::numeric_limits<double>::infinity();
    for (double v : max_gain) g = std::max(g, v);
    return g;
  }
};

struct VerifyOptions {
  double eps = 1e-6;
  std::size_t deviations = 200;
  std::uint64_t seed = 0;
};

/// Epsilon-Nash check: exact coordinate best responses plus sampled joint
/// deviations per agent (each agent has its own seeded stream, so the result
/// does not depend on evaluation order).
inline NEReport verify_epsilon_ne(const Mechanism& mech, GameVariant variant, const MessageProfile& prof,
                                  const VerifyOptions& opt = {}) {
  const Instance& inst = mech.instance();
  check_profile(inst, prof);
  const std::size_t n = inst.n_agents();
  const std::size_t L = inst.n_constraints();
  NEReport rep;
  rep.eps = opt.eps;
  rep.max_gain.assign(n, -std::numeric_limits<double>::infinity());
  rep.best.resize(n);
  rep.utilities.resize(n);
  rep.ir_margin.resize(n);

  const Outcome base = evaluate(mech, variant, prof);
  for (std::size_t i = 0; i < n; ++i) {
    rep.utilities[i] = base.utilities[i];
    rep.ir_margin[i] = base.utilities[i] - inst.valuation(i).value(0.0);
  }
  rep.min_ir_margin = n ? *std::min_element(rep.ir_margin.begin(), rep.ir_margin.end()) : 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const double u0 = base.utilities[i];
    const auto& rows = inst.index().constraints_of_agent[i];
    auto record = [&](const MessageProfile& dev, std::string kind, std::optional<std::size_t> l) {
      const double gain = utility(mech, variant, dev, i) - u0;
      if (gain > rep.max_gain[i]) {
        rep.max_gain[i] = gain;
        Deviation d;
        d.kind = std::move(kind);
        d.constraint = l;
        d.gain = gain;
        d.y = dev.y[i];
        d.prices.assign(L, 0.0);
        for (std::size_t r : rows) d.prices[r] = dev.price(i, r);
        rep.best[i] = std::move(d);
      }
    };

    for (std::size_t l : rows) {
      MessageProfile dev = prof;
      dev.price(i, l) = best_response_price(inst, base.x, prof, i, l);
      record(dev, "price", l);
    }
    {
      MessageProfile dev = prof;
      dev.y[i] = best_response_demand(mech, prof, i);
      record(dev, "demand", std::nullopt);
      for (std::size_t l : rows) dev.price(i, l) = best_response_price(inst, allocation(mech, dev.y), dev, i, l);
      record(dev, "joint", std::nullopt);
    }

    Rng rng(mix_seed(opt.seed, i));
    const double y_hi = inst.D() + 1.0;
    for (std::size_t s = 0; s < opt.deviations; ++s) {
      MessageProfile dev = prof;
      const auto mode = rng.below(3);
      if (mode != 1) {
        dev.y[i] = rng.coin() ? rng.uniform(inst.d()[i], y_hi) : rng.log_uniform(inst.d()[i], y_hi);
        if (!(dev.y[i] > inst.d()[i])) dev.y[i] = prof.y[i];
      }
      if (mode != 0) {
        for (std::size_t l : rows) {
          const double ref = std::max(prof.price(i, l), pbar(inst, prof, i, l));
          dev.price(i, l) = rng.coin() ? ref * rng.uniform(0.0, 2.0) : rng.uniform(0.0, 2.0 * ref + 1e-3);
        }
      }
      record(dev, "sampled", std::nullopt);
    }
    if (rep.max_gain[i] > opt.eps) rep.passed = false;
  }

  rep.price_spread.assign(L, 0.0);
  std::vector<double> mean_price(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& agents = inst.index().agents_on_constraint[l];
    if (agents.empty()) continue;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
    for (std::size_t j : agents) {
      lo = std::min(lo, prof.price(j, l));
      hi = std::max(hi, prof.price(j, l));
      sum += prof.price(j, l);
    }
    rep.price_spread[l] = hi - lo;
    rep.max_price_spread = std::max(rep.max_price_spread, hi - lo);
    mean_price[l] = sum / static_cast<double>(agents.size());
    rep.cs_residual = std::max(rep.cs_residual, std::abs(mean_price[l] * (inst.cap(l) - inst.row_dot(l, base.x))));
  }
  for (std::size_t i = 0; i < n; ++i) {
    double r = inst.valuation(i).deriv(base.x[i]);
    for (std::size_t l : inst.index().constraints_of_agent[i]) r -= inst.coeff(l, i) * mean_price[l];
    rep.stationarity = std::max(rep.stationarity, std::abs(r));
  }
  return rep;
}

}  // namespace mech
