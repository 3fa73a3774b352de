#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mech/allocation.hpp"
#include "mech/centralized.hpp"
#include "mech/error.hpp"
#include "mech/game.hpp"
#include "mech/random.hpp"
#include "mech/scenario.hpp"
#include "mech/taxation.hpp"

namespace mech {

struct SuiteReport {
  std::string name;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double max_violation = 0.0;  // in units of the suite's tolerance scale
  double tolerance = 0.0;
  std::size_t failures = 0;
  std::vector<std::uint64_t> failing_seeds;  // first few subseeds that failed

  bool passed() const { return failures == 0; }
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"feasibility",         "budget_offeq",          "budget_ne",
                                              "rebate_independence", "valuation_derivatives", "oracle_equivalence"};
  return names;
}

namespace detail {

struct SuiteState {
  SuiteReport report;
  void observe(double violation, std::uint64_t subseed) {
    report.max_violation = std::max(report.max_violation, violation);
    if (!(violation <= report.tolerance)) {
      ++report.failures;
      if (report.failing_seeds.size() < 16) report.failing_seeds.push_back(subseed);
    }
  }
};

/// Small fixed pools of generated instances per class.
inline std::vector<Mechanism> mechanism_pool(const ScenarioParams& base, std::uint64_t seed,
                                             const std::vector<std::size_t>& sizes, bool unicast_links = true) {
  std::vector<Mechanism> pool;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    ScenarioParams sp = base;
    if (sp.kind == ScenarioKind::Unicast) {
      sp.n_agents = sizes[k];
      if (unicast_links) sp.n_links = 1 + k % 4;
    } else if (sp.kind == ScenarioKind::PublicGood) {
      sp.n_agents = sizes[k];
    } else {
      sp.group_sizes = std::vector<std::size_t>(1 + k % 3, sizes[k]);
    }
    pool.emplace_back(generate(sp, mix_seed(seed, 1000 + k)).instance);
  }
  return pool;
}

/// Demand strictly above d and inside the feasible set: d + t r with t drawn
/// below the largest feasible step (or exactly on it when `on_face`).
inline std::vector<double> feasible_demand(const Instance& inst, Rng& rng, bool on_face, bool group_constant) {
  const std::size_t n = inst.n_agents();
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = rng.uniform(0.05, 1.0);
  if (group_constant)
    for (const auto& g : inst.equality_groups())
      for (std::size_t i : g) r[i] = r[g.front()];
  double t_max = inst.D();
  for (std::size_t l = 0; l < inst.n_constraints(); ++l) {
    const double ar = inst.row_dot(l, r);
    if (ar > 1e-12) t_max = std::min(t_max, (inst.cap(l) - inst.row_dot(l, inst.d())) / ar);
  }
  const double t = on_face ? t_max : t_max * rng.uniform(0.01, 1.0);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = inst.d()[i] + t * r[i];
  return y;
}

inline MessageProfile random_prices(const Instance& inst, std::vector<double> y, Rng& rng) {
  MessageProfile prof(std::move(y), inst.n_constraints());
  for (std::size_t l = 0; l < inst.n_constraints(); ++l) {
    const bool equal = rng.coin(0.2);
    const double common = rng.uniform(0.0, 3.0);
    for (std::size_t i : inst.index().agents_on_constraint[l]) prof.price(i, l) = equal ? common : rng.uniform(0.0, 3.0);
  }
  return prof;
}

inline double budget_violation(const TaxBreakdown& b) {
  return std::abs(total_tax(b)) / std::max(1.0, gross_tax_scale(b));
}

}  // namespace detail

/// Runs the named invariant over `samples` pseudorandom cases. Each case uses
/// its own subseed, reported when the case fails.
inline SuiteReport property_suite(const std::string& name, std::size_t samples, std::uint64_t seed) {
  if (std::find(suite_names().begin(), suite_names().end(), name) == suite_names().end())
    throw UnknownSuite("'" + name + "'");
  detail::SuiteState st;
  st.report.name = name;
  st.report.samples = samples;
  st.report.seed = seed;

  if (name == "feasibility") {
    // `samples` demands per instance class, each with violation <= 1e-9 and
    // identical allocations inside every equality group.
    st.report.tolerance = 1e-9;
    ScenarioParams uni, pg, lpg;
    uni.families = pg.families = lpg.families = FamilyMix::Mixed;
    pg.kind = ScenarioKind::PublicGood;
    lpg.kind = ScenarioKind::LocalPublicGoods;
    const std::vector<std::vector<Mechanism>> classes{
        detail::mechanism_pool(uni, seed, {2, 4, 6, 10}), detail::mechanism_pool(pg, seed, {2, 3, 5, 8}),
        detail::mechanism_pool(lpg, seed, {2, 3, 2, 4})};
    for (std::size_t c = 0; c < classes.size(); ++c) {
      for (std::size_t s = 0; s < samples; ++s) {
        const std::uint64_t sub = mix_seed(seed, c * samples + s);
        Rng rng(sub);
        const Mechanism& mech = classes[c][s % classes[c].size()];
        const Instance& inst = mech.instance();
        std::vector<double> y(inst.n_agents());
        for (std::size_t i = 0; i < y.size(); ++i) {
          y[i] = rng.uniform(inst.d()[i], inst.d()[i] + 100.0);
          if (!(y[i] > inst.d()[i])) y[i] = inst.d()[i] + 1e-6;
        }
        const std::vector<double> x = allocation(mech, y);
        double v = max_violation(inst, x);
        for (const auto& g : inst.equality_groups())
          for (std::size_t i : g)
            if (x[i] != x[g.front()]) v = std::max(v, 1.0);  // groups must match exactly
        for (double xi : x)
          if (!(xi >= 0.0)) v = std::max(v, 1.0);
        st.observe(v, sub);
      }
    }
  } else if (name == "budget_offeq") {
    st.report.tolerance = 1e-9;
    ScenarioParams sp;
    sp.offeq = true;
    sp.families = FamilyMix::Mixed;
    const auto pool = detail::mechanism_pool(sp, seed, {5, 6, 8, 10, 7, 9});
    for (std::size_t s = 0; s < samples; ++s) {
      const std::uint64_t sub = mix_seed(seed, s);
      Rng rng(sub);
      const Mechanism& mech = pool[s % pool.size()];
      const Instance& inst = mech.instance();
      const MessageProfile prof =
          detail::random_prices(inst, detail::feasible_demand(inst, rng, rng.coin(0.25), false), rng);
      st.observe(detail::budget_violation(sbb_offeq_tax(inst, allocation(mech, prof.y), prof)), sub);
    }
  } else if (name == "budget_ne") {
    // Equal prices per constraint; positive only where the allocation binds.
    st.report.tolerance = 1e-9;
    ScenarioParams uni, pg, lpg;
    pg.kind = ScenarioKind::PublicGood;
    lpg.kind = ScenarioKind::LocalPublicGoods;
    std::vector<Mechanism> pool = detail::mechanism_pool(uni, seed, {2, 3, 5, 8});
    for (auto& m : detail::mechanism_pool(pg, seed, {2, 3, 6})) pool.push_back(std::move(m));
    for (auto& m : detail::mechanism_pool(lpg, seed, {2, 3})) pool.push_back(std::move(m));
    for (std::size_t s = 0; s < samples; ++s) {
      const std::uint64_t sub = mix_seed(seed, s);
      Rng rng(sub);
      const Mechanism& mech = pool[s % pool.size()];
      const Instance& inst = mech.instance();
      MessageProfile prof(detail::feasible_demand(inst, rng, true, true), inst.n_constraints());
      const std::vector<double> x = allocation(mech, prof.y);
      for (std::size_t l = 0; l < inst.n_constraints(); ++l) {
        const double slack = inst.cap(l) - inst.row_dot(l, x);
        const bool binding = std::abs(slack) <= 1e-12 * (1.0 + std::abs(inst.cap(l)));
        const double p = binding ? rng.uniform(0.0, 3.0) : 0.0;
        for (std::size_t i : inst.index().agents_on_constraint[l]) prof.price(i, l) = p;
      }
      st.observe(detail::budget_violation(sbb_ne_tax(inst, x, prof)), sub);
    }
  } else if (name == "rebate_independence") {
    // Perturbing agent i's own message leaves every rebate of i bitwise equal.
    st.report.tolerance = 0.0;
    ScenarioParams uni, off, pg;
    off.offeq = true;
    pg.kind = ScenarioKind::PublicGood;
    std::vector<Mechanism> pool = detail::mechanism_pool(uni, seed, {2, 3, 6});
    const std::size_t n_ne_only = pool.size() + 2;
    for (auto& m : detail::mechanism_pool(pg, seed, {3, 4})) pool.push_back(std::move(m));
    for (auto& m : detail::mechanism_pool(off, seed, {5, 8, 10})) pool.push_back(std::move(m));
    for (std::size_t s = 0; s < samples; ++s) {
      const std::uint64_t sub = mix_seed(seed, s);
      Rng rng(sub);
      const std::size_t which = s % pool.size();
      const Instance& inst = pool[which].instance();
      const MessageProfile prof = detail::random_prices(inst, detail::feasible_demand(inst, rng, false, false), rng);
      const std::size_t i = rng.below(inst.n_agents());
      MessageProfile pert = prof;
      pert.y[i] = inst.d()[i] + rng.uniform(1e-3, 50.0);
      for (std::size_t l : inst.index().constraints_of_agent[i]) pert.price(i, l) = rng.uniform(0.0, 10.0);
      double v = 0.0;
      for (std::size_t l : inst.index().constraints_of_agent[i]) {
        if (rebate_ne(inst, prof, i, l) != rebate_ne(inst, pert, i, l)) v = 1.0;
        if (which >= n_ne_only && rebate_offeq(inst, prof, i, l) != rebate_offeq(inst, pert, i, l)) v = 1.0;
      }
      st.observe(v, sub);
    }
  } else if (name == "valuation_derivatives") {
    // Central differences on a log grid in (0, D]; relative error with a
    // floor of 1 (QuadCap has a stationary point), and v'' < 0.
    st.report.tolerance = 1e-6;
    for (std::size_t s = 0; s < samples; ++s) {
      const std::uint64_t sub = mix_seed(seed, s);
      Rng rng(sub);
      ScenarioParams sp;
      sp.families = FamilyMix::Mixed;
      const Valuation v = detail::draw_valuation(sp, rng);
      const double D = 100.0;
      double worst = 0.0;
      for (int g = 0; g <= 40; ++g) {
        const double x = D * std::pow(10.0, -6.0 * (40 - g) / 40.0);
        const double h = 1e-4 * x;
        const double fd1 = (v.value(x + h) - v.value(x - h)) / (2.0 * h);
        const double fd2 = (v.deriv(x + h) - v.deriv(x - h)) / (2.0 * h);
        worst = std::max(worst, std::abs(fd1 - v.deriv(x)) / std::max(1.0, std::abs(v.deriv(x))));
        worst = std::max(worst, std::abs(fd2 - v.second(x)) / std::max(1.0, std::abs(v.second(x))));
        if (!(v.second(x) < 0.0)) worst = std::max(worst, 1.0);
      }
      st.observe(worst, sub);
    }
  } else {  // oracle_equivalence
    // |obj(x*) - obj(oracle)| <= Lip * step with the local Lipschitz bound
    // sum_k V_k'(x*_k - step) of rounding x* down onto the grid.
    st.report.tolerance = 1.0;
    constexpr double step = 1e-3;
    for (std::size_t s = 0; s < samples; ++s) {
      const std::uint64_t sub = mix_seed(seed, s);
      Rng rng(sub);
      ScenarioParams sp;
      sp.families = FamilyMix::Mixed;
      sp.D = 10.0;
      sp.cap_hi = 3.0;
      if (rng.coin(0.25)) {
        sp.kind = ScenarioKind::PublicGood;
        sp.n_agents = 2 + rng.below(2);
      } else {
        sp.n_agents = 2 + rng.below(2);
        sp.n_links = 1 + rng.below(2);
      }
      const Instance inst = generate(sp, sub).instance;
      const CentralizedSolution sol = solve(inst);
      const OracleResult orc = brute_force_oracle(inst, step);
      const ReducedInstance red = reduce_equalities(inst);
      double lip = 0.0;
      for (std::size_t k = 0; k < red.K; ++k) {
        const double z = std::max(0.0, sol.x_star[red.representative[k]] - step);
        for (std::size_t i : inst.equality_groups()[k]) lip += std::abs(inst.valuation(i).deriv(z));
      }
      const double gap = objective(inst, sol.x_star) - orc.value;
      const double bound = lip * step + 1e-12;
      const double v = std::max(std::abs(gap) / bound, orc.value > objective(inst, sol.x_star) + 1e-9 ? 2.0 : 0.0);
      st.observe(v, sub);
    }
  }
  return st.report;
}

}  // namespace mech
