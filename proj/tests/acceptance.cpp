// Acceptance checks AC1..AC8. One PASS/FAIL line per criterion; the exit
// status is nonzero when any criterion fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"

using namespace mech;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::string detail;
};

// Formats without std::format (not in this toolchain).
template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

/// 20 unicast instances (seeds 0..19, N <= 10, L <= 6) and 10 local public
/// goods instances (seeds 20..29).
std::vector<Instance> dynamics_instances() {
  std::vector<Instance> out;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    ScenarioParams sp;
    sp.families = seed % 2 ? FamilyMix::Mixed : FamilyMix::Log;
    if (seed < 20) {
      sp.n_agents = 2 + seed % 9;
      sp.n_links = 1 + seed % 6;
    } else {
      sp.kind = ScenarioKind::LocalPublicGoods;
      sp.group_sizes = {2 + seed % 3, 2 + (seed / 3) % 2};
    }
    out.push_back(generate(sp, seed).instance);
  }
  return out;
}

std::vector<GameVariant> variants_for(const NamedScenario& s) {
  if (s.offeq) return {GameVariant::Base, GameVariant::SbbNE, GameVariant::SbbOffEq};
  return {GameVariant::Base, GameVariant::SbbNE};
}

Verdict ac1(const std::vector<Instance>& instances) {
  const auto t0 = Clock::now();
  Verdict o;
  std::size_t ok = 0;
  double worst_x = 0.0, worst_p = 0.0;
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const Instance& inst = instances[k];
    const Mechanism mech(inst);
    const CentralizedSolution sol = solve(inst);
    StopRule stop;
    stop.record_every = 0;
    const RunTrace tr = run_dynamics(mech, GameVariant::Base, default_init(inst), {}, stop);
    const OptimumMatch m = match_optimum(inst, sol, tr.final_profile, tr.final_x);
    worst_x = std::max(worst_x, m.x_error);
    worst_p = std::max(worst_p, m.price_error);
    if (tr.converged && m.within(1e-3))
      ++ok;
    else
      o.detail += fmt(" [instance %zu: converged=%d x_err=%.2e p_err=%.2e]", k, tr.converged, m.x_error, m.price_error);
  }
  const double t = seconds_since(t0);
  o.pass = ok == instances.size() && t <= 60.0;
  o.detail = fmt("%zu/%zu converged and matched, max x_err %.2e, max price_err %.2e, %.2fs (limit 60s)", ok,
                 instances.size(), worst_x, worst_p, t) +
             o.detail;
  return o;
}

struct Certified {
  const NamedScenario* scenario;
  GameVariant variant;
  MessageProfile profile;
  NEReport report;
};

Verdict ac2(const std::vector<NamedScenario>& bundled, std::vector<Certified>& certified) {
  const auto t0 = Clock::now();
  Verdict o;
  std::size_t runs = 0, ok = 0;
  double worst = -1.0;
  for (const NamedScenario& s : bundled) {
    const Mechanism mech(s.instance);
    const MessageProfile ne = construct_candidate_ne(s.instance, solve(s.instance));
    for (GameVariant v : variants_for(s)) {
      ++runs;
      VerifyOptions opt;
      opt.eps = 1e-6;
      const NEReport rep = verify_epsilon_ne(mech, v, ne, opt);
      worst = std::max(worst, rep.max_gain_overall());
      if (rep.passed) {
        ++ok;
        certified.push_back({&s, v, ne, rep});
      } else {
        o.detail += fmt(" [%s/%s gain %.2e]", s.name.c_str(), to_string(v), rep.max_gain_overall());
      }
    }
  }
  const double t = seconds_since(t0);
  o.pass = ok == runs && t <= 30.0;
  o.detail = fmt("%zu/%zu scenario-variant pairs certified at eps 1e-6, max gain %.2e, %.2fs (limit 30s)", ok, runs,
                 worst, t) +
             o.detail;
  return o;
}

Verdict ac3() {
  const auto t0 = Clock::now();
  const SuiteReport r = property_suite("feasibility", 100000, 3);
  const double t = seconds_since(t0);
  return {r.passed() && t <= 30.0,
          fmt("1e5 demands per class x 3 classes, max violation %.2e, %zu failures, %.2fs (limit 30s)",
              r.max_violation, r.failures, t)};
}

Verdict ac4(const std::vector<Certified>& certified) {
  const auto t0 = Clock::now();
  const SuiteReport r = property_suite("budget_offeq", 10000, 4);
  double worst_ne = 0.0;
  std::size_t n_ne = 0;
  for (const Certified& c : certified) {
    if (c.variant != GameVariant::SbbNE) continue;
    const Instance& inst = c.scenario->instance;
    const Mechanism mech(inst);
    const TaxBreakdown tb = sbb_ne_tax(inst, allocation(mech, c.profile.y), c.profile);
    worst_ne = std::max(worst_ne, std::abs(total_tax(tb)) / std::max(1.0, gross_tax_scale(tb)));
    ++n_ne;
  }
  const double t = seconds_since(t0);
  return {r.passed() && n_ne > 0 && worst_ne <= 1e-9 && t <= 30.0,
          fmt("off-equilibrium: 1e4 profiles, max |sum T|/max(1,gross) %.2e; at %zu certified equilibria: %.2e; "
              "%.2fs (limit 30s)",
              r.max_violation, n_ne, worst_ne, t)};
}

struct PoolEntry {
  Instance inst;
  CentralizedSolution sol;
  MessageProfile ne;
};

/// Bundled scenarios plus a few extra unicast draws with spare links, so that
/// slack constraints are common.
std::vector<PoolEntry> equilibrium_pool(const std::vector<NamedScenario>& bundled) {
  std::vector<PoolEntry> pool;
  for (const NamedScenario& s : bundled) {
    const CentralizedSolution sol = solve(s.instance);
    pool.push_back({s.instance, sol, construct_candidate_ne(s.instance, sol)});
  }
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    ScenarioParams sp;
    sp.n_agents = 3 + seed % 4;
    sp.n_links = 3 + seed % 3;
    sp.families = FamilyMix::Mixed;
    const Instance inst = generate(sp, 100 + seed).instance;
    const CentralizedSolution sol = solve(inst);
    pool.push_back({inst, sol, construct_candidate_ne(inst, sol)});
  }
  return pool;
}

std::vector<std::size_t> slack_rows(const Instance& inst, const std::vector<double>& x) {
  std::vector<std::size_t> rows;
  for (std::size_t l = 0; l < inst.n_constraints(); ++l)
    if (inst.cap(l) - oracle::row_dot(inst, l, x) > 1e-3 * (1.0 + std::abs(inst.cap(l)))) rows.push_back(l);
  return rows;
}

Verdict ac5(const std::vector<PoolEntry>& pool) {
  const auto t0 = Clock::now();
  Verdict o;
  std::vector<std::size_t> with_slack;
  for (std::size_t k = 0; k < pool.size(); ++k)
    if (!slack_rows(pool[k].inst, pool[k].sol.x_star).empty()) with_slack.push_back(k);
  if (with_slack.empty()) return {false, "no pool instance has a slack constraint at its optimum"};

  std::size_t n_disagree = 0, n_slack = 0, missed = 0;
  double min_ratio = std::numeric_limits<double>::infinity(), min_slack_gain = min_ratio;
  Rng rng(5);
  for (std::size_t s = 0; s < 1000; ++s) {
    VerifyOptions opt;
    opt.seed = s;
    opt.deviations = 50;
    const GameVariant v = s % 4 < 2 ? GameVariant::Base : GameVariant::SbbNE;
    if (s % 2 == 0) {
      // One agent quotes away from the others' mean on one row.
      const PoolEntry& e = pool[rng.below(pool.size())];
      const Mechanism mech(e.inst);
      const std::size_t i = rng.below(e.inst.n_agents());
      const auto& rows = e.inst.index().constraints_of_agent[i];
      const std::size_t l = rows[rng.below(rows.size())];
      MessageProfile prof = e.ne;
      const double pb = oracle::pbar(e.inst, prof, i, l);
      double delta = rng.uniform(0.05, 1.0);
      if (rng.coin() && pb - delta >= 0.0) delta = -delta;
      prof.price(i, l) = pb + delta;
      const NEReport rep = verify_epsilon_ne(mech, v, prof, opt);
      const double bound = delta * delta;
      min_ratio = std::min(min_ratio, rep.max_gain[i] / bound);
      if (!(rep.max_gain[i] >= bound * (1.0 - 1e-9)) || rep.passed) ++missed;
      ++n_disagree;
    } else {
      // Every agent on a slack row quotes the same positive price.
      const PoolEntry& e = pool[with_slack[rng.below(with_slack.size())]];
      const Mechanism mech(e.inst);
      const auto rows = slack_rows(e.inst, e.sol.x_star);
      const std::size_t l = rows[rng.below(rows.size())];
      MessageProfile prof = e.ne;
      const double p = rng.uniform(0.05, 2.0);
      for (std::size_t j : e.inst.index().agents_on_constraint[l]) prof.price(j, l) = p;
      const NEReport rep = verify_epsilon_ne(mech, v, prof, opt);
      double gain = -std::numeric_limits<double>::infinity();
      for (std::size_t j : e.inst.index().agents_on_constraint[l]) gain = std::max(gain, rep.max_gain[j]);
      min_slack_gain = std::min(min_slack_gain, gain);
      if (!(gain > 0.0)) ++missed;
      ++n_slack;
    }
  }
  const double t = seconds_since(t0);
  o.pass = missed == 0;
  o.detail = fmt("%zu disagreement profiles (min gain/(p_i-pbar)^2 = %.6f), %zu slack-price profiles (min gain "
                 "%.2e), %zu false negatives, %.2fs",
                 n_disagree, min_ratio, n_slack, min_slack_gain, missed, t);
  return o;
}

Verdict ac6(const std::vector<Certified>& certified) {
  Verdict o;
  double worst_base = std::numeric_limits<double>::infinity(), worst_off = worst_base;
  std::size_t n_off = 0;
  for (const Certified& c : certified) {
    const double m = c.report.min_ir_margin;
    if (c.variant == GameVariant::SbbOffEq) {
      ++n_off;
      worst_off = std::min(worst_off, m);
      if (!(m > 0.0)) o.pass = false;
    } else {
      worst_base = std::min(worst_base, m);
      if (!(m >= -1e-8)) o.pass = false;
    }
    if (!o.pass && o.detail.empty())
      o.detail = fmt(" [first failure: %s/%s margin %.3e]", c.scenario->name.c_str(), to_string(c.variant), m);
  }
  if (n_off == 0) o.pass = false;
  o.detail = fmt("%zu certified equilibria, min IR margin Base/SbbNE %.4e, SbbOffEq %.4e over %zu", certified.size(),
                 worst_base, worst_off, n_off) +
             o.detail;
  return o;
}

/// Objective gap in units of the largest change one grid step can cause.
double oracle_gap(const Instance& inst, const CentralizedSolution& sol, double step) {
  const OracleResult orc = brute_force_oracle(inst, step);
  const ReducedInstance red = reduce_equalities(inst);
  double lip = 0.0;
  for (std::size_t k = 0; k < red.K; ++k) {
    const double z = std::max(0.0, sol.x_star[red.representative[k]] - step);
    for (std::size_t i : inst.equality_groups()[k]) lip += std::abs(inst.valuation(i).deriv(z));
  }
  const double obj = oracle::objective(inst, sol.x_star);
  if (orc.value > obj + 1e-9) return std::numeric_limits<double>::infinity();
  return (obj - orc.value) / (lip * step + 1e-12);
}

Verdict ac7(const std::vector<NamedScenario>& bundled, const std::vector<Instance>& dyn) {
  Verdict o;
  std::vector<const Instance*> all;
  for (const NamedScenario& s : bundled) all.push_back(&s.instance);
  for (const Instance& inst : dyn) all.push_back(&inst);
  double worst_kkt = 0.0, worst_gap = 0.0;
  std::size_t n_oracle = 0;
  for (const Instance* inst : all) {
    const CentralizedSolution sol = solve(*inst);
    worst_kkt = std::max(worst_kkt, sol.residuals.max());
    if (inst->n_agents() <= 3) {
      worst_gap = std::max(worst_gap, oracle_gap(*inst, sol, 1e-3));
      ++n_oracle;
    }
  }
  const CentralizedSolution c = solve(fixtures::canonical());
  const double canon = std::max({std::abs(c.x_star[0] - 0.5), std::abs(c.x_star[1] - 0.5),
                                 std::abs(c.lambda_star[0] - 2.0 / 3.0)});
  o.pass = worst_kkt <= 1e-8 && worst_gap <= 1.0 && n_oracle > 0 && canon <= 1e-6;
  o.detail = fmt("max KKT residual %.2e over %zu instances; oracle gap %.3f Lipschitz steps (limit 1) on %zu "
                 "instances with N<=3; canonical error %.2e",
                 worst_kkt, all.size(), worst_gap, n_oracle, canon);
  return o;
}

Verdict ac8(const std::vector<NamedScenario>& bundled) {
  const auto t0 = Clock::now();
  Verdict o;
  std::vector<const NamedScenario*> pool;
  for (const NamedScenario& s : bundled) pool.push_back(&s);
  std::size_t diff = 0, premise = 0, suboptimal = 0, compared = 0;
  double worst_shortfall = 0.0;
  Rng rng(8);
  for (std::size_t s = 0; s < 1000; ++s) {
    const NamedScenario& sc = *pool[s % pool.size()];
    const Instance& inst = sc.instance;
    const Mechanism mech(inst);
    MessageProfile prof(std::vector<double>(inst.n_agents()), inst.n_constraints());
    for (std::size_t j = 0; j < inst.n_agents(); ++j)
      prof.y[j] = inst.d()[j] + (rng.coin() ? rng.uniform(1e-3, 3.0) : rng.log_uniform(1e-3, inst.D()));
    for (std::size_t l = 0; l < inst.n_constraints(); ++l)
      for (std::size_t j : inst.index().agents_on_constraint[l]) prof.price(j, l) = rng.uniform(0.0, 3.0);
    const std::size_t i = rng.below(inst.n_agents());
    const auto& rows = inst.index().constraints_of_agent[i];
    const std::size_t l = rows[rng.below(rows.size())];

    const std::vector<GameVariant> vs = variants_for(sc);
    std::vector<double> p(vs.size()), y(vs.size());
    for (std::size_t k = 0; k < vs.size(); ++k) {
      p[k] = best_response_price(mech, vs[k], prof, i, l);
      y[k] = best_response_demand(mech, vs[k], prof, i);
    }
    for (std::size_t k = 1; k < vs.size(); ++k) {
      ++compared;
      if (!same_bits(p[k], p[0]) || !same_bits(y[k], y[0])) ++diff;
    }

    // The reason the argmax is shared: i's rebate ignores i's own message.
    MessageProfile pert = prof;
    pert.y[i] = inst.d()[i] + rng.uniform(1e-3, 20.0);
    for (std::size_t r : rows) pert.price(i, r) = rng.uniform(0.0, 5.0);
    for (GameVariant v : vs)
      if (!same_bits(agent_rebate(inst, v, prof, i), agent_rebate(inst, v, pert, i))) ++premise;

    // Each best response is optimal for the variant's full utility.
    for (GameVariant v : vs) {
      MessageProfile trial = prof;
      const auto price_u = [&](double q) {
        trial.price(i, l) = q;
        return utility(mech, v, trial, i);
      };
      const double u_p = price_u(p[0]);
      const double p_hi = std::max(4.0, 2.0 * std::max(prof.price(i, l), oracle::pbar(inst, prof, i, l)) + 1.0);
      const double scan_p = oracle::scan_argmax(price_u, 0.0, p_hi, 1000).second;
      trial = prof;
      const auto demand_u = [&](double t) {
        trial.y[i] = t;
        return utility(mech, v, trial, i);
      };
      const double u_y = demand_u(y[0]);
      const double scan_y = oracle::scan_argmax(demand_u, inst.d()[i] + 1e-9, inst.D() + 1.0, 2000).second;
      const double tol_p = 1e-9 * std::max(1.0, std::abs(u_p)), tol_y = 1e-9 * std::max(1.0, std::abs(u_y));
      worst_shortfall = std::max({worst_shortfall, scan_p - u_p, scan_y - u_y});
      if (scan_p - u_p > tol_p || scan_y - u_y > tol_y) ++suboptimal;
    }
  }
  const double t = seconds_since(t0);
  o.pass = diff == 0 && premise == 0 && suboptimal == 0;
  o.detail = fmt("1000 profiles, %zu cross-variant comparisons, %zu bitwise differences, %zu own-message rebate "
                 "changes, %zu best responses beaten by a scan (worst shortfall %.2e), %.2fs",
                 compared, diff, premise, suboptimal, worst_shortfall, t);
  return o;
}

}  // namespace

int main() {
  int failed = 0;
  const auto report = [&](const char* id, const std::function<Verdict()>& check) {
    Verdict o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  };

  const std::vector<Instance> dyn = dynamics_instances();
  const std::vector<NamedScenario> bundled = bundled_scenarios();
  std::vector<Certified> certified;

  report("AC1", [&] { return ac1(dyn); });
  report("AC2", [&] { return ac2(bundled, certified); });
  report("AC3", [&] { return ac3(); });
  report("AC4", [&] { return ac4(certified); });
  report("AC5", [&] { return ac5(equilibrium_pool(bundled)); });
  report("AC6", [&] { return ac6(certified); });
  report("AC7", [&] { return ac7(bundled, dyn); });
  report("AC8", [&] { return ac8(bundled); });
  return failed == 0 ? 0 : 1;
}
