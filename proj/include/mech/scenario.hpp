#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mech/centralized.hpp"
#include "mech/error.hpp"
#include "mech/instance.hpp"
#include "mech/random.hpp"
#include "mech/validate.hpp"

namespace mech {

enum class ScenarioKind { Unicast, PublicGood, LocalPublicGoods, Custom };

inline const char* to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::Unicast: return "unicast";
    case ScenarioKind::PublicGood: return "public-good";
    case ScenarioKind::LocalPublicGoods: return "local-public-goods";
    case ScenarioKind::Custom: return "custom";
  }
  return "?";
}

enum class FamilyMix { Log, Mixed };

struct ScenarioParams {
  ScenarioKind kind = ScenarioKind::Unicast;
  std::size_t n_agents = 2;
  std::size_t n_links = 1;                // unicast
  std::vector<std::size_t> group_sizes;   // local public goods
  bool coupling = true;                   // local public goods: one row across all groups
  bool offeq = false;                     // target A4': >= 5 agents per link, eta 1e-3
  FamilyMix families = FamilyMix::Log;
  bool unit_weights = false;
  double weight_lo = 0.5, weight_hi = 2.0;
  double cap_lo = 1.0, cap_hi = 5.0;
  std::optional<double> cap;              // fixed cap instead of a draw
  std::optional<Valuation> valuation;     // fixed valuation for every agent
  double d = 0.01;
  double D = 100.0;
  std::optional<double> eta;              // default 1.0, or 1e-3 with offeq
  std::size_t max_resamples = 64;
};

struct GeneratedInstance {
  Instance instance;
  std::size_t resamples = 0;  // draws rejected for violating A2 at the optimum
};

namespace detail {

inline Valuation draw_valuation(const ScenarioParams& sp, Rng& rng) {
  if (sp.valuation) return *sp.valuation;
  const auto family = sp.families == FamilyMix::Log ? 0 : rng.below(3);
  const double a = rng.uniform(0.5, 2.0);
  switch (family) {
    case 1: return Valuation::power(a, rng.uniform(0.3, 0.7));
    case 2: return Valuation::quad_cap(a, rng.uniform(1.0, 4.0));
    default: return Valuation::log_shift(a, rng.uniform(2.0, 10.0));
  }
}

inline double draw_weight(const ScenarioParams& sp, Rng& rng) {
  return sp.unit_weights ? 1.0 : rng.uniform(sp.weight_lo, sp.weight_hi);
}

inline double draw_cap(const ScenarioParams& sp, Rng& rng) {
  return sp.cap ? *sp.cap : rng.uniform(sp.cap_lo, sp.cap_hi);
}

/// Pairwise cycle x_0 <= x_1 <= ... <= x_{m-1} <= x_0 over a group.
inline void add_cycle(std::vector<Constraint>& rows, const std::vector<std::size_t>& group) {
  if (group.size() < 2) return;
  for (std::size_t k = 0; k < group.size(); ++k) {
    const std::size_t a = group[k];
    const std::size_t b = group[(k + 1) % group.size()];
    rows.push_back({{{a, 1.0}, {b, -1.0}}, 0.0});
  }
}

inline Instance draw_unicast(const ScenarioParams& sp, Rng& rng) {
  const std::size_t n = sp.n_agents;
  const std::size_t L = sp.n_links;
  const std::size_t min_on_link = sp.offeq ? 5 : 2;
  std::vector<std::vector<bool>> on(L, std::vector<bool>(n, false));
  // Each agent's route is a random contiguous run of links.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t start = rng.below(L);
    const std::size_t len = 1 + rng.below(L - start);
    for (std::size_t l = start; l < start + len; ++l) on[l][i] = true;
  }
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t count = std::count(on[l].begin(), on[l].end(), true);
    while (count < min_on_link) {
      const std::size_t i = rng.below(n);
      if (!on[l][i]) on[l][i] = true, ++count;
    }
  }
  std::vector<Valuation> vals;
  for (std::size_t i = 0; i < n; ++i) vals.push_back(draw_valuation(sp, rng));
  std::vector<Constraint> rows(L);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t i = 0; i < n; ++i)
      if (on[l][i]) rows[l].terms.push_back({i, draw_weight(sp, rng)});
    rows[l].cap = draw_cap(sp, rng);
  }
  const double eta = sp.eta.value_or(sp.offeq ? 1e-3 : 1.0);
  return Instance(std::move(vals), std::move(rows), {}, std::vector<double>(n, sp.d), sp.D, eta);
}

inline Instance draw_public_good(const ScenarioParams& sp, Rng& rng) {
  const std::size_t n = sp.n_agents;
  std::vector<Valuation> vals;
  for (std::size_t i = 0; i < n; ++i) vals.push_back(draw_valuation(sp, rng));
  std::vector<std::size_t> group(n);
  for (std::size_t i = 0; i < n; ++i) group[i] = i;
  std::vector<Constraint> rows;
  Constraint cap_row;
  for (std::size_t i = 0; i < n; ++i) cap_row.terms.push_back({i, 1.0 / static_cast<double>(n)});
  cap_row.cap = draw_cap(sp, rng);
  rows.push_back(std::move(cap_row));
  add_cycle(rows, group);
  return Instance(std::move(vals), std::move(rows), {group}, std::vector<double>(n, sp.d), sp.D,
                  sp.eta.value_or(1.0));
}

inline Instance draw_local_public_goods(const ScenarioParams& sp, Rng& rng) {
  std::vector<std::vector<std::size_t>> groups;
  std::size_t n = 0;
  for (std::size_t size : sp.group_sizes) {
    std::vector<std::size_t> g;
    for (std::size_t k = 0; k < size; ++k) g.push_back(n++);
    groups.push_back(std::move(g));
  }
  std::vector<Valuation> vals;
  for (std::size_t i = 0; i < n; ++i) vals.push_back(draw_valuation(sp, rng));
  std::vector<Constraint> rows;
  for (const auto& g : groups) {
    Constraint r;
    for (std::size_t i : g) r.terms.push_back({i, 1.0 / static_cast<double>(g.size())});
    r.cap = draw_cap(sp, rng);
    rows.push_back(std::move(r));
  }
  if (sp.coupling && groups.size() >= 2) {
    Constraint r;
    for (const auto& g : groups) {
      const double w = draw_weight(sp, rng) / static_cast<double>(g.size());
      for (std::size_t i : g) r.terms.push_back({i, w});
    }
    r.cap = draw_cap(sp, rng) * 0.5 * static_cast<double>(groups.size());
    rows.push_back(std::move(r));
  }
  for (const auto& g : groups) add_cycle(rows, g);
  return Instance(std::move(vals), std::move(rows), groups, std::vector<double>(n, sp.d), sp.D,
                  sp.eta.value_or(1.0));
}

inline void check_params(const ScenarioParams& sp) {
  if (!(sp.d > 0.0 && sp.d < sp.D)) throw InfeasibleParams("need 0 < d < D");
  if (!(sp.weight_lo > 0.0 && sp.weight_lo <= sp.weight_hi)) throw InfeasibleParams("need 0 < weight_lo <= weight_hi");
  if (!(sp.cap_lo > 0.0 && sp.cap_lo <= sp.cap_hi)) throw InfeasibleParams("need 0 < cap_lo <= cap_hi");
  switch (sp.kind) {
    case ScenarioKind::Unicast: {
      const std::size_t need = sp.offeq ? 5 : 2;
      if (sp.n_links == 0) throw InfeasibleParams("unicast needs at least one link");
      if (sp.n_agents < need)
        throw InfeasibleParams("unicast with " + std::to_string(sp.n_agents) + " agents cannot put " +
                               std::to_string(need) + " agents on every link");
      break;
    }
    case ScenarioKind::PublicGood:
      if (sp.offeq) throw InfeasibleParams("public goods are degenerate; the off-equilibrium variant excludes them");
      if (sp.n_agents < 2) throw InfeasibleParams("public good needs at least two agents");
      break;
    case ScenarioKind::LocalPublicGoods:
      if (sp.offeq) throw InfeasibleParams("local public goods are degenerate; the off-equilibrium variant excludes them");
      if (sp.group_sizes.empty()) throw InfeasibleParams("local public goods need at least one group");
      for (std::size_t s : sp.group_sizes)
        if (s < 2) throw InfeasibleParams("every local group needs at least two agents");
      break;
    case ScenarioKind::Custom: throw InfeasibleParams("custom scenarios are loaded, not generated");
  }
}

}  // namespace detail

/// Deterministic instance for (params, seed). Draws whose optimum violates A2
/// (or that fail validation) are rejected and redrawn from the next subseed.
inline GeneratedInstance generate(const ScenarioParams& sp, std::uint64_t seed) {
  detail::check_params(sp);
  for (std::size_t attempt = 0; attempt <= sp.max_resamples; ++attempt) {
    Rng rng(mix_seed(seed, attempt));
    Instance inst = sp.kind == ScenarioKind::Unicast      ? detail::draw_unicast(sp, rng)
                    : sp.kind == ScenarioKind::PublicGood ? detail::draw_public_good(sp, rng)
                                                          : detail::draw_local_public_goods(sp, rng);
    if (!validate(inst, sp.offeq).passed()) continue;
    try {
      const CentralizedSolution sol = solve(inst);
      if (sol.a2.status != CheckStatus::Pass) continue;
    } catch (const NoConvergence&) {
      continue;
    }
    return {std::move(inst), attempt};
  }
  throw InfeasibleParams("no draw satisfied the assumptions after " + std::to_string(sp.max_resamples) +
                         " resamples");
}

struct NamedScenario {
  std::string name;
  Instance instance;
  bool offeq = false;  // satisfies A4' with nonnegative, non-degenerate rows
};

/// The fixed scenario suite used by the certification and IR checks.
inline std::vector<NamedScenario> bundled_scenarios() {
  std::vector<NamedScenario> out;
  const auto gen = [&](std::string name, ScenarioParams sp, std::uint64_t seed) {
    out.push_back({std::move(name), generate(sp, seed).instance, sp.offeq});
  };
  {
    ScenarioParams sp;
    sp.n_agents = 2;
    sp.unit_weights = true;
    sp.cap = 1.0;
    sp.valuation = Valuation::log_shift(1.0, 1.0);
    sp.D = 10.0;
    gen("canonical-2", sp, 0);
  }
  out.push_back({"quad-cap-slack",
                 Instance({Valuation::quad_cap(1.0, 2.0), Valuation::quad_cap(1.0, 2.0)},
                          {Constraint{{{0, 1.0}, {1, 1.0}}, 10.0}}, {}, {0.01, 0.01}, 10.0, 1.0),
                 false});
  out.push_back({"two-link-3",
                 Instance({Valuation::log_shift(1.0, 1.0), Valuation::log_shift(2.0, 1.0), Valuation::log_shift(1.0, 1.0)},
                          {Constraint{{{0, 1.0}, {1, 1.0}}, 1.0}, Constraint{{{1, 1.0}, {2, 1.0}}, 1.0}}, {},
                          {0.01, 0.01, 0.01}, 10.0, 1.0),
                 false});
  {
    ScenarioParams sp;
    sp.n_agents = 4;
    sp.n_links = 2;
    gen("unicast-4x2", sp, 1);
    sp.n_agents = 6;
    sp.n_links = 3;
    sp.families = FamilyMix::Mixed;
    gen("unicast-6x3-mixed", sp, 2);
  }
  {
    ScenarioParams sp;
    sp.offeq = true;
    sp.n_agents = 8;
    sp.n_links = 4;
    gen("unicast-offeq-8x4", sp, 7);
    sp.n_agents = 10;
    sp.n_links = 3;
    sp.families = FamilyMix::Mixed;
    gen("unicast-offeq-10x3-mixed", sp, 3);
    sp.n_agents = 5;
    sp.n_links = 1;
    sp.families = FamilyMix::Log;
    gen("unicast-offeq-5x1", sp, 11);
  }
  {
    ScenarioParams sp;
    sp.kind = ScenarioKind::PublicGood;
    sp.n_agents = 3;
    sp.cap = 2.5;
    gen("public-good-3", sp, 0);
    sp.cap.reset();
    sp.n_agents = 5;
    sp.families = FamilyMix::Mixed;
    gen("public-good-5-mixed", sp, 4);
  }
  {
    ScenarioParams sp;
    sp.kind = ScenarioKind::LocalPublicGoods;
    sp.group_sizes = {2, 3};
    gen("local-public-goods-2-3", sp, 5);
    sp.group_sizes = {2, 2, 3};
    sp.families = FamilyMix::Mixed;
    gen("local-public-goods-2-2-3-mixed", sp, 6);
  }
  return out;
}

}  // namespace mech
