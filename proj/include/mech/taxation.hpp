#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mech/error.hpp"
#include "mech/instance.hpp"
#include "mech/summation.hpp"

namespace mech {

enum class GameVariant { Base, SbbNE, SbbOffEq };

inline const char* to_string(GameVariant v) {
  switch (v) {
    case GameVariant::Base: return "base";
    case GameVariant::SbbNE: return "sbb-ne";
    case GameVariant::SbbOffEq: return "sbb-offeq";
  }
  return "?";
}

inline GameVariant parse_variant(const std::string& s) {
  if (s == "base") return GameVariant::Base;
  if (s == "sbb-ne" || s == "sbb_ne") return GameVariant::SbbNE;
  if (s == "sbb-offeq" || s == "sbb_offeq") return GameVariant::SbbOffEq;
  throw PreconditionError("unknown variant '" + s + "'");
}

/// Every agent's demand y_i and prices p_i^l. Prices are stored densely
/// (agent-major); entries with A_li == 0 are ignored.
struct MessageProfile {
  std::vector<double> y;
  std::vector<double> p;
  std::size_t n_constraints = 0;

  MessageProfile() = default;
  MessageProfile(std::vector<double> demand, std::size_t L)
      : y(std::move(demand)), p(y.size() * L, 0.0), n_constraints(L) {}

  double price(std::size_t i, std::size_t l) const { return p[i * n_constraints + l]; }
  double& price(std::size_t i, std::size_t l) { return p[i * n_constraints + l]; }

  friend bool operator==(const MessageProfile&, const MessageProfile&) = default;
};

inline void check_profile(const Instance& inst, const MessageProfile& prof) {
  if (prof.y.size() != inst.n_agents() || prof.n_constraints != inst.n_constraints() ||
      prof.p.size() != inst.n_agents() * inst.n_constraints())
    throw DimensionMismatch("message profile does not match the instance dimensions");
}

/// Mean of the other agents' prices on constraint l, summed in index order
/// so the result never depends on agent i's own price.
inline double pbar(const Instance& inst, const MessageProfile& prof, std::size_t i, std::size_t l) {
  if (inst.coeff(l, i) == 0.0)
    throw AgentNotOnConstraint("agent " + std::to_string(i) + " is not on constraint " + std::to_string(l));
  const auto& agents = inst.index().agents_on_constraint[l];
  if (agents.size() < 2) throw PreconditionError("pbar needs at least two agents on the constraint");
  double s = 0.0;
  for (std::size_t j : agents)
    if (j != i) s += prof.price(j, l);
  return s / static_cast<double>(agents.size() - 1);
}

struct TaxTerm {
  std::size_t agent = 0;
  std::size_t constraint = 0;
  double payment = 0.0;       // A_li x_i pbar
  double disagreement = 0.0;  // (p_i - pbar)^2
  double slackness = 0.0;     // eta pbar p_i (c_l - A_l x)^2
  double rebate = 0.0;        // f_i^l, zero for the base game

  double gross() const { return payment + disagreement + slackness; }
  double total() const { return gross() - rebate; }
};

struct TaxBreakdown {
  std::vector<TaxTerm> terms;   // one per (i, l in L_i), agent-major
  std::vector<double> totals;   // T_i
  std::vector<double> gross;    // t_i before redistribution
  std::vector<double> rebates;  // sum_l f_i^l
};

inline double total_tax(const TaxBreakdown& b) { return compensated_sum(b.totals); }

inline double gross_tax_scale(const TaxBreakdown& b) {
  CompensatedSum s;
  for (double g : b.gross) s += std::abs(g);
  return s.value();
}

/// Base tax term t_i^l given slack c_l - A_l^T x.
inline TaxTerm base_tax_term(const Instance& inst, std::span<const double> x, const MessageProfile& prof,
                             std::size_t i, std::size_t l, double slack) {
  const double pb = pbar(inst, prof, i, l);
  const double pi = prof.price(i, l);
  TaxTerm t;
  t.agent = i;
  t.constraint = l;
  t.payment = inst.coeff(l, i) * x[i] * pb;
  t.disagreement = (pi - pb) * (pi - pb);
  t.slackness = inst.eta() * pb * pi * slack * slack;
  return t;
}

/// t_i alone; the quantity agent i's own message controls.
inline double agent_base_tax(const Instance& inst, std::span<const double> x, const MessageProfile& prof,
                             std::size_t i) {
  CompensatedSum s;
  for (std::size_t l : inst.index().constraints_of_agent[i])
    s += base_tax_term(inst, x, prof, i, l, inst.cap(l) - inst.row_dot(l, x)).gross();
  return s.value();
}

namespace detail {

inline void check_tax_inputs(const Instance& inst, std::span<const double> x, const MessageProfile& prof) {
  check_profile(inst, prof);
  if (x.size() != inst.n_agents())
    throw DimensionMismatch("allocation has " + std::to_string(x.size()) + " entries, expected " +
                            std::to_string(inst.n_agents()));
}

/// Ã_{l,k(j)} scaled by the inverse count of j's group members on l; equals
/// A_lj for singleton groups.
inline double scaled_coeff(const Instance& inst, std::size_t l, std::size_t j) {
  const auto& grp = inst.equality_groups()[inst.group_of(j)];
  if (grp.size() == 1) return inst.coeff(l, j);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t m : grp) {
    const double a = inst.coeff(l, m);
    if (a != 0.0) {
      sum += a;
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

inline bool row_nonnegative(const Instance& inst, std::size_t l) {
  for (const Term& t : inst.constraint(l).terms)
    if (t.coeff < 0.0) return false;
  return true;
}

/// f_{i,1}^l for N^l >= 3 on the other agents' messages only.
inline double redistribute_payment(const Instance& inst, const MessageProfile& prof, std::size_t i,
                                   std::size_t l) {
  const auto& agents = inst.index().agents_on_constraint[l];
  const double n = static_cast<double>(agents.size());
  const double pb = pbar(inst, prof, i, l);
  CompensatedSum s;
  for (std::size_t j : agents) {
    if (j == i) continue;
    s += scaled_coeff(inst, l, j) * prof.y[j] * (pb - prof.price(j, l) / (n - 1.0));
  }
  return s.value() / (n - 2.0);
}

}  // namespace detail

/// Redistribution for the game with budget balance at equilibrium.
inline double rebate_ne(const Instance& inst, const MessageProfile& prof, std::size_t i, std::size_t l) {
  const auto& agents = inst.index().agents_on_constraint[l];
  if (inst.coeff(l, i) == 0.0)
    throw AgentNotOnConstraint("agent " + std::to_string(i) + " is not on constraint " + std::to_string(l));
  if (agents.size() >= 3) return detail::redistribute_payment(inst, prof, i, l);
  if (agents.size() == 2) {
    if (!detail::row_nonnegative(inst, l)) return 0.0;
    const std::size_t j = agents[0] == i ? agents[1] : agents[0];
    return detail::scaled_coeff(inst, l, j) * prof.y[j] * prof.price(j, l);
  }
  return 0.0;
}

/// Redistribution for the game with budget balance whenever y is feasible:
/// f1 + f2 + eta (f3a + f3b + f3c), all over M = N^l \ {i}.
inline double rebate_offeq(const Instance& inst, const MessageProfile& prof, std::size_t i, std::size_t l) {
  const auto& agents = inst.index().agents_on_constraint[l];
  if (inst.coeff(l, i) == 0.0)
    throw AgentNotOnConstraint("agent " + std::to_string(i) + " is not on constraint " + std::to_string(l));
  if (agents.size() < 5)
    throw AssumptionA4PrimeViolated("constraint " + std::to_string(l) + " has " +
                                    std::to_string(agents.size()) + " agents, need 5");
  if (!detail::row_nonnegative(inst, l))
    throw DegenerateRowUnsupported("constraint " + std::to_string(l) + " has a negative coefficient");

  const double n = static_cast<double>(agents.size());
  const double c = inst.cap(l);
  std::vector<double> p, a, phi;
  for (std::size_t j : agents) {
    if (j == i) continue;
    const double aj = inst.coeff(l, j) * prof.y[j];
    p.push_back(prof.price(j, l));
    a.push_back(aj);
    phi.push_back(aj * aj - 2.0 * c * aj);
  }
  const std::size_t m = p.size();

  const double f1 = detail::redistribute_payment(inst, prof, i, l);

  CompensatedSum a_m, phi_m, sq;
  for (std::size_t k = 0; k < m; ++k) {
    a_m += a[k];
    phi_m += phi[k];
    sq += a[k] * a[k];
  }
  const double A_M = a_m.value();
  const double Phi_M = phi_m.value();
  const double e2_M = 0.5 * (A_M * A_M - sq.value());

  CompensatedSum f2, f3a, f3b, s0, s1, s2;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t q = 0; q < j; ++q) {
      const double d = p[j] - p[q];
      f2 += d * d;
      const double pp = p[j] * p[q];
      f3a += pp;
      f3b += pp * ((Phi_M - phi[j] - phi[q]) / (n - 3.0) + (phi[j] + phi[q]) / (n - 2.0));
      const double rest = A_M - a[j] - a[q];
      const double one_overlap = (a[j] + a[q]) * rest;
      const double none_overlap = e2_M - one_overlap - a[j] * a[q];
      s0 += pp * none_overlap;
      s1 += pp * one_overlap;
      s2 += pp * a[j] * a[q];
    }
  }
  const double f2v = n / ((n - 1.0) * (n - 1.0) * (n - 2.0)) * f2.value();
  const double f3av = 2.0 * c * c / ((n - 1.0) * (n - 2.0)) * f3a.value();
  const double f3bv = 2.0 / (n - 1.0) * f3b.value();
  const double f3cv =
      4.0 / (n - 1.0) * (s0.value() / (n - 4.0) + s1.value() / (n - 3.0) + s2.value() / (n - 2.0));
  return f1 + f2v + inst.eta() * (f3av + f3bv + f3cv);
}

/// Sum over l in L_i of agent i's rebate under the variant.
inline double agent_rebate(const Instance& inst, GameVariant variant, const MessageProfile& prof,
                           std::size_t i) {
  if (variant == GameVariant::Base) return 0.0;
  CompensatedSum s;
  for (std::size_t l : inst.index().constraints_of_agent[i])
    s += variant == GameVariant::SbbNE ? rebate_ne(inst, prof, i, l) : rebate_offeq(inst, prof, i, l);
  return s.value();
}

/// Throws when the instance does not satisfy what the variant's rebates need.
inline void check_variant(const Instance& inst, GameVariant variant) {
  if (variant != GameVariant::SbbOffEq) return;
  for (std::size_t l = 0; l < inst.n_constraints(); ++l) {
    if (inst.index().agents_on(l) < 5)
      throw AssumptionA4PrimeViolated("constraint " + std::to_string(l) + " has " +
                                      std::to_string(inst.index().agents_on(l)) + " agents, need 5");
    if (!detail::row_nonnegative(inst, l))
      throw DegenerateRowUnsupported("constraint " + std::to_string(l) + " has a negative coefficient");
  }
  if (inst.degenerate()) throw DegenerateRowUnsupported("equality groups are not supported off equilibrium");
}

namespace detail {

inline TaxBreakdown tax_breakdown(const Instance& inst, GameVariant variant, std::span<const double> x,
                                  const MessageProfile& prof) {
  check_tax_inputs(inst, x, prof);
  check_variant(inst, variant);
  const std::size_t n = inst.n_agents();
  std::vector<double> slack(inst.n_constraints());
  for (std::size_t l = 0; l < slack.size(); ++l) slack[l] = inst.cap(l) - inst.row_dot(l, x);

  TaxBreakdown b;
  b.totals.assign(n, 0.0);
  b.gross.assign(n, 0.0);
  b.rebates.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    CompensatedSum total, gross, rebate;
    for (std::size_t l : inst.index().constraints_of_agent[i]) {
      TaxTerm t = base_tax_term(inst, x, prof, i, l, slack[l]);
      if (variant == GameVariant::SbbNE)
        t.rebate = rebate_ne(inst, prof, i, l);
      else if (variant == GameVariant::SbbOffEq)
        t.rebate = rebate_offeq(inst, prof, i, l);
      total += t.payment;
      total += t.disagreement;
      total += t.slackness;
      total -= t.rebate;
      gross += t.gross();
      rebate += t.rebate;
      b.terms.push_back(t);
    }
    b.totals[i] = total.value();
    b.gross[i] = gross.value();
    b.rebates[i] = rebate.value();
  }
  return b;
}

}  // namespace detail

inline TaxBreakdown base_tax(const Instance& inst, std::span<const double> x, const MessageProfile& prof) {
  return detail::tax_breakdown(inst, GameVariant::Base, x, prof);
}

inline TaxBreakdown sbb_ne_tax(const Instance& inst, std::span<const double> x, const MessageProfile& prof) {
  return detail::tax_breakdown(inst, GameVariant::SbbNE, x, prof);
}

inline TaxBreakdown sbb_offeq_tax(const Instance& inst, std::span<const double> x,
                                  const MessageProfile& prof) {
  return detail::tax_breakdown(inst, GameVariant::SbbOffEq, x, prof);
}

inline TaxBreakdown taxes(const Instance& inst, GameVariant variant, std::span<const double> x,
                          const MessageProfile& prof) {
  return detail::tax_breakdown(inst, variant, x, prof);
}

}  // namespace mech
