#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace mech;

namespace {

MessageProfile uniform_profile(const Instance& inst, std::vector<double> y, double price) {
  MessageProfile prof(std::move(y), inst.n_constraints());
  for (std::size_t l = 0; l < inst.n_constraints(); ++l)
    for (std::size_t i : inst.index().agents_on_constraint[l]) prof.price(i, l) = price;
  return prof;
}

// Random prices and a demand profile inside the feasible set.
MessageProfile random_feasible_profile(const Mechanism& mech, Rng& rng) {
  const Instance& inst = mech.instance();
  MessageProfile prof(fixtures::feasible_demand(inst, rng), inst.n_constraints());
  for (std::size_t l = 0; l < inst.n_constraints(); ++l)
    for (std::size_t i : inst.index().agents_on_constraint[l]) prof.price(i, l) = rng.uniform(0.0, 3.0);
  return prof;
}

}  // namespace

TEST(Pbar, ThreeAgents) {
  const Instance inst = fixtures::single_link({1, 1, 1}, 1.0);
  MessageProfile prof({0.1, 0.1, 0.1}, 1);
  prof.price(0, 0) = 1;
  prof.price(1, 0) = 2;
  prof.price(2, 0) = 4;
  EXPECT_DOUBLE_EQ(pbar(inst, prof, 0, 0), 3.0);
  EXPECT_DOUBLE_EQ(pbar(inst, prof, 1, 0), 2.5);
  EXPECT_DOUBLE_EQ(pbar(inst, prof, 2, 0), 1.5);
}

TEST(Pbar, EqualPricesAndPairs) {
  const Instance inst = fixtures::single_link({1, 1, 1, 1}, 1.0);
  const MessageProfile prof = uniform_profile(inst, {0.1, 0.1, 0.1, 0.1}, 0.7);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(pbar(inst, prof, i, 0), 0.7);
  const Instance two = fixtures::canonical();
  MessageProfile p2({0.1, 0.1}, 1);
  p2.price(0, 0) = 0.3;
  p2.price(1, 0) = 1.9;
  EXPECT_EQ(pbar(two, p2, 0, 0), 1.9);
  EXPECT_EQ(pbar(two, p2, 1, 0), 0.3);
}

TEST(Pbar, AgentMustBeOnConstraint) {
  const Instance inst({Valuation::log_shift(1, 1), Valuation::log_shift(1, 1), Valuation::log_shift(1, 1)},
                      {Constraint{{{0, 1.0}, {1, 1.0}}, 1.0}}, {}, {0.01, 0.01, 0.01}, 10.0, 1.0);
  EXPECT_THROW(pbar(inst, MessageProfile({0.1, 0.1, 0.1}, 1), 2, 0), AgentNotOnConstraint);
}

TEST(BaseTax, EqualPricesOnBindingRow) {
  const Instance inst = fixtures::single_link({1.0, 2.0, 0.5}, 2.0);
  const std::vector<double> x{0.5, 0.4, 1.4};  // 0.5 + 0.8 + 0.7 = 2
  const TaxBreakdown b = base_tax(inst, x, uniform_profile(inst, {0.5, 0.4, 1.4}, 0.9));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(b.totals[i], inst.coeff(0, i) * x[i] * 0.9, 1e-15);
}

TEST(BaseTax, DisagreementAndSlackness) {
  const Instance inst = fixtures::canonical();
  MessageProfile prof({0.1, 0.1}, 1);
  prof.price(0, 0) = 2.0;
  prof.price(1, 0) = 1.0;
  const TaxBreakdown b = base_tax(inst, std::vector<double>{0.0, 0.0}, prof);
  EXPECT_DOUBLE_EQ(b.totals[0], 3.0);
  EXPECT_DOUBLE_EQ(b.terms[0].payment, 0.0);
  EXPECT_DOUBLE_EQ(b.terms[0].disagreement, 1.0);
  EXPECT_DOUBLE_EQ(b.terms[0].slackness, 2.0);
}

TEST(BaseTax, ZeroPricesZeroTax) {
  const Instance inst = fixtures::single_link({1, 1, 1}, 1.0);
  const TaxBreakdown b = base_tax(inst, std::vector<double>{0.2, 0.3, 0.1}, MessageProfile({0.2, 0.3, 0.1}, 1));
  for (double t : b.totals) EXPECT_EQ(t, 0.0);
}

TEST(BaseTax, DimensionMismatch) {
  const Instance inst = fixtures::canonical();
  EXPECT_THROW(base_tax(inst, std::vector<double>{0.5}, MessageProfile({0.5, 0.5}, 1)), DimensionMismatch);
  EXPECT_THROW(base_tax(inst, std::vector<double>{0.5, 0.5}, MessageProfile({0.5, 0.5}, 2)), DimensionMismatch);
}

TEST(BaseTax, MatchesOracleAndDecomposes) {
  ScenarioParams sp;
  sp.n_agents = 7;
  sp.n_links = 4;
  sp.families = FamilyMix::Mixed;
  const Mechanism mech(generate(sp, 3).instance);
  const Instance& inst = mech.instance();
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    MessageProfile prof = random_feasible_profile(mech, rng);
    for (double& y : prof.y) y += rng.uniform(0.0, 3.0);  // also outside the feasible set
    const std::vector<double> x = allocation(mech, prof.y);
    const TaxBreakdown b = base_tax(inst, x, prof);
    for (const TaxTerm& term : b.terms) {
      const double ref = oracle::base_tax_term(inst, x, prof, term.agent, term.constraint);
      EXPECT_NEAR(term.gross(), ref, 1e-12 * std::max(1.0, std::abs(ref)));
      EXPECT_EQ(term.rebate, 0.0);
      EXPECT_EQ(term.disagreement == 0.0, prof.price(term.agent, term.constraint) == pbar(inst, prof, term.agent, term.constraint));
    }
    for (std::size_t i = 0; i < inst.n_agents(); ++i) {
      const double ref = oracle::base_tax(inst, x, prof, i);
      EXPECT_NEAR(b.totals[i], ref, 1e-12 * std::max(1.0, std::abs(ref)));
      EXPECT_NEAR(b.gross[i], b.totals[i], 1e-14 * std::max(1.0, std::abs(b.totals[i])));
    }
  }
}

TEST(BaseTax, PaymentLinearInAllocation) {
  const Instance inst = fixtures::single_link({1.0, 2.0, 0.5}, 20.0);
  const MessageProfile prof = uniform_profile(inst, {0.5, 0.5, 0.5}, 1.3);
  const TaxBreakdown a = base_tax(inst, std::vector<double>{0.5, 0.5, 0.5}, prof);
  const TaxBreakdown b = base_tax(inst, std::vector<double>{1.0, 0.5, 0.5}, prof);
  EXPECT_NEAR(b.terms[0].payment, 2.0 * a.terms[0].payment, 1e-15);
}

TEST(SbbNe, BudgetBalancedAtEqualBindingPrices) {
  const Instance inst = fixtures::single_link({1.0, 1.5, 0.5}, 2.0);
  const std::vector<double> y{0.5, 0.6, 1.2};  // 0.5 + 0.9 + 0.6 = 2
  const TaxBreakdown b = sbb_ne_tax(inst, y, uniform_profile(inst, y, 0.8));
  EXPECT_LE(std::abs(total_tax(b)), 1e-12 * std::max(1.0, gross_tax_scale(b)));
  EXPECT_GT(gross_tax_scale(b), 0.5);
}

TEST(SbbNe, EqualityPairBalancesOnItsRow) {
  const Instance inst = fixtures::shared_pair(2.5);
  const Mechanism mech(inst);
  const std::vector<double> y{1.5, 1.5};
  MessageProfile prof = uniform_profile(inst, y, 0.0);
  prof.price(0, 1) = prof.price(1, 1) = 0.6;
  prof.price(0, 2) = prof.price(1, 2) = 0.4;
  const TaxBreakdown b = sbb_ne_tax(inst, allocation(mech, y), prof);
  for (std::size_t l : {1u, 2u}) {
    double s = 0.0;
    for (const TaxTerm& t : b.terms)
      if (t.constraint == l) {
        EXPECT_EQ(t.rebate, 0.0);
        s += t.total();
      }
    EXPECT_NEAR(s, 0.0, 1e-15);
  }
}

TEST(SbbNe, RebateVanishesWhenOthersPriceZero) {
  const Instance inst = fixtures::single_link({1, 1, 1, 1}, 4.0);
  MessageProfile prof({0.5, 0.5, 0.5, 0.5}, 1);
  prof.price(2, 0) = 5.0;
  EXPECT_EQ(rebate_ne(inst, prof, 2, 0), 0.0);
  EXPECT_NE(rebate_ne(inst, prof, 0, 0), 0.0);
  const Instance two = fixtures::canonical();
  MessageProfile p2({0.5, 0.5}, 1);
  p2.price(0, 0) = 2.0;
  EXPECT_EQ(rebate_ne(two, p2, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(rebate_ne(two, p2, 1, 0), 0.5 * 2.0);
}

TEST(SbbNe, RebateMatchesOracle) {
  ScenarioParams sp;
  sp.n_agents = 6;
  sp.n_links = 4;
  const Mechanism mech(generate(sp, 5).instance);
  const Instance& inst = mech.instance();
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const MessageProfile prof = random_feasible_profile(mech, rng);
    for (std::size_t l = 0; l < inst.n_constraints(); ++l)
      for (std::size_t i : inst.index().agents_on_constraint[l]) {
        const double ref = oracle::rebate_ne(inst, prof, i, l);
        EXPECT_NEAR(rebate_ne(inst, prof, i, l), ref, 1e-12 * std::max(1.0, std::abs(ref)));
      }
  }
}

TEST(SbbOffEq, RebateMatchesLiteralSums) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ScenarioParams sp;
    sp.offeq = true;
    sp.families = FamilyMix::Mixed;
    sp.n_agents = 5 + 3 * seed;
    sp.n_links = seed;
    sp.eta = 0.7;  // large enough that the third group of terms matters
    const Mechanism mech(generate(sp, seed).instance);
    const Instance& inst = mech.instance();
    Rng rng(seed);
    for (int t = 0; t < 30; ++t) {
      MessageProfile prof = random_feasible_profile(mech, rng);
      if (t % 2) for (double& y : prof.y) y += rng.uniform(0.0, 2.0);
      for (std::size_t l = 0; l < inst.n_constraints(); ++l)
        for (std::size_t i : inst.index().agents_on_constraint[l]) {
          const double ref = oracle::rebate_offeq(inst, prof, i, l);
          EXPECT_NEAR(rebate_offeq(inst, prof, i, l), ref, 1e-10 * std::max(1.0, std::abs(ref)))
              << "seed " << seed << " agent " << i << " row " << l;
        }
    }
  }
}

TEST(SbbOffEq, BudgetBalancedOnFeasibleDemand) {
  const Mechanism mech(fixtures::single_link({1.0, 0.8, 1.2, 0.5, 2.0}, 3.0, 1e-3));
  const Instance& inst = mech.instance();
  Rng rng(4);
  for (int t = 0; t < 500; ++t) {
    const MessageProfile prof = random_feasible_profile(mech, rng);
    const TaxBreakdown b = sbb_offeq_tax(inst, allocation(mech, prof.y), prof);
    const double total = oracle::sum(b.totals);
    EXPECT_LE(std::abs(total), 1e-9 * std::max(1.0, oracle::sum_abs(b.gross)));
  }
}

TEST(SbbOffEq, ZeroPricesGiveZeroEverything) {
  const Instance inst = fixtures::single_link({1, 1, 1, 1, 1, 1}, 3.0);
  const std::vector<double> y{0.3, 0.4, 0.5, 0.2, 0.6, 0.1};
  const TaxBreakdown b = sbb_offeq_tax(inst, y, MessageProfile(y, 1));
  for (const TaxTerm& t : b.terms) {
    EXPECT_EQ(t.gross(), 0.0);
    EXPECT_EQ(t.rebate, 0.0);
  }
}

TEST(SbbOffEq, EqualBindingPricesReduceToEquilibriumRebate) {
  const Instance inst = fixtures::single_link({1.0, 0.8, 1.2, 0.5, 2.0, 1.0}, 3.0, 0.5);
  const std::vector<double> y{0.5, 0.5, 0.5, 0.4, 0.3, 0.5};  // 0.5+0.4+0.6+0.2+0.6+0.5+... = 2.8
  std::vector<double> yb = y;
  yb[5] += (3.0 - inst.row_dot(0, y));  // move the last agent onto the face
  const MessageProfile prof = uniform_profile(inst, yb, 1.1);
  double extra = 0.0;
  for (std::size_t i = 0; i < 6; ++i) extra += rebate_offeq(inst, prof, i, 0) - rebate_ne(inst, prof, i, 0);
  // f2 vanishes at equal prices and the third group sums to the zero slack term.
  EXPECT_NEAR(extra, 0.0, 1e-12);
  EXPECT_NEAR(total_tax(sbb_offeq_tax(inst, yb, prof)), 0.0, 1e-12);
  EXPECT_NEAR(total_tax(sbb_ne_tax(inst, yb, prof)), 0.0, 1e-12);
}

TEST(SbbOffEq, Preconditions) {
  EXPECT_THROW(sbb_offeq_tax(fixtures::canonical(), std::vector<double>{0.5, 0.5}, MessageProfile({0.5, 0.5}, 1)),
               AssumptionA4PrimeViolated);
  const Instance neg = fixtures::single_link({1, 1, 1, 1, -0.5}, 3.0);
  EXPECT_THROW(rebate_offeq(neg, MessageProfile({0.5, 0.5, 0.5, 0.5, 0.5}, 1), 0, 0), DegenerateRowUnsupported);
  EXPECT_THROW(check_variant(fixtures::shared_pair(2.5), GameVariant::SbbOffEq), AssumptionA4PrimeViolated);
  EXPECT_NO_THROW(check_variant(fixtures::canonical(), GameVariant::SbbNE));
}

TEST(Rebates, IndependentOfOwnMessage) {
  const SuiteReport r = property_suite("rebate_independence", 500, 8);
  EXPECT_TRUE(r.passed()) << r.failures;
}

TEST(Rebates, BudgetSuites) {
  EXPECT_TRUE(property_suite("budget_offeq", 400, 1).passed());
  EXPECT_TRUE(property_suite("budget_ne", 400, 1).passed());
}

TEST(Variant, NamesRoundTrip) {
  for (GameVariant v : {GameVariant::Base, GameVariant::SbbNE, GameVariant::SbbOffEq})
    EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("vickrey"), PreconditionError);
}
