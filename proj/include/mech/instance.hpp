#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mech/error.hpp"
#include "mech/valuation.hpp"

namespace mech {

struct Term {
  std::size_t agent = 0;
  double coeff = 0.0;
  friend bool operator==(const Term&, const Term&) = default;
};

/// One linear constraint A_l^T x <= c_l, stored sparsely.
struct Constraint {
  std::vector<Term> terms;
  double cap = 0.0;
  friend bool operator==(const Constraint&, const Constraint&) = default;
};

/// Agent/constraint incidence: i is on l iff A_li != 0.
struct IndexSets {
  std::vector<std::vector<std::size_t>> agents_on_constraint;
  std::vector<std::vector<std::size_t>> constraints_of_agent;

  std::size_t agents_on(std::size_t l) const { return agents_on_constraint[l].size(); }
  std::size_t constraints_of(std::size_t i) const { return constraints_of_agent[i].size(); }
};

/// Problem datum. Immutable after construction; the constructor normalizes
/// the sparse rows and equality groups and rejects malformed input. Semantic
/// assumptions are checked separately by validate().
class Instance {
public:
  Instance() = default;

  Instance(std::vector<Valuation> valuations, std::vector<Constraint> constraints,
           std::vector<std::vector<std::size_t>> equality_groups, std::vector<double> d,
           double D, double eta, std::optional<std::vector<double>> theta = std::nullopt)
      : valuations_(std::move(valuations)),
        constraints_(std::move(constraints)),
        groups_(std::move(equality_groups)),
        d_(std::move(d)),
        D_(D),
        eta_(eta),
        theta_(std::move(theta)) {
    const std::size_t n = valuations_.size();
    if (n == 0) throw InvalidInstance("instance has no agents");
    if (d_.size() != n)
      throw DimensionMismatch("d has " + std::to_string(d_.size()) + " entries, expected " +
                              std::to_string(n));
    if (theta_ && theta_->size() != n) throw DimensionMismatch("theta size differs from agent count");

    for (std::size_t l = 0; l < constraints_.size(); ++l) {
      auto& terms = constraints_[l].terms;
      for (const Term& t : terms) {
        if (t.agent >= n)
          throw InvalidInstance("constraint " + std::to_string(l) + " references agent " +
                                std::to_string(t.agent));
        if (!std::isfinite(t.coeff)) throw InvalidInstance("non-finite coefficient");
      }
      std::sort(terms.begin(), terms.end(),
                [](const Term& x, const Term& y) { return x.agent < y.agent; });
      std::vector<Term> merged;
      for (const Term& t : terms) {
        if (!merged.empty() && merged.back().agent == t.agent)
          merged.back().coeff += t.coeff;
        else
          merged.push_back(t);
      }
      std::erase_if(merged, [](const Term& t) { return t.coeff == 0.0; });
      terms = std::move(merged);
    }

    if (groups_.empty()) {
      for (std::size_t i = 0; i < n; ++i) groups_.push_back({i});
    }
    group_of_.assign(n, n);
    for (auto& g : groups_) {
      if (g.empty()) throw InvalidInstance("empty equality group");
      std::sort(g.begin(), g.end());
    }
    std::sort(groups_.begin(), groups_.end(),
              [](const auto& x, const auto& y) { return x.front() < y.front(); });
    for (std::size_t k = 0; k < groups_.size(); ++k) {
      for (std::size_t i : groups_[k]) {
        if (i >= n) throw InvalidInstance("equality group references agent " + std::to_string(i));
        if (group_of_[i] != n)
          throw InvalidInstance("agent " + std::to_string(i) + " appears in two equality groups");
        group_of_[i] = k;
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      if (group_of_[i] == n)
        throw InvalidInstance("agent " + std::to_string(i) + " is in no equality group");

    const std::size_t L = constraints_.size();
    dense_.assign(L * n, 0.0);
    index_.agents_on_constraint.assign(L, {});
    index_.constraints_of_agent.assign(n, {});
    for (std::size_t l = 0; l < L; ++l) {
      for (const Term& t : constraints_[l].terms) {
        dense_[l * n + t.agent] = t.coeff;
        index_.agents_on_constraint[l].push_back(t.agent);
        index_.constraints_of_agent[t.agent].push_back(l);
      }
    }
  }

  std::size_t n_agents() const noexcept { return valuations_.size(); }
  std::size_t n_constraints() const noexcept { return constraints_.size(); }
  std::size_t n_groups() const noexcept { return groups_.size(); }

  const std::vector<Valuation>& valuations() const noexcept { return valuations_; }
  const Valuation& valuation(std::size_t i) const { return valuations_.at(i); }
  const std::vector<Constraint>& constraints() const noexcept { return constraints_; }
  const Constraint& constraint(std::size_t l) const { return constraints_.at(l); }
  double cap(std::size_t l) const { return constraints_[l].cap; }
  double coeff(std::size_t l, std::size_t i) const { return dense_[l * n_agents() + i]; }

  const std::vector<std::vector<std::size_t>>& equality_groups() const noexcept { return groups_; }
  std::size_t group_of(std::size_t i) const { return group_of_[i]; }
  bool degenerate() const noexcept { return groups_.size() < valuations_.size(); }

  const std::vector<double>& d() const noexcept { return d_; }
  double D() const noexcept { return D_; }
  double eta() const noexcept { return eta_; }
  const std::optional<std::vector<double>>& theta() const noexcept { return theta_; }
  const IndexSets& index() const noexcept { return index_; }

  double row_dot(std::size_t l, std::span<const double> x) const {
    double s = 0.0;
    for (const Term& t : constraints_[l].terms) s += t.coeff * x[t.agent];
    return s;
  }

  Instance with_eta(double eta) const {
    Instance copy = *this;
    copy.eta_ = eta;
    return copy;
  }
  Instance with_theta(std::optional<std::vector<double>> theta) const {
    return Instance(valuations_, constraints_, groups_, d_, D_, eta_, std::move(theta));
  }

private:
  std::vector<Valuation> valuations_;
  std::vector<Constraint> constraints_;
  std::vector<std::vector<std::size_t>> groups_;
  std::vector<double> d_;
  double D_ = 0.0;
  double eta_ = 1.0;
  std::optional<std::vector<double>> theta_;

  std::vector<std::size_t> group_of_;
  std::vector<double> dense_;
  IndexSets index_;
};

/// Free-variable form: one coordinate per equality group, represented by the
/// group's lowest-index agent.
struct ReducedInstance {
  std::size_t K = 0;
  std::size_t L = 0;
  std::vector<std::size_t> representative;  // k -> j_k
  std::vector<std::size_t> group_of;        // i -> k
  std::vector<std::size_t> group_size;
  std::vector<double> coeffs;  // row-major L x K
  std::vector<double> caps;
  std::vector<bool> implied;  // reduced row is identically zero

  double coeff(std::size_t l, std::size_t k) const { return coeffs[l * K + k]; }

  double row_dot(std::size_t l, std::span<const double> xr) const {
    double s = 0.0;
    const double* row = coeffs.data() + l * K;
    for (std::size_t k = 0; k < K; ++k) s += row[k] * xr[k];
    return s;
  }

  /// Equality rows are implied by the groups and hold with equality everywhere.
  bool is_equality_row(std::size_t l) const { return implied[l] && caps[l] == 0.0; }

  std::vector<double> expand(std::span<const double> xr) const {
    std::vector<double> x(group_of.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = xr[group_of[i]];
    return x;
  }

  std::vector<double> restrict_to_representatives(std::span<const double> x) const {
    std::vector<double> xr(K);
    for (std::size_t k = 0; k < K; ++k) xr[k] = x[representative[k]];
    return xr;
  }

  /// Group means of a full-space vector.
  std::vector<double> average(std::span<const double> y) const {
    std::vector<double> yr(K, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) yr[group_of[i]] += y[i];
    for (std::size_t k = 0; k < K; ++k) yr[k] /= static_cast<double>(group_size[k]);
    return yr;
  }
};

namespace detail {

inline ReducedInstance reduce_unchecked(const Instance& inst) {
  ReducedInstance r;
  r.K = inst.n_groups();
  r.L = inst.n_constraints();
  r.group_of.resize(inst.n_agents());
  r.group_size.resize(r.K);
  for (std::size_t k = 0; k < r.K; ++k) {
    const auto& g = inst.equality_groups()[k];
    r.representative.push_back(g.front());
    r.group_size[k] = g.size();
    for (std::size_t i : g) r.group_of[i] = k;
  }
  r.coeffs.assign(r.L * r.K, 0.0);
  r.caps.resize(r.L);
  r.implied.assign(r.L, true);
  for (std::size_t l = 0; l < r.L; ++l) {
    r.caps[l] = inst.cap(l);
    double scale = 0.0;
    for (const Term& t : inst.constraint(l).terms) {
      r.coeffs[l * r.K + r.group_of[t.agent]] += t.coeff;
      scale = std::max(scale, std::abs(t.coeff));
    }
    for (std::size_t k = 0; k < r.K; ++k) {
      double& c = r.coeffs[l * r.K + k];
      if (std::abs(c) <= 1e-12 * scale) c = 0.0;
      if (c != 0.0) r.implied[l] = false;
    }
  }
  return r;
}

}  // namespace detail

/// Sum each group's coefficients into its representative column.
/// Throws NegativeReducedCoefficient when a reduced row leaves the
/// nonnegative orthant.
inline ReducedInstance reduce_equalities(const Instance& inst) {
  ReducedInstance r = detail::reduce_unchecked(inst);
  for (std::size_t l = 0; l < r.L; ++l)
    for (std::size_t k = 0; k < r.K; ++k)
      if (r.coeff(l, k) < 0.0)
        throw NegativeReducedCoefficient("constraint " + std::to_string(l) + ", group " +
                                         std::to_string(k) + ": " +
                                         std::to_string(r.coeff(l, k)));
  return r;
}

/// Interior anchor theta = sigma * d (group-wise minimum of d), with sigma
/// halved from 1/2 until every non-implied row holds strictly.
inline std::vector<double> derive_theta(const Instance& inst) {
  const ReducedInstance r = detail::reduce_unchecked(inst);
  const std::size_t n = inst.n_agents();
  std::vector<double> base(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m = inst.d()[i];
    for (std::size_t j : inst.equality_groups()[inst.group_of(i)]) m = std::min(m, inst.d()[j]);
    base[i] = m;
  }
  std::vector<double> theta(n);
  for (double sigma = 0.5; sigma >= 1e-30; sigma *= 0.5) {
    for (std::size_t i = 0; i < n; ++i) theta[i] = sigma * base[i];
    bool strict = true;
    for (std::size_t l = 0; l < inst.n_constraints() && strict; ++l) {
      if (r.implied[l]) continue;
      const double c = inst.cap(l);
      strict = inst.row_dot(l, theta) < c - 1e-12 * (1.0 + std::abs(c));
    }
    if (strict) return theta;
  }
  throw NoInteriorPoint("no sigma >= 1e-30 places sigma*d strictly inside every constraint");
}

}  // namespace mech
