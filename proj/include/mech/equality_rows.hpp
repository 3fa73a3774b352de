#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <vector>

#include "mech/instance.hpp"

namespace mech {

/// A pairwise equality row w*x_plus - w*x_minus <= 0 between two members
/// of one equality group. Its multiplier moves w*mu of stationarity from the
/// `plus` agent to the `minus` agent.
struct EqualityEdge {
  std::size_t row = 0;
  std::size_t plus = 0;
  std::size_t minus = 0;
  double weight = 1.0;
};

/// Directed graph of pairwise equality rows, one per instance.
class EqualityGraph {
public:
  explicit EqualityGraph(const Instance& inst, const ReducedInstance& red) : n_(inst.n_agents()) {
    out_.assign(n_, {});
    in_.assign(n_, {});
    for (std::size_t l = 0; l < inst.n_constraints(); ++l) {
      if (!red.is_equality_row(l)) continue;
      const auto& terms = inst.constraint(l).terms;
      if (terms.size() != 2) continue;
      const Term& a = terms[0];
      const Term& b = terms[1];
      if (a.coeff == -b.coeff && red.group_of[a.agent] == red.group_of[b.agent]) {
        EqualityEdge e{l, a.coeff > 0 ? a.agent : b.agent, a.coeff > 0 ? b.agent : a.agent,
                       std::abs(a.coeff)};
        out_[e.plus].push_back(edges_.size());
        in_[e.minus].push_back(edges_.size());
        edges_.push_back(e);
      }
    }
  }

  const std::vector<EqualityEdge>& edges() const noexcept { return edges_; }

  /// True when every member of `group` reaches and is reached by group[0].
  bool strongly_connected(const std::vector<std::size_t>& group) const {
    if (group.size() <= 1) return true;
    const auto fwd = bfs(group.front(), true);
    const auto bwd = bfs(group.front(), false);
    for (std::size_t i : group)
      if (!fwd[i] || !bwd[i]) return false;
    return true;
  }

  /// Nonnegative multipliers mu (indexed by row) such that, for every agent i,
  /// sum over equality rows of A_li * mu_l equals residual[i]. Requires each
  /// group to be strongly connected and residuals to sum to ~0 per group.
  /// Surpluses are routed to the group representative along shortest paths and
  /// deficits are fed from it.
  std::vector<double> route(const Instance& inst, const std::vector<double>& residual,
                            std::size_t n_rows) const {
    std::vector<double> mu(n_rows, 0.0);
    for (const auto& group : inst.equality_groups()) {
      if (group.size() <= 1) continue;
      const std::size_t root = group.front();
      const auto to_root = parent_edges(root, false);    // path i -> root
      const auto from_root = parent_edges(root, true);   // path root -> i
      for (std::size_t i : group) {
        if (i == root) continue;
        const double b = residual[i];
        if (b > 0.0) {
          for (std::size_t v = i; v != root;) {
            const EqualityEdge& e = edges_[*to_root[v]];
            mu[e.row] += b / e.weight;
            v = e.minus;
          }
        } else if (b < 0.0) {
          for (std::size_t v = i; v != root;) {
            const EqualityEdge& e = edges_[*from_root[v]];
            mu[e.row] += -b / e.weight;
            v = e.plus;
          }
        }
      }
    }
    return mu;
  }

private:
  std::vector<bool> bfs(std::size_t start, bool forward) const {
    std::vector<bool> seen(n_, false);
    std::deque<std::size_t> q{start};
    seen[start] = true;
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop_front();
      for (std::size_t ei : forward ? out_[v] : in_[v]) {
        const std::size_t w = forward ? edges_[ei].minus : edges_[ei].plus;
        if (!seen[w]) {
          seen[w] = true;
          q.push_back(w);
        }
      }
    }
    return seen;
  }

  // BFS tree rooted at `root`. With forward=true the stored edge of v is the
  // last edge of a root->v path; otherwise the first edge of a v->root path.
  std::vector<std::optional<std::size_t>> parent_edges(std::size_t root, bool forward) const {
    std::vector<std::optional<std::size_t>> parent(n_);
    std::vector<bool> seen(n_, false);
    std::deque<std::size_t> q{root};
    seen[root] = true;
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop_front();
      for (std::size_t ei : forward ? out_[v] : in_[v]) {
        const std::size_t w = forward ? edges_[ei].minus : edges_[ei].plus;
        if (!seen[w]) {
          seen[w] = true;
          parent[w] = ei;
          q.push_back(w);
        }
      }
    }
    return parent;
  }

  std::size_t n_;
  std::vector<EqualityEdge> edges_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
};

}  // namespace mech
