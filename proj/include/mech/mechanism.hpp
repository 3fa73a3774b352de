#pragma once

#include <vector>

#include "mech/instance.hpp"

namespace mech {

/// An instance bundled with the quantities the contract needs on every call:
/// the reduced free-variable form and the interior anchor theta.
class Mechanism {
public:
  explicit Mechanism(Instance inst)
      : inst_(std::move(inst)), red_(reduce_equalities(inst_)) {
    theta_ = inst_.theta() ? *inst_.theta() : derive_theta(inst_);
    theta_r_ = red_.restrict_to_representatives(theta_);
  }

  const Instance& instance() const noexcept { return inst_; }
  const ReducedInstance& reduced() const noexcept { return red_; }
  const std::vector<double>& theta() const noexcept { return theta_; }
  const std::vector<double>& theta_reduced() const noexcept { return theta_r_; }

private:
  Instance inst_;
  ReducedInstance red_;
  std::vector<double> theta_;
  std::vector<double> theta_r_;
};

}  // namespace mech
