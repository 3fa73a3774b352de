#pragma once

#include <cmath>
#include <span>

namespace mech {

/// Neumaier-compensated accumulator. Tax identities sum hundreds of terms of
/// mixed sign and must cancel to ~1e-9 relative.
class CompensatedSum {
public:
  CompensatedSum& operator+=(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
    return *this;
  }
  CompensatedSum& operator-=(double v) noexcept { return *this += -v; }
  double value() const noexcept { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> values) noexcept {
  CompensatedSum s;
  for (double v : values) s += v;
  return s.value();
}

}  // namespace mech
