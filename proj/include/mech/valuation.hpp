#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include "mech/error.hpp"

namespace mech {

enum class ValuationFamily { LogShift, Power, QuadCap };

inline std::string_view to_string(ValuationFamily f) {
  switch (f) {
    case ValuationFamily::LogShift: return "log_shift";
    case ValuationFamily::Power: return "power";
    case ValuationFamily::QuadCap: return "quad_cap";
  }
  return "?";
}

/// Strictly concave valuation with closed-form first and second derivatives.
///
///   LogShift(a, b):  a * ln(1 + b x)
///   Power(a, b):     a * x^b,           0 < b < 1
///   QuadCap(a, m):   a * (m x - x^2/2)  (peaks at x = m, not monotone)
///
/// For QuadCap the second parameter is stored in `b`.
struct Valuation {
  ValuationFamily family = ValuationFamily::LogShift;
  double a = 1.0;
  double b = 1.0;

  static Valuation log_shift(double a, double b) { return {ValuationFamily::LogShift, a, b}; }
  static Valuation power(double a, double b) { return {ValuationFamily::Power, a, b}; }
  static Valuation quad_cap(double a, double m) { return {ValuationFamily::QuadCap, a, m}; }

  /// True when the parameters place the function in its strictly concave range.
  bool parameters_valid() const noexcept {
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) return false;
    if (family == ValuationFamily::Power) return b < 1.0;
    return true;
  }

  double value(double x) const {
    check(x);
    switch (family) {
      case ValuationFamily::LogShift: return a * std::log1p(b * x);
      case ValuationFamily::Power: return a * std::pow(x, b);
      case ValuationFamily::QuadCap: return a * (b * x - 0.5 * x * x);
    }
    return 0.0;
  }

  /// First derivative; +inf for Power at x = 0.
  double deriv(double x) const {
    check(x);
    switch (family) {
      case ValuationFamily::LogShift: return a * b / (1.0 + b * x);
      case ValuationFamily::Power:
        if (x == 0.0) return std::numeric_limits<double>::infinity();
        return a * b * std::pow(x, b - 1.0);
      case ValuationFamily::QuadCap: return a * (b - x);
    }
    return 0.0;
  }

  double second(double x) const {
    check(x);
    switch (family) {
      case ValuationFamily::LogShift: {
        const double s = 1.0 + b * x;
        return -a * b * b / (s * s);
      }
      case ValuationFamily::Power:
        if (x == 0.0) return -std::numeric_limits<double>::infinity();
        return a * b * (b - 1.0) * std::pow(x, b - 2.0);
      case ValuationFamily::QuadCap: return -a;
    }
    return 0.0;
  }

  friend bool operator==(const Valuation&, const Valuation&) = default;

private:
  static void check(double x) {
    if (!(x >= 0.0)) throw DomainError("valuation evaluated at x = " + std::to_string(x));
  }
};

}  // namespace mech
