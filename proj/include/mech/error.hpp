#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mech {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

#define MECH_DEFINE_ERROR(Name)                                                \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {}      \
  }

MECH_DEFINE_ERROR(DomainError);
MECH_DEFINE_ERROR(DimensionMismatch);
MECH_DEFINE_ERROR(InvalidInstance);
MECH_DEFINE_ERROR(NoInteriorPoint);
MECH_DEFINE_ERROR(NegativeReducedCoefficient);
MECH_DEFINE_ERROR(TooLarge);
MECH_DEFINE_ERROR(DemandOutOfBox);
MECH_DEFINE_ERROR(PreconditionError);
MECH_DEFINE_ERROR(AgentNotOnConstraint);
MECH_DEFINE_ERROR(AssumptionA4PrimeViolated);
MECH_DEFINE_ERROR(DegenerateRowUnsupported);
MECH_DEFINE_ERROR(A2Violation);
MECH_DEFINE_ERROR(BracketInvalid);
MECH_DEFINE_ERROR(InfeasibleParams);
MECH_DEFINE_ERROR(UnknownSuite);
MECH_DEFINE_ERROR(IoError);

#undef MECH_DEFINE_ERROR

class NoConvergence : public Error {
public:
  explicit NoConvergence(std::size_t iterations)
      : Error("NoConvergence: no KKT point after " + std::to_string(iterations) +
              " iterations"),
        iterations_(iterations) {}
  std::size_t iterations() const noexcept { return iterations_; }

private:
  std::size_t iterations_;
};

}  // namespace mech
