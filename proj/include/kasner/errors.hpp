#ifndef KASNER_ERRORS_HPP
#define KASNER_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace kasner {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Kasner relation sums deviate from (1, 1) beyond tolerance.
struct KasnerRelationViolation : Error {
    using Error::Error;
};

// Operation requires max_i p_i < 1.
struct DegenerateBackground : Error {
    using Error::Error;
};

// Operation requires a subcritical background (delta > 0).
struct NotSubcritical : Error {
    using Error::Error;
};

// Operation is undefined on the lambda = 0 mode.
struct ZeroModeError : Error {
    using Error::Error;
};

// Mode frequency is not an exact power law in t.
struct NotPowerLawMode : Error {
    using Error::Error;
};

struct StepLimitExceeded : Error {
    using Error::Error;
};

struct NonFiniteState : Error {
    using Error::Error;
};

// No start time t0 >= 1e-300 satisfies the requested tail tolerance.
struct TailUnreachable : Error {
    using Error::Error;
};

// Input data violates the constraint equations beyond the stated tolerance.
struct ConstraintViolation : Error {
    using Error::Error;
};

// Energy regime does not match the mode's tau window.
struct RegimeMismatch : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

} // namespace kasner

#endif
