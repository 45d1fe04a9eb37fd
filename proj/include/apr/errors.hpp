#pragma once

#include <stdexcept>
#include <string>

namespace apr {

/** Base class for all library errors. */
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/** Invalid or inconsistent configuration / input data. CLI exit code 2. */
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/** Divergent iteration, degeneracy, or singular algebra. CLI exit code 3. */
struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

/** Orbit family cannot be extended past terminal_q. CLI exit code 4 when
 *  a requested range was not reached. */
struct FamilyBoundaryError : Error {
    double terminal_q;
    FamilyBoundaryError(const std::string& msg, double q) : Error(msg), terminal_q(q) {}
};

/** Continuation can proceed only after shifting the forcing period: a
 *  multiplier from outside the continued pair is colliding with it, and a
 *  period change rescales the angular spacing between different Floquet
 *  branches. Carries a suggested frequency shift. */
struct RetuneNeededError : Error {
    double q;
    double suggested_delta_omega;
    RetuneNeededError(const std::string& msg, double q_, double dw)
        : Error(msg), q(q_), suggested_delta_omega(dw) {}
};

/** Amplitude coordinates left the region covered by the orbit family. */
struct FamilyRangeError : NumericalError {
    explicit FamilyRangeError(const std::string& msg) : NumericalError(msg) {}
};

/** The algebraic solve fixing (q_dot, f_theta) in the reduced equations is
 *  singular at the named point of the family. */
struct SingularityError : NumericalError {
    double theta;
    SingularityError(const std::string& msg, double theta_) : NumericalError(msg), theta(theta_) {}
};

} // namespace apr
