#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace bbm2 {

/// Raised when model parameters or operation arguments leave their domain.
class InvalidParameter : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an argument is outside the domain where a formula is defined.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kPi = 3.14159265358979323846;

/// Two-type reducible BBM: type 1 branches at rate beta, diffuses with
/// variance sigma2 per unit time and emits type-2 particles at rate alpha.
/// Type 2 is a standard BBM (rate 1, unit variance).
struct ModelParams {
    double beta = 1.0;
    double sigma2 = 1.0;
    double alpha = 0.0;

    void validate() const {
        if (!(beta > 0.0) || !std::isfinite(beta)) {
            throw InvalidParameter("beta must be positive, got " + std::to_string(beta));
        }
        if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
            throw InvalidParameter("sigma2 must be positive, got " + std::to_string(sigma2));
        }
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
            throw InvalidParameter("alpha must be non-negative, got " + std::to_string(alpha));
        }
    }

    double sigma() const { return std::sqrt(sigma2); }

    // type-1 speed and critical exponent
    double v() const { return std::sqrt(2.0 * beta * sigma2); }
    double theta() const { return std::sqrt(2.0 * beta / sigma2); }

    static ModelParams standard() { return {1.0, 1.0, 0.0}; }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

}  // namespace bbm2
