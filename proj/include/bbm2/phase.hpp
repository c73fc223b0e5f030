#pragma once

// Phase diagram of the two-type reducible BBM: region classification, the
// speed optimizer with its grid oracle, and the centering m(t) per region.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "bbm2/params.hpp"

namespace bbm2::phase {

enum class Region { C_I, C_II, C_III, B_I_II, B_II_III, B_I_III, POINT_1_1 };

inline constexpr double kDefaultTol = 1e-9;

inline std::string_view to_string(Region r) {
    switch (r) {
        case Region::C_I: return "C_I";
        case Region::C_II: return "C_II";
        case Region::C_III: return "C_III";
        case Region::B_I_II: return "B_I_II";
        case Region::B_II_III: return "B_II_III";
        case Region::B_I_III: return "B_I_III";
        case Region::POINT_1_1: return "POINT_1_1";
    }
    return "?";
}

inline Region region_from_string(std::string_view s) {
    for (auto r : {Region::C_I, Region::C_II, Region::C_III, Region::B_I_II, Region::B_II_III,
                   Region::B_I_III, Region::POINT_1_1}) {
        if (to_string(r) == s) return r;
    }
    throw InvalidParameter("unknown region tag '" + std::string(s) + "'");
}

inline bool is_boundary(Region r) {
    return r == Region::B_I_II || r == Region::B_II_III || r == Region::B_I_III ||
           r == Region::POINT_1_1;
}

struct RegionLabel {
    Region tag;
    double boundary_tolerance;
};

/// Boundary labels win when their defining equation holds within `tol`
/// (absolute error on the equation); (1,1) wins over every boundary.
inline RegionLabel classify(const ModelParams& p, double tol = kDefaultTol) {
    p.validate();
    if (!(tol >= 0.0 && tol <= 0.01)) {
        throw InvalidParameter("boundary tolerance must lie in [0, 0.01]");
    }
    const double b = p.beta;
    const double s2 = p.sigma2;
    auto label = [tol](Region r) { return RegionLabel{r, tol}; };

    if (std::abs(b - 1.0) <= tol && std::abs(s2 - 1.0) <= tol) return label(Region::POINT_1_1);
    if (b < 1.0 && std::abs(b * s2 - 1.0) <= tol) return label(Region::B_I_II);
    if (b > 1.0 && std::abs(b + s2 - 2.0) <= tol) return label(Region::B_II_III);
    if (b > 1.0 && std::abs(1.0 / b + 1.0 / s2 - 2.0) <= tol) return label(Region::B_I_III);

    if (b <= 1.0) {
        return label(s2 > 1.0 / b ? Region::C_I : Region::C_II);
    }
    // beta > 1: 2 - beta < beta/(2 beta - 1) < 1
    if (s2 > b / (2.0 * b - 1.0)) return label(Region::C_I);
    if (s2 < 2.0 - b) return label(Region::C_II);
    return label(Region::C_III);
}

struct PhaseQuantities {
    double v;
    double theta;
    std::optional<double> v_star;      // defined for beta > 1, sigma2 < 1
    std::optional<double> theta_star;  // same domain
};

inline PhaseQuantities phase_quantities(const ModelParams& p) {
    p.validate();
    PhaseQuantities q{p.v(), p.theta(), std::nullopt, std::nullopt};
    if (p.beta > 1.0 && p.sigma2 < 1.0) {
        q.v_star = (p.beta - p.sigma2) / std::sqrt(2.0 * (1.0 - p.sigma2) * (p.beta - 1.0));
        q.theta_star = std::sqrt(2.0 * (p.beta - 1.0) / (1.0 - p.sigma2));
    }
    return q;
}

struct OptimizerSolution {
    double p_star;
    double a_star;
    double b_star;
    double v_star;
    bool degenerate = false;  // maximizer set is not a point; a canonical member is returned
};

/// Slack of the two first-moment constraints at (p, a, b); both must be >= 0.
inline std::pair<double, double> constraint_slack(const ModelParams& m, double p, double a, double b) {
    const double type1 = (m.beta - a * a / (2.0 * m.sigma2)) * p;
    return {type1, type1 + (1.0 - b * b / 2.0) * (1.0 - p)};
}

/// Closed-form maximizer of p a + (1-p) b over the first-moment feasible set.
/// When p* is 0 or 1 the unused slope is reported at its canonical value
/// (a* = sqrt(2) sigma2, resp. b* = theta).
inline OptimizerSolution optimize_speed(const ModelParams& m, double tol = kDefaultTol) {
    const Region r = classify(m, tol).tag;
    OptimizerSolution s{};
    switch (r) {
        case Region::C_I:
        case Region::B_I_III:
            s.p_star = 1.0;
            s.a_star = m.v();
            s.b_star = m.theta();
            break;
        case Region::C_II:
        case Region::B_II_III:
        case Region::B_I_II:
            s.p_star = 0.0;
            s.b_star = kSqrt2;
            s.a_star = kSqrt2 * m.sigma2;
            break;
        case Region::C_III: {
            const double bm1 = m.beta - 1.0;
            const double om = 1.0 - m.sigma2;
            s.p_star = (m.sigma2 + m.beta - 2.0) / (2.0 * om * bm1);
            s.b_star = std::sqrt(2.0 * bm1 / om);
            s.a_star = m.sigma2 * s.b_star;
            break;
        }
        case Region::POINT_1_1:
            s.p_star = 0.0;
            s.a_star = kSqrt2;
            s.b_star = kSqrt2;
            s.degenerate = true;
            break;
    }
    s.v_star = s.p_star * s.a_star + (1.0 - s.p_star) * s.b_star;
    return s;
}

/// Exhaustive maximization over a uniform (p, a) grid on [0,1] x [0, 2v].
/// For each grid cell the objective is increasing in b, so b is set to the
/// largest feasible value inside [0, 2 max(sqrt 2, theta*)].
inline OptimizerSolution brute_force_speed(const ModelParams& m, int grid_n) {
    m.validate();
    if (grid_n < 100) throw InvalidParameter("brute_force_speed needs grid_n >= 100");
    const auto q = phase_quantities(m);
    const double a_hi = 2.0 * q.v;
    const double b_hi = 2.0 * std::max(kSqrt2, q.theta_star.value_or(kSqrt2));

    OptimizerSolution best{0.0, 0.0, 0.0, -1.0, false};
    for (int i = 0; i <= grid_n; ++i) {
        const double p = static_cast<double>(i) / grid_n;
        for (int j = 0; j <= grid_n; ++j) {
            const double a = a_hi * j / grid_n;
            double g1 = (m.beta - a * a / (2.0 * m.sigma2)) * p;
            if (g1 < -1e-9) continue;  // feasibility up to rounding; a = v must stay admissible
            g1 = std::max(g1, 0.0);
            double b;
            if (i == grid_n) {
                b = 0.0;
            } else {
                const double b2 = 2.0 + 2.0 * g1 / (1.0 - p);
                b = std::min(b_hi, std::sqrt(b2));
            }
            const double val = p * a + (1.0 - p) * b;
            if (val > best.v_star) best = {p, a, b, val, false};
        }
    }
    return best;
}

enum class CenteringFormula { Type1Bramson, Type2Bramson, Anomalous, BoundaryII_III, BoundaryI_III, BoundaryI_II, Point11 };

struct CenteringSpec {
    double leading;
    double log_coeff;
    CenteringFormula formula;
    Region region;

    double operator()(double t) const { return leading * t + log_coeff * std::log(t); }
};

inline CenteringSpec centering_spec(const ModelParams& m, double tol = kDefaultTol) {
    const Region r = classify(m, tol).tag;
    const double c3 = -3.0 / (2.0 * kSqrt2);
    const double c1 = -1.0 / (2.0 * kSqrt2);
    switch (r) {
        case Region::C_I: return {m.v(), -3.0 / (2.0 * m.theta()), CenteringFormula::Type1Bramson, r};
        case Region::C_II: return {kSqrt2, c3, CenteringFormula::Type2Bramson, r};
        case Region::C_III: return {optimize_speed(m, tol).v_star, 0.0, CenteringFormula::Anomalous, r};
        case Region::B_II_III: return {kSqrt2, c1, CenteringFormula::BoundaryII_III, r};
        case Region::B_I_III: return {m.v(), -1.0 / (2.0 * m.theta()), CenteringFormula::BoundaryI_III, r};
        case Region::B_I_II: return {kSqrt2, c3, CenteringFormula::BoundaryI_II, r};
        case Region::POINT_1_1: return {kSqrt2, c1, CenteringFormula::Point11, r};
    }
    throw InvalidParameter("unreachable region");
}

/// m(t) for the region of `m`; the log correction requires t > 1.
inline double centering(const ModelParams& m, double t, double tol = kDefaultTol) {
    if (!(t > 1.0)) throw DomainError("centering needs t > 1");
    return centering_spec(m, tol)(t);
}

struct SurfaceRow {
    ModelParams params;
    Region region;
    PhaseQuantities quantities;
    OptimizerSolution optimum;
    CenteringSpec centering;
};

inline SurfaceRow surface_row(const ModelParams& m, double tol = kDefaultTol) {
    return {m, classify(m, tol).tag, phase_quantities(m), optimize_speed(m, tol), centering_spec(m, tol)};
}

/// Rows for the cartesian product betas x sigma2s (beta-major order).
inline std::vector<SurfaceRow> coefficient_surfaces(const std::vector<double>& betas,
                                                    const std::vector<double>& sigma2s,
                                                    double tol = kDefaultTol) {
    std::vector<SurfaceRow> rows;
    rows.reserve(betas.size() * sigma2s.size());
    for (double b : betas) {
        for (double s : sigma2s) {
            if (!(b > 0.0 && b <= 4.0 && s > 0.0 && s <= 4.0)) {
                throw InvalidParameter("coefficient surface grid must lie in (0,4]x(0,4]");
            }
            rows.push_back(surface_row({b, s, 0.0}, tol));
        }
    }
    return rows;
}

/// Uniform grid {hi*k/n : k = 1..n}.
inline std::vector<double> uniform_axis(int n, double hi = 4.0) {
    std::vector<double> axis(static_cast<std::size_t>(n));
    for (int k = 1; k <= n; ++k) axis[static_cast<std::size_t>(k - 1)] = hi * k / n;
    return axis;
}

inline constexpr std::string_view kSurfaceCsvHeader =
    "beta,sigma2,region,v,theta,v_star,p_star,a_star,b_star,leading,log_coeff";

}  // namespace bbm2::phase
