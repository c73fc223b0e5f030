#pragma once

// Regression of the median maximum on (t, log t, 1) across a time grid,
// with a replica bootstrap for the log-coefficient.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bbm2/phase.hpp"
#include "bbm2/rng.hpp"
#include "bbm2/stats.hpp"

namespace bbm2::correction {

/// Maxima of independent replicas at one time.
struct TimeSummary {
    double t = 0.0;
    std::vector<double> maxima;
};

struct FitOptions {
    bool fixed_leading = true;  // regress median - leading t on (log t, 1)
    std::size_t bootstrap = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;
    std::size_t min_replicas = 300;
    double t_min = 8.0;
    double t_max = 30.0;
};

struct CorrectionFit {
    double leading_hat = 0.0;
    double log_coeff_hat = 0.0;
    double intercept_hat = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double theory_log_coeff = 0.0;
    bool fixed_leading = true;
    std::vector<double> t_grid;
    std::vector<double> medians;

    bool ci_contains(double c) const { return ci_lo <= c && c <= ci_hi; }
};

struct Coefficients {
    double leading, log_coeff, intercept;
};

/// Least squares on the given locations. With `fixed_leading` the slope on t
/// is held at `leading`.
inline Coefficients regress(const std::vector<double>& ts, const std::vector<double>& ys, bool fixed_leading,
                            double leading) {
    const auto n = static_cast<Eigen::Index>(ts.size());
    const int k = fixed_leading ? 2 : 3;
    Eigen::MatrixXd X(n, k);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = ts[static_cast<std::size_t>(i)];
        const double v = ys[static_cast<std::size_t>(i)];
        if (fixed_leading) {
            X(i, 0) = std::log(t);
            X(i, 1) = 1.0;
            y(i) = v - leading * t;
        } else {
            X(i, 0) = t;
            X(i, 1) = std::log(t);
            X(i, 2) = 1.0;
            y(i) = v;
        }
    }
    const Eigen::VectorXd b = X.colPivHouseholderQr().solve(y);
    if (fixed_leading) return {leading, b(0), b(1)};
    return {b(0), b(1), b(2)};
}

inline void check_inputs(const std::vector<TimeSummary>& data, const FitOptions& opt) {
    if (data.size() < 4) throw InvalidParameter("log-correction fit needs at least 4 times");
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double t = data[i].t;
        if (t < opt.t_min || t > opt.t_max) {
            throw InvalidParameter("time " + std::to_string(t) + " outside [" + std::to_string(opt.t_min) + ", " +
                                   std::to_string(opt.t_max) + "]");
        }
        if (i > 0 && !(t > data[i - 1].t)) throw InvalidParameter("time grid must be strictly increasing");
        if (data[i].maxima.size() < opt.min_replicas) {
            throw InvalidParameter("time " + std::to_string(t) + " has " + std::to_string(data[i].maxima.size()) +
                                   " replicas, need " + std::to_string(opt.min_replicas));
        }
        for (double m : data[i].maxima) {
            if (std::isnan(m)) throw InvalidParameter("maxima contain NaN");
        }
    }
    if (!(opt.level > 0.0 && opt.level < 1.0)) throw InvalidParameter("confidence level must lie in (0, 1)");
}

/// `centering` supplies the leading coefficient (used when fixed) and the
/// theoretical log coefficient reported next to the fit.
inline CorrectionFit fit_log_correction(const std::vector<TimeSummary>& data, const phase::CenteringSpec& centering,
                                        const FitOptions& opt = {}) {
    check_inputs(data, opt);
    CorrectionFit fit;
    fit.fixed_leading = opt.fixed_leading;
    fit.theory_log_coeff = centering.log_coeff;
    for (const auto& d : data) {
        fit.t_grid.push_back(d.t);
        fit.medians.push_back(stats::median(d.maxima));
    }
    const auto c = regress(fit.t_grid, fit.medians, opt.fixed_leading, centering.leading);
    fit.leading_hat = c.leading;
    fit.log_coeff_hat = c.log_coeff;
    fit.intercept_hat = c.intercept;

    if (opt.bootstrap == 0) {
        fit.ci_lo = fit.ci_hi = fit.log_coeff_hat;
        return fit;
    }
    // percentile bootstrap, resampling replicas independently at each time
    RandomStream rng(opt.seed, 0x5eed);
    std::vector<double> coeffs;
    coeffs.reserve(opt.bootstrap);
    std::vector<double> meds(data.size());
    std::vector<double> resample;
    for (std::size_t b = 0; b < opt.bootstrap; ++b) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& xs = data[i].maxima;
            resample.resize(xs.size());
            for (auto& r : resample) r = xs[static_cast<std::size_t>(rng.uniform() * static_cast<double>(xs.size()))];
            const auto mid = resample.begin() + static_cast<std::ptrdiff_t>(resample.size() / 2);
            std::nth_element(resample.begin(), mid, resample.end());
            double med = *mid;
            if (resample.size() % 2 == 0) med = 0.5 * (med + *std::max_element(resample.begin(), mid));
            meds[i] = med;
        }
        coeffs.push_back(regress(fit.t_grid, meds, opt.fixed_leading, centering.leading).log_coeff);
    }
    const double tail = 0.5 * (1.0 - opt.level);
    fit.ci_lo = stats::quantile(coeffs, tail);
    fit.ci_hi = stats::quantile(coeffs, 1.0 - tail);
    return fit;
}

}  // namespace bbm2::correction
