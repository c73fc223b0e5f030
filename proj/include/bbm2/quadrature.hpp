#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bbm2/params.hpp"

namespace bbm2::quad {

namespace detail {

template <class F>
double simpson_step(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                    double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <class F>
double simpson(const F& f, double a, double b, double tol) {
    if (b <= a) return 0.0;
    // seed with a few panels so narrow features are not skipped by the first estimate
    constexpr int kPanels = 16;
    double total = 0.0;
    const double h = (b - a) / kPanels;
    for (int i = 0; i < kPanels; ++i) {
        const double lo = a + i * h;
        const double hi = (i + 1 == kPanels) ? b : lo + h;
        const double fa = f(lo);
        const double fb = f(hi);
        const double fm = f(0.5 * (lo + hi));
        const double whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_step(f, lo, hi, fa, fm, fb, whole, tol / kPanels, 48);
    }
    return total;
}

}  // namespace detail

/// Adaptive Simpson on [a, b] to absolute tolerance `tol`. Interior
/// `breakpoints` (discontinuities of f or its derivative) are split out.
template <class F>
double integrate(const F& f, double a, double b, double tol = 1e-10, std::vector<double> breakpoints = {}) {
    if (b < a) return -integrate(f, b, a, tol, std::move(breakpoints));
    std::vector<double> cuts{a};
    std::sort(breakpoints.begin(), breakpoints.end());
    for (double c : breakpoints) {
        if (c > cuts.back() && c < b) cuts.push_back(c);
    }
    cuts.push_back(b);
    const double per = tol / static_cast<double>(cuts.size() - 1);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        total += detail::simpson(f, cuts[i], cuts[i + 1], per);
    }
    return total;
}

/// Integral over [a, inf) through x = a + u / (1 - u); f must decay at least
/// like x^-2 for the mapped integrand to stay bounded.
template <class F>
double integrate_to_infinity(const F& f, double a, double tol = 1e-10) {
    auto mapped = [&](double u) {
        if (u >= 1.0) return 0.0;
        const double w = 1.0 - u;
        const double x = a + u / w;
        const double val = f(x) / (w * w);
        return std::isfinite(val) ? val : 0.0;
    };
    return integrate(mapped, 0.0, 1.0, tol);
}

}  // namespace bbm2::quad
