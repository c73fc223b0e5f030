#pragma once

// Additive, derivative and truncated derivative martingales, Gibbs-measure
// functionals, the Rayleigh inner product and the Gumbel-mixture fit.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bbm2/engine.hpp"
#include "bbm2/phase.hpp"
#include "bbm2/quadrature.hpp"
#include "bbm2/replicas.hpp"
#include "bbm2/stats.hpp"

namespace bbm2::functionals {

using engine::Particle;
using engine::ParticleType;
using engine::PopulationSnapshot;

/// Requested data was not recorded by the simulation.
class Unavailable : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class FitFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FunctionalEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::size_t replicas = 0;
    double t = 0.0;
    std::string tag;
    double parameter = 0.0;  // lambda or K
    std::vector<double> samples;

    static FunctionalEstimate from_samples(std::vector<double> xs, double t, std::string tag, double parameter) {
        const auto ms = stats::mean_se(xs);
        return {ms.mean, ms.stderr_, xs.size(), t, std::move(tag), parameter, std::move(xs)};
    }
};

/// Which particles enter a sum. Type1 uses the (beta, sigma2) normalization;
/// All and Type2 use the standard BBM normalization.
enum class TypeClass { All, Type1, Type2 };

inline bool selected(const Particle& p, TypeClass cls) {
    switch (cls) {
        case TypeClass::All: return true;
        case TypeClass::Type1: return p.is_type1();
        case TypeClass::Type2: return p.is_type2();
    }
    return false;
}

/// W_t(lambda). Type-1 class: sum e^{lambda X - (lambda^2 sigma2 / 2 + beta) t}.
inline double additive_W(const PopulationSnapshot& snap, double lambda, TypeClass cls = TypeClass::Type1) {
    const auto& m = snap.params();
    const double t = snap.t();
    const double drift = cls == TypeClass::Type1 ? (0.5 * lambda * lambda * m.sigma2 + m.beta) * t
                                                 : (1.0 + 0.5 * lambda * lambda) * t;
    double acc = 0.0;
    for (const auto& p : snap.particles()) {
        if (selected(p, cls)) acc += std::exp(lambda * p.x - drift);
    }
    return acc;
}

/// Z_t. Type-1 class: sum (v t - X) e^{theta X - 2 beta t}.
inline double derivative_Z(const PopulationSnapshot& snap, TypeClass cls = TypeClass::Type1) {
    const auto& m = snap.params();
    const double t = snap.t();
    const bool t1 = cls == TypeClass::Type1;
    const double speed = t1 ? m.v() : kSqrt2;
    const double rate = t1 ? m.theta() : kSqrt2;
    const double growth = t1 ? 2.0 * m.beta * t : 2.0 * t;
    double acc = 0.0;
    for (const auto& p : snap.particles()) {
        if (selected(p, cls)) acc += (speed * t - p.x) * std::exp(rate * p.x - growth);
    }
    return acc;
}

/// D_t^(K) over lineages whose recorded slack sqrt(2) s - X(s) never fell below -K.
inline double truncated_D(const PopulationSnapshot& snap, double K) {
    if (!(K > 0.0)) throw InvalidParameter("truncated_D needs K > 0");
    if (!snap.paths_recorded()) throw Unavailable("truncated_D needs a simulation with record_paths");
    if (std::abs(snap.slack_slope() - kSqrt2) > 1e-12) {
        throw Unavailable("truncated_D needs lineage slack recorded with slope sqrt(2)");
    }
    const double t = snap.t();
    double acc = 0.0;
    for (const auto& p : snap.particles()) {
        if (p.min_slack < -K) continue;
        const double depth = kSqrt2 * t - p.x;
        acc += (depth + K) * std::exp(-kSqrt2 * depth);
    }
    return acc;
}

/// Positions and time of a snapshot mapped to standard-BBM scale. Type-1
/// particles of a (beta, sigma2) BBM satisfy X(t) = (sigma / sqrt(beta)) X_std(beta t).
struct StandardView {
    std::vector<double> x;
    double t;
};

inline StandardView standard_view(const PopulationSnapshot& snap) {
    const auto& m = snap.params();
    const double scale = std::sqrt(m.beta) / m.sigma();
    StandardView v{{}, m.beta * snap.t()};
    for (const auto& p : snap.particles()) {
        if (p.is_type1()) v.x.push_back(p.x * scale);
    }
    return v;
}

struct GibbsLLN {
    double W_f;
    double W;
    double ratio;
};

/// W^f_t(eta) = sum f(X/t) e^{eta X - (eta^2/2 + 1) t} on the standardized type-1 population.
inline GibbsLLN gibbs_lln(const PopulationSnapshot& snap, const std::function<double(double)>& f, double eta) {
    if (!(eta > 0.0 && eta < kSqrt2)) throw DomainError("gibbs_lln needs eta in (0, sqrt 2)");
    const auto view = standard_view(snap);
    if (!(view.t > 0.0)) throw DomainError("gibbs_lln needs t > 0");
    const double drift = (0.5 * eta * eta + 1.0) * view.t;
    double wf = 0.0, w = 0.0;
    for (double x : view.x) {
        const double e = std::exp(eta * x - drift);
        wf += f(x / view.t) * e;
        w += e;
    }
    return {wf, w, w > 0.0 ? wf / w : 0.0};
}

/// Non-negative window G with compact support, stored as piecewise-linear
/// knots (repeated abscissae encode jumps); zero outside the knot range.
class WindowFunction {
public:
    WindowFunction(std::vector<std::pair<double, double>> knots, double r_t, double h_t)
        : knots_(std::move(knots)), r_(r_t), h_(h_t) {
        if (knots_.size() < 2) throw InvalidParameter("window needs at least two knots");
        for (std::size_t i = 0; i < knots_.size(); ++i) {
            if (!std::isfinite(knots_[i].first) || !std::isfinite(knots_[i].second) || knots_[i].second < 0.0) {
                throw InvalidParameter("window knots must be finite with non-negative values");
            }
            if (i > 0 && knots_[i].first < knots_[i - 1].first) throw InvalidParameter("window knots must be sorted");
        }
        if (!(h_ > 0.0)) throw InvalidParameter("window width h_t must be positive");
        if (!(r_ + h_ * support_lo() > 0.0 && r_ + h_ * support_hi() > 0.0)) {
            throw InvalidParameter("window r_t + y h_t must stay positive on the support of G");
        }
    }

    /// G = 1 on [a, b].
    static WindowFunction indicator(double a, double b, double r_t, double h_t) {
        return WindowFunction({{a, 0.0}, {a, 1.0}, {b, 1.0}, {b, 0.0}}, r_t, h_t);
    }

    /// Samples g on `points` uniform nodes of [-A, A].
    static WindowFunction tabulate(const std::function<double(double)>& g, double A, double r_t, double h_t,
                                   int points = 2048) {
        std::vector<std::pair<double, double>> knots;
        knots.reserve(static_cast<std::size_t>(points));
        for (int i = 0; i < points; ++i) {
            const double y = -A + 2.0 * A * i / (points - 1);
            knots.emplace_back(y, g(y));
        }
        return WindowFunction(std::move(knots), r_t, h_t);
    }

    double G(double y) const {
        if (y < knots_.front().first || y > knots_.back().first) return 0.0;
        auto it = std::upper_bound(knots_.begin(), knots_.end(), y,
                                   [](double v, const auto& k) { return v < k.first; });
        if (it == knots_.end()) return knots_.back().second;
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        const double w = (y - lo.first) / (hi.first - lo.first);
        return lo.second + w * (hi.second - lo.second);
    }

    /// F_t(z) = G((z - r_t) / h_t).
    double F(double z) const { return G((z - r_) / h_); }

    std::vector<double> breakpoints() const {
        std::vector<double> b;
        b.reserve(knots_.size());
        for (const auto& k : knots_) b.push_back(r_ + h_ * k.first);
        return b;
    }

    WindowFunction scaled(double c) const {
        auto k = knots_;
        for (auto& kv : k) kv.second *= c;
        return WindowFunction(std::move(k), r_, h_);
    }

    double support_lo() const { return knots_.front().first; }
    double support_hi() const { return knots_.back().first; }
    double r_t() const { return r_; }
    double h_t() const { return h_; }
    const std::vector<std::pair<double, double>>& knots() const { return knots_; }

private:
    std::vector<std::pair<double, double>> knots_;
    double r_;
    double h_;
};

/// <F, mu> with mu(dz) = z e^{-z^2/2} dz on (0, inf); adaptive Simpson to 1e-10.
inline double rayleigh_inner(const std::function<double(double)>& F, std::vector<double> breakpoints = {},
                             double tol = 1e-10) {
    constexpr double kUpper = 40.0;  // mu((40, inf)) = e^{-800}
    auto integrand = [&](double z) { return F(z) * z * std::exp(-0.5 * z * z); };
    return quad::integrate(integrand, 0.0, kUpper, tol, std::move(breakpoints));
}

inline double rayleigh_inner(const WindowFunction& wf) {
    return rayleigh_inner([&wf](double z) { return wf.F(z); }, wf.breakpoints());
}

/// (sqrt t / <F_t, mu>) sum F_t((sqrt2 t - X)/sqrt t) e^{-sqrt2 (sqrt2 t - X)} on the standardized population.
inline double critical_window_functional(const PopulationSnapshot& snap, const WindowFunction& window) {
    double top = 0.0;
    for (const auto& k : window.knots()) top = std::max(top, k.second);
    if (!(top > 0.0)) throw DomainError("degenerate window: G = 0");
    const WindowFunction wf = window.scaled(1.0 / top);  // G and cG give the same normalized window
    const double norm = rayleigh_inner(wf);
    if (!(norm > 0.0)) throw DomainError("degenerate window: <F_t, mu> = 0");
    const auto view = standard_view(snap);
    const double t = view.t;
    if (!(t > 0.0)) throw DomainError("critical_window_functional needs t > 0");
    const double rt = std::sqrt(t);
    double acc = 0.0;
    for (double x : view.x) {
        const double depth = kSqrt2 * t - x;
        const double f = wf.F(depth / rt);
        if (f != 0.0) acc += f * std::exp(-kSqrt2 * depth);
    }
    return rt / norm * acc;
}

/// Approximation of bar Z_R = sum_{u in B, T_u <= R} Z^(u) from one snapshot:
/// each transform subtree's derivative martingale is evaluated at the
/// snapshot time and clamped at 0 (its almost-sure limit is non-negative).
inline double bar_Z(const PopulationSnapshot& snap, double R) {
    const double t = snap.t();
    std::map<std::uint64_t, std::pair<double, double>> groups;  // root2 -> (T_u, Z^(u))
    for (const auto& p : snap.particles()) {
        if (!p.is_type2() || p.t_u > R) continue;
        const double depth = kSqrt2 * t - p.x;
        auto& g = groups[p.root2];
        g.first = p.t_u;
        g.second += depth * std::exp(-kSqrt2 * depth);
    }
    double acc = 0.0;
    for (const auto& [root, g] : groups) acc += std::max(0.0, g.second);
    return acc;
}

struct BarZOptions {
    double subtree_horizon = 10.0;
    engine::Barrier barrier = engine::LinearBarrier{kSqrt2, 10.0};
    double internal_step = 0.5;
    std::size_t max_particles = 10'000'000;
    unsigned workers = 1;
};

/// bar Z_R for each R in `Rs`, all read from the same replicas at time max(R) + s,
/// so values are pathwise comparable across R.
inline std::vector<FunctionalEstimate> bar_Z_estimate(const ModelParams& m, const std::vector<double>& Rs,
                                                      std::size_t replicas, std::uint64_t seed,
                                                      const BarZOptions& opt = {}) {
    if (phase::classify(m).tag != phase::Region::B_I_II) {
        throw InvalidParameter("bar_Z_estimate needs parameters on B_I_II (beta sigma2 = 1, beta < 1)");
    }
    if (Rs.empty()) return {};
    const double r_max = *std::max_element(Rs.begin(), Rs.end());
    engine::SimConfig cfg;
    cfg.horizon = r_max + opt.subtree_horizon;
    cfg.seed = seed;
    cfg.barrier = opt.barrier;
    cfg.internal_step = opt.internal_step;
    cfg.max_particles = opt.max_particles;
    auto schedule = engine::Simulator::make_schedule(m, cfg);
    auto rows = run_replicas(replicas, opt.workers, [&](std::size_t r) {
        engine::SimConfig c = cfg;
        c.stream = r;
        const auto snap = engine::simulate_final(m, c, schedule);
        std::vector<double> vals;
        for (double R : Rs) vals.push_back(bar_Z(snap, R));
        return vals;
    });
    std::vector<FunctionalEstimate> out;
    for (std::size_t i = 0; i < Rs.size(); ++i) {
        std::vector<double> xs;
        xs.reserve(rows.size());
        for (const auto& row : rows) xs.push_back(row[i]);
        out.push_back(FunctionalEstimate::from_samples(std::move(xs), cfg.horizon, "bar_Z", Rs[i]));
    }
    return out;
}

struct LimitConstants {
    double c_hat = 0.0;
    double ks = 0.0;
    double theta_exp = kSqrt2;
    std::size_t n = 0;
    std::string method;
};

namespace detail {

inline std::vector<double> compress_sorted(std::vector<double> v, std::size_t cap) {
    std::sort(v.begin(), v.end());
    if (v.size() <= cap) return v;
    std::vector<double> out(cap);
    for (std::size_t i = 0; i < cap; ++i) {
        const double pos = (static_cast<double>(i) + 0.5) / static_cast<double>(cap) * static_cast<double>(v.size());
        out[i] = v[std::min(v.size() - 1, static_cast<std::size_t>(pos))];
    }
    return out;
}

}  // namespace detail

/// Mixture CDF P(M <= x) = mean_j exp(-C Z_j e^{-theta x}).
inline double gumbel_mixture_cdf(double x, double C, const std::vector<double>& Z, double theta_exp = kSqrt2) {
    const double e = C * std::exp(-theta_exp * x);
    double acc = 0.0;
    for (double z : Z) acc += std::exp(-e * z);
    return acc / static_cast<double>(Z.size());
}

/// Fits C in P(M <= x) = E exp(-C Z e^{-theta x}) by minimizing the squared
/// distance between the empirical CDF and the paired mixture at up to 256
/// order statistics (Z compressed to 512 quantiles); reports the KS distance.
/// Negative Z values (finite-time martingales) are clamped at 0.
inline LimitConstants gumbel_mixture_fit(const std::vector<double>& maxima, const std::vector<double>& Z,
                                         double theta_exp = kSqrt2) {
    if (maxima.size() != Z.size()) throw InvalidParameter("gumbel_mixture_fit needs paired samples");
    if (maxima.size() < 2) throw FitFailed("gumbel_mixture_fit needs at least two samples");
    std::vector<double> zc;
    zc.reserve(Z.size());
    for (std::size_t i = 0; i < Z.size(); ++i) {
        if (!std::isfinite(maxima[i]) || !std::isfinite(Z[i])) throw FitFailed("non-finite sample");
        zc.push_back(std::max(0.0, Z[i]));
    }
    if (*std::max_element(zc.begin(), zc.end()) <= 0.0) throw FitFailed("all mixture weights are zero");

    const auto zq = detail::compress_sorted(zc, 512);
    auto sorted_max = maxima;
    std::sort(sorted_max.begin(), sorted_max.end());
    if (sorted_max.front() == sorted_max.back()) throw FitFailed("degenerate sample of maxima");
    const std::size_t n = sorted_max.size();
    const std::size_t m = std::min<std::size_t>(n, 256);
    std::vector<std::pair<double, double>> targets;  // (x, empirical cdf)
    for (std::size_t k = 0; k < m; ++k) {
        const auto i = static_cast<std::size_t>((static_cast<double>(k) + 0.5) / static_cast<double>(m) * n);
        targets.emplace_back(sorted_max[i], (static_cast<double>(i) + 0.5) / static_cast<double>(n));
    }
    auto loss = [&](double logc) {
        const double c = std::exp(logc);
        double acc = 0.0;
        for (const auto& [x, f] : targets) {
            const double d = gumbel_mixture_cdf(x, c, zq, theta_exp) - f;
            acc += d * d;
        }
        return acc;
    };
    // centre the coarse scan on the scale implied by the sample median
    const double med = sorted_max[n / 2];
    const double centre = theta_exp * med;
    double best = centre;
    double best_loss = loss(centre);
    for (double d = -30.0; d <= 30.0; d += 0.25) {
        const double l = loss(centre + d);
        if (l < best_loss) {
            best_loss = l;
            best = centre + d;
        }
    }
    double lo = best - 0.25, hi = best + 0.25;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    double f1 = loss(x1), f2 = loss(x2);
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = loss(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = loss(x2);
        }
    }
    LimitConstants out;
    out.c_hat = std::exp(0.5 * (lo + hi));
    out.theta_exp = theta_exp;
    out.n = n;
    out.ks = stats::ks_one_sample(maxima, [&](double x) { return gumbel_mixture_cdf(x, out.c_hat, zq, theta_exp); });
    out.method = "least-squares CDF match, golden section on log C";
    return out;
}

}  // namespace bbm2::functionals
