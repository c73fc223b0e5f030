#pragma once

// Closed-form Brownian bridge, Brownian box and Bessel-3 formulas, with
// discretized Monte Carlo counterparts.

#include <cmath>
#include <string>
#include <vector>

#include "bbm2/engine.hpp"
#include "bbm2/params.hpp"
#include "bbm2/phase.hpp"
#include "bbm2/quadrature.hpp"
#include "bbm2/replicas.hpp"
#include "bbm2/rng.hpp"
#include "bbm2/stats.hpp"

namespace bbm2::gauss {

struct BridgeSpec {
    double x1 = 0.0;
    double x2 = 0.0;
    double t = 1.0;

    void validate() const {
        if (!(x1 >= 0.0 && x2 >= 0.0)) throw DomainError("bridge line heights must be >= 0");
        if (!(t > 0.0)) throw DomainError("bridge duration must be > 0");
    }
};

/// P(B_s <= line from (0, x1) to (t, x2) for all s | B_0 = B_t = 0).
inline double bridge_below_line_prob(const BridgeSpec& spec) {
    spec.validate();
    return -std::expm1(-2.0 * spec.x1 * spec.x2 / spec.t);
}

/// How a discretized path accounts for barrier crossings between grid points.
enum class Crossing {
    GridOnly,  // check grid points only
    Midpoint,  // additionally sample the bridge midpoint of every step
    Exact,     // weight by the exact per-step bridge survival probability
};

struct MCResult {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
};

inline MCResult summarize(const std::vector<double>& xs) {
    const auto ms = stats::mean_se(xs);
    return {ms.mean, ms.stderr_, xs.size()};
}

namespace detail {

/// Survival weight of one step of a Brownian path (variance `var` per unit
/// time) between gaps d0, d1 >= 0 below a linear barrier over duration dt.
inline double step_survival(double d0, double d1, double var_dt, Crossing mode, RandomStream& rng) {
    if (d0 < 0.0 || d1 < 0.0) return 0.0;
    switch (mode) {
        case Crossing::GridOnly: return 1.0;
        case Crossing::Exact: return -std::expm1(-2.0 * d0 * d1 / var_dt);
        case Crossing::Midpoint: {
            // gap process is a bridge between d0 and d1 with variance var_dt
            const double mid = 0.5 * (d0 + d1) + std::sqrt(var_dt / 4.0) * rng.normal();
            return mid >= 0.0 ? 1.0 : 0.0;
        }
    }
    return 1.0;
}

}  // namespace detail

/// Discretized Brownian bridge on `steps` points, checked against the line of `spec`.
inline MCResult bridge_below_line_mc(const BridgeSpec& spec, std::size_t paths, std::size_t steps,
                                     std::uint64_t seed, Crossing mode = Crossing::Exact) {
    spec.validate();
    const double dt = spec.t / static_cast<double>(steps);
    auto line = [&](double s) { return spec.x1 + (spec.x2 - spec.x1) * s / spec.t; };
    RandomStream rng(seed, 0);
    std::vector<double> vals(paths);
    std::vector<double> w(steps + 1);
    for (auto& v : vals) {
        // Brownian motion then pinned: b(s) = w(s) - (s/t) w(t)
        w[0] = 0.0;
        const double sd = std::sqrt(dt);
        for (std::size_t k = 1; k <= steps; ++k) w[k] = w[k - 1] + sd * rng.normal();
        double weight = 1.0;
        double prev_gap = line(0.0);
        for (std::size_t k = 1; k <= steps && weight > 0.0; ++k) {
            const double s = static_cast<double>(k) * dt;
            const double b = w[k] - s / spec.t * w[steps];
            const double gap = line(s) - b;
            weight *= detail::step_survival(prev_gap, gap, dt, mode, rng);
            prev_gap = gap;
        }
        if (spec.x1 == 0.0 || spec.x2 == 0.0) weight = 0.0;  // pinned on the line
        v = weight;
    }
    return summarize(vals);
}

struct BoxCheck {
    double mc_prob = 0.0;
    double stderr_ = 0.0;
    double bound = 0.0;
    double C = 2.0;
    bool pass = false;
};

inline constexpr double kBoxConstant = 2.0;

/// MC of P(B_s <= K for s <= t, B_t - K in [-y-1, -y]) against C K (y+1)/(1+t)^{3/2}.
inline BoxCheck brownian_box_bound_check(double K, double y, double t, std::size_t replicas, std::uint64_t seed,
                                         std::size_t steps = 1000, double C = kBoxConstant) {
    if (!(K >= 1.0)) throw InvalidParameter("box check needs K >= 1");
    if (!(y >= 0.0)) throw InvalidParameter("box check needs y >= 0");
    if (!(t > 0.0)) throw InvalidParameter("box check needs t > 0");
    const double dt = t / static_cast<double>(steps);
    const double sd = std::sqrt(dt);
    RandomStream rng(seed, 1);
    std::vector<double> vals(replicas);
    for (auto& v : vals) {
        double b = 0.0;
        double weight = 1.0;
        for (std::size_t k = 0; k < steps && weight > 0.0; ++k) {
            const double nb = b + sd * rng.normal();
            weight *= detail::step_survival(K - b, K - nb, dt, Crossing::Exact, rng);
            b = nb;
        }
        const double end = b - K;
        v = (end >= -y - 1.0 && end <= -y) ? weight : 0.0;
    }
    BoxCheck out;
    const auto r = summarize(vals);
    out.mc_prob = r.mean;
    out.stderr_ = r.stderr_;
    out.C = C;
    out.bound = C * K * (y + 1.0) / std::pow(1.0 + t, 1.5);
    out.pass = out.mc_prob <= out.bound;
    return out;
}

/// Transition density of the 3-d Bessel process from x to z in time s.
inline double bessel3_density(double x, double s, double z) {
    if (!(x > 0.0 && s > 0.0 && z > 0.0)) throw DomainError("bessel3_density needs x, s, z > 0");
    const double a = 2.0 * x * z / s;
    const double ratio = -std::expm1(-a) / a;  // (1 - e^{-2xz/s}) / (2xz/s)
    return std::sqrt(2.0 / kPi) * z * z * std::exp(-(z - x) * (z - x) / (2.0 * s)) * ratio / std::pow(s, 1.5);
}

/// x -> 0 limit of bessel3_density.
inline double bessel3_density_from_origin(double s, double z) {
    if (!(s > 0.0 && z > 0.0)) throw DomainError("bessel3_density_from_origin needs s, z > 0");
    return std::sqrt(2.0 / kPi) * z * z * std::exp(-z * z / (2.0 * s)) / std::pow(s, 1.5);
}

/// Density in s of the first passage of a 3-d Bessel process from u to level < u.
inline double bessel3_hitting_density(double u, double level, double s) {
    if (!(level > 0.0 && level < u)) throw DomainError("bessel3_hitting_density needs 0 < level < u");
    if (!(s > 0.0)) throw DomainError("bessel3_hitting_density needs s > 0");
    const double d = u - level;
    return level / u * d * std::exp(-d * d / (2.0 * s)) / (std::sqrt(2.0 * kPi) * std::pow(s, 1.5));
}

/// Integral of bessel3_density over z in (0, inf).
inline double bessel3_total_mass(double x, double s, double tol = 1e-10) {
    const double hi = x + 40.0 * std::sqrt(s);
    return quad::integrate([&](double z) { return bessel3_density(x, s, z); }, 1e-300, hi, tol, {x});
}

/// Integral of the hitting density over s in (0, s_max], through s = d^2 / w^2.
inline double bessel3_hitting_mass(double u, double level, double s_max = INFINITY, double tol = 1e-10) {
    const double d = u - level;
    bessel3_hitting_density(u, level, 1.0);  // validates arguments
    const double w_lo = std::isfinite(s_max) ? d / std::sqrt(s_max) : 0.0;
    auto f = [&](double w) {
        if (w <= 0.0) return 2.0 * level / u / std::sqrt(2.0 * kPi);
        const double s = d * d / (w * w);
        return bessel3_hitting_density(u, level, s) * 2.0 * d * d / (w * w * w);
    };
    return quad::integrate(f, w_lo, std::max(w_lo, 40.0), tol);
}

/// MC estimate of P(|(x,0,0) + W_s| in [a, b]) for 3-d Brownian W.
inline MCResult bessel3_interval_mc(double x, double s, double a, double b, std::size_t paths, std::uint64_t seed) {
    RandomStream rng(seed, 2);
    const double sd = std::sqrt(s);
    std::vector<double> vals(paths);
    for (auto& v : vals) {
        const double c0 = x + sd * rng.normal(), c1 = sd * rng.normal(), c2 = sd * rng.normal();
        const double r = std::sqrt(c0 * c0 + c1 * c1 + c2 * c2);
        v = (r >= a && r <= b) ? 1.0 : 0.0;
    }
    return summarize(vals);
}

/// MC of P(tau_level <= s_max) for the Bessel-3 norm of 3-d Brownian motion from u,
/// stepped at dt; the per-step crossing of the sphere is approximated by the
/// 1-d bridge formula in the radial gap (exact in the limit dt -> 0).
inline MCResult bessel3_hitting_mc(double u, double level, double s_max, std::size_t paths, double dt,
                                   std::uint64_t seed) {
    if (!(level > 0.0 && level < u)) throw DomainError("bessel3_hitting_mc needs 0 < level < u");
    RandomStream rng(seed, 3);
    const auto steps = static_cast<std::size_t>(std::ceil(s_max / dt));
    const double h = s_max / static_cast<double>(steps);
    const double sd = std::sqrt(h);
    std::vector<double> vals(paths);
    for (auto& v : vals) {
        double c[3] = {u, 0.0, 0.0};
        double r = u;
        double survive = 1.0;
        for (std::size_t k = 0; k < steps; ++k) {
            for (double& ci : c) ci += sd * rng.normal();
            const double nr = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
            if (nr <= level) {
                survive = 0.0;
                break;
            }
            survive *= -std::expm1(-2.0 * (r - level) * (nr - level) / h);
            r = nr;
        }
        v = 1.0 - survive;
    }
    return summarize(vals);
}

struct Lemma22Check {
    double mc_prob = 0.0;
    double stderr_ = 0.0;
    double c_hat = 0.0;
    double w_t = 0.0;
};

/// P(sigma B_r <= v r + K for r <= s | sigma B_s + B_t - B_s = v t - w_t + x).
/// The path sigma B_r - sigma2 r/(sigma2 s + t - s) Y is independent of
/// Y = sigma B_s + B_t - B_s, so conditioned paths are obtained by shifting
/// unconditioned ones; crossings between grid points use bridge weights.
/// w_t defaults to (3 / (2 theta)) log t.
inline Lemma22Check lemma22_bridge_estimate_check(const ModelParams& m, double K, double x, double s, double t,
                                                  std::size_t replicas, std::uint64_t seed,
                                                  double w_t = NAN, std::size_t steps = 1000) {
    m.validate();
    if (m.sigma2 > 1.0) throw InvalidParameter("bridge estimate check needs sigma2 <= 1");
    const auto region = phase::classify(m).tag;
    if (region != phase::Region::C_I && region != phase::Region::B_I_III) {
        throw InvalidParameter("bridge estimate check needs parameters in C_I or on B_I_III");
    }
    if (!(t > 1.0)) throw InvalidParameter("bridge estimate check needs t > 1");
    if (!(s <= t && s >= t - std::sqrt(t) * std::log(t) && s > 0.0)) {
        throw InvalidParameter("bridge estimate check needs s in [t - sqrt(t) log t, t]");
    }
    if (!(K >= 0.0)) throw InvalidParameter("bridge estimate check needs K >= 0");
    if (std::isnan(w_t)) w_t = 3.0 / (2.0 * m.theta()) * std::log(t);
    const double v = m.v();
    const double sigma = m.sigma();
    const double target = v * t - w_t + x;
    const double denom = m.sigma2 * s + (t - s);
    const double dt = s / static_cast<double>(steps);
    const double sd = std::sqrt(dt);
    RandomStream rng(seed, 4);
    std::vector<double> path(steps + 1);
    std::vector<double> vals(replicas);
    for (auto& val : vals) {
        path[0] = 0.0;
        for (std::size_t k = 1; k <= steps; ++k) path[k] = path[k - 1] + sigma * sd * rng.normal();
        const double y = path[steps] + std::sqrt(t - s) * rng.normal();
        const double shift = (target - y) / denom;  // conditioned path: path[k] + sigma2 r shift
        double weight = 1.0;
        double prev_gap = K;  // barrier v r + K at r = 0
        for (std::size_t k = 1; k <= steps && weight > 0.0; ++k) {
            const double r = static_cast<double>(k) * dt;
            const double gap = v * r + K - (path[k] + m.sigma2 * r * shift);
            weight *= detail::step_survival(prev_gap, gap, m.sigma2 * dt, Crossing::Exact, rng);
            prev_gap = gap;
        }
        if (K == 0.0) weight = 0.0;  // starts on the barrier
        val = weight;
    }
    Lemma22Check out;
    const auto r = summarize(vals);
    out.mc_prob = r.mean;
    out.stderr_ = r.stderr_;
    out.w_t = w_t;
    out.c_hat = out.mc_prob * t / (t - s + w_t + std::abs(x));
    return out;
}

/// Fraction of replicas in which some type-1 particle is at or above v s + K at a stop.
inline std::vector<double> upper_envelope_fraction(const ModelParams& m, double t, const std::vector<double>& Ks,
                                                   std::size_t replicas, std::uint64_t seed, double step = 0.25) {
    engine::SimConfig cfg;
    cfg.horizon = t;
    cfg.internal_step = step;
    cfg.seed = seed;
    std::vector<double> kmin(Ks.size(), 0.0);
    std::vector<std::size_t> hits(Ks.size(), 0);
    for (std::size_t r = 0; r < replicas; ++r) {
        cfg.stream = r;
        // stop times are emitted by listing them as checkpoints
        cfg.checkpoint_times = engine::stop_times(cfg);
        double worst = -INFINITY;  // max over stops of (X - v s)
        engine::Simulator sim({m.beta, m.sigma2, 0.0}, cfg);
        sim.run([&](const engine::PopulationSnapshot& snap) {
            worst = std::max(worst, snap.max_position(engine::ParticleType::Type1) - m.v() * snap.t());
        });
        for (std::size_t i = 0; i < Ks.size(); ++i) hits[i] += worst >= Ks[i] ? 1 : 0;
    }
    std::vector<double> out;
    for (auto h : hits) out.push_back(static_cast<double>(h) / static_cast<double>(replicas));
    return out;
}

struct CheckRow {
    std::string check;
    std::string params;
    double mc;
    double bound_or_ratio;
    bool pass;
};

inline constexpr std::string_view kCheckCsvHeader = "check,params,mc,bound_or_ratio,pass";

}  // namespace bbm2::gauss
