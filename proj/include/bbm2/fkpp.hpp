#pragma once

// Tail of the maximum via the coupled F-KPP system. With u_i(tau, z) the
// probability that a system started from one type-i particle at 0 has some
// particle above z at time tau:
//   d u2 = 1/2 u2'' + u2 (1 - u2)
//   d u1 = sigma2/2 u1'' + beta u1 (1 - u1) + alpha (1 - u1) u2
// with u_i(0, z) = 1{z < 0}. Diffusion steps are Crank-Nicolson (backward
// Euler for the first steps to damp the initial jump), reactions are exact
// for u2 and RK4 for u1, combined by Strang splitting.

#include <algorithm>
#include <cmath>
#include <vector>

#include "bbm2/engine.hpp"
#include "bbm2/replicas.hpp"
#include "bbm2/rng.hpp"

namespace bbm2::fkpp {

struct Grid {
    double z_min = -20.0;
    double z_max = 80.0;
    double dz = 0.02;
    double dt = 0.005;

    void validate() const {
        if (!(z_max > z_min) || !(dz > 0.0) || !(dt > 0.0)) throw InvalidParameter("bad F-KPP grid");
        if ((z_max - z_min) / dz > 2e6) throw InvalidParameter("F-KPP grid too fine");
    }
};

/// Tail functions u1, u2 at one age tau on a uniform z grid.
class MaxTail {
public:
    MaxTail(double tau, Grid g, std::vector<double> u1, std::vector<double> u2)
        : tau_(tau), g_(g), u1_(std::move(u1)), u2_(std::move(u2)) {}

    double tau() const { return tau_; }
    const Grid& grid() const { return g_; }

    /// P(max > z) from one particle of the given type.
    double tail(engine::ParticleType type, double z) const {
        const auto& u = type == engine::ParticleType::Type1 ? u1_ : u2_;
        if (tau_ == 0.0) return z < 0.0 ? 1.0 : 0.0;
        if (z <= g_.z_min) return u.front();
        if (z >= g_.z_max) return 0.0;
        const double pos = (z - g_.z_min) / g_.dz;
        const auto i = std::min(static_cast<std::size_t>(pos), u.size() - 2);
        const double f = pos - static_cast<double>(i);
        return u[i] + f * (u[i + 1] - u[i]);
    }

    double cdf(engine::ParticleType type, double z) const { return 1.0 - tail(type, z); }

    /// Median of the maximum from one particle at 0.
    double median(engine::ParticleType type) const {
        double lo = g_.z_min, hi = g_.z_max;
        for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
            const double mid = 0.5 * (lo + hi);
            (tail(type, mid) > 0.5 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

private:
    double tau_;
    Grid g_;
    std::vector<double> u1_, u2_;
};

namespace detail {

/// Solves (1 + 2r) x_i - r x_{i-1} - r x_{i+1} = d_i with fixed end values.
inline void tridiag_solve(double r, std::vector<double>& d, double left, double right, std::vector<double>& c) {
    const std::size_t n = d.size();
    d.front() = left;
    d.back() = right;
    c.assign(n, 0.0);
    // forward sweep on interior rows, end rows are identities
    double prev_c = 0.0, prev_d = left;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double b = 1.0 + 2.0 * r;
        const double denom = b + r * prev_c;
        c[i] = -r / denom;
        d[i] = (d[i] + r * prev_d) / denom;
        prev_c = c[i];
        prev_d = d[i];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
        d[i] -= c[i] * d[i + 1];
    }
}

/// theta-scheme diffusion step for u_t = D u_zz.
inline void diffuse(std::vector<double>& u, double D, double dt, double dz, bool implicit_only,
                    std::vector<double>& rhs, std::vector<double>& work) {
    const double lambda = D * dt / (dz * dz);
    const double left = u.front(), right = u.back();
    const std::size_t n = u.size();
    rhs.resize(n);
    if (implicit_only) {
        rhs = u;
        tridiag_solve(lambda, rhs, left, right, work);
    } else {
        const double r = 0.5 * lambda;
        rhs[0] = left;
        rhs[n - 1] = right;
        for (std::size_t i = 1; i + 1 < n; ++i) rhs[i] = u[i] + r * (u[i - 1] - 2.0 * u[i] + u[i + 1]);
        tridiag_solve(r, rhs, left, right, work);
    }
    u.swap(rhs);
}

inline void react(std::vector<double>& u1, std::vector<double>& u2, const ModelParams& m, double h) {
    const double e = std::exp(h);
    const double eh = std::exp(0.5 * h);
    auto f1 = [&](double a, double b) { return m.beta * a * (1.0 - a) + m.alpha * (1.0 - a) * b; };
    for (std::size_t i = 0; i < u1.size(); ++i) {
        const double b0 = u2[i];
        const double bh = b0 * eh / (1.0 - b0 + b0 * eh);
        const double b1 = b0 * e / (1.0 - b0 + b0 * e);
        const double a = u1[i];
        const double k1 = f1(a, b0);
        const double k2 = f1(a + 0.5 * h * k1, bh);
        const double k3 = f1(a + 0.5 * h * k2, bh);
        const double k4 = f1(a + h * k3, b1);
        u1[i] = std::clamp(a + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), 0.0, 1.0);
        u2[i] = b1;
    }
}

}  // namespace detail

/// Tails at each requested age (ascending), from one solve.
inline std::vector<MaxTail> solve_max_tail(const ModelParams& m, std::vector<double> taus, const Grid& g = {}) {
    m.validate();
    g.validate();
    std::sort(taus.begin(), taus.end());
    if (!taus.empty() && taus.front() < 0.0) throw InvalidParameter("ages must be >= 0");
    const auto n = static_cast<std::size_t>(std::llround((g.z_max - g.z_min) / g.dz)) + 1;
    Grid grid = g;
    grid.z_max = g.z_min + static_cast<double>(n - 1) * g.dz;
    std::vector<double> u1(n), u2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = grid.z_min + static_cast<double>(i) * g.dz;
        u1[i] = u2[i] = z < 0.0 ? 1.0 : (z == 0.0 ? 0.5 : 0.0);
    }
    std::vector<MaxTail> out;
    std::vector<double> rhs, work;
    double tau = 0.0;
    std::size_t step = 0;
    for (double target : taus) {
        while (tau < target - 1e-12) {
            const double h = std::min(g.dt, target - tau);
            const bool startup = step < 8;
            detail::react(u1, u2, m, 0.5 * h);
            if (startup) {
                // two backward Euler half steps damp the jump at z = 0
                for (int k = 0; k < 2; ++k) {
                    detail::diffuse(u1, 0.5 * m.sigma2, 0.5 * h, g.dz, true, rhs, work);
                    detail::diffuse(u2, 0.5, 0.5 * h, g.dz, true, rhs, work);
                }
            } else {
                detail::diffuse(u1, 0.5 * m.sigma2, h, g.dz, false, rhs, work);
                detail::diffuse(u2, 0.5, h, g.dz, false, rhs, work);
            }
            detail::react(u1, u2, m, 0.5 * h);
            tau += h;
            ++step;
        }
        out.emplace_back(target, grid, u1, u2);
    }
    return out;
}

inline MaxTail solve_max_tail(const ModelParams& m, double tau, const Grid& g = {}) {
    return solve_max_tail(m, std::vector<double>{tau}, g).front();
}

/// log P(max at s + tau <= y | population at s), by the branching property.
inline double conditional_log_cdf(const std::vector<engine::Particle>& pop, const MaxTail& tail, double y) {
    double acc = 0.0;
    for (const auto& p : pop) {
        const double u = tail.tail(p.type, y - p.x);
        if (u >= 1.0) return -INFINITY;
        acc += std::log1p(-u);
    }
    return acc;
}

/// Draws the maximum at s + tau given the population at s, by inversion.
inline double sample_conditional_max(const std::vector<engine::Particle>& pop, const MaxTail& tail,
                                     RandomStream& rng) {
    if (pop.empty()) return -INFINITY;
    const double target = std::log(rng.uniform_open());
    double top = -INFINITY;
    for (const auto& p : pop) top = std::max(top, p.x);
    const auto& g = tail.grid();
    // bracket: below top + z_min the CDF is ~0, above top + z_max it is 1
    double lo = top + g.z_min, hi = top + g.z_max;
    if (conditional_log_cdf(pop, tail, lo) >= target) return lo;
    for (int it = 0; it < 100 && hi - lo > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        (conditional_log_cdf(pop, tail, mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct ConditionalRun {
    double s0 = 5.0;                 // exact simulation up to here
    std::uint64_t seed = 0;
    std::uint64_t stream_offset = 0;  // replica r uses engine stream stream_offset + r
    unsigned workers = 1;
    std::size_t max_particles = 10'000'000;
};

/// Maxima at time t: exact engine run to s0, then inversion of the
/// conditional law of the maximum given the population at s0.
inline std::vector<double> conditional_max_samples(const ModelParams& m, double t, std::size_t replicas,
                                                   const MaxTail& tail, const ConditionalRun& opt) {
    if (!(opt.s0 > 0.0 && opt.s0 <= t)) throw InvalidParameter("s0 must lie in (0, t]");
    if (std::abs(tail.tau() - (t - opt.s0)) > 1e-9) throw InvalidParameter("tail table age must equal t - s0");
    engine::SimConfig cfg;
    cfg.horizon = opt.s0;
    cfg.seed = opt.seed;
    cfg.max_particles = opt.max_particles;
    return run_replicas(replicas, opt.workers, [&](std::size_t r) {
        engine::SimConfig c = cfg;
        c.stream = opt.stream_offset + r;
        const auto snap = engine::simulate_final(m, c);
        RandomStream rng(opt.seed, (std::uint64_t{1} << 62) | c.stream);
        return sample_conditional_max(snap.particles(), tail, rng);
    });
}

}  // namespace bbm2::fkpp
