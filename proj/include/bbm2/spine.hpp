#pragma once

// Bessel-3 spine sampler for the truncated derivative martingale change of
// measure dQ^(K) = (D_t^(K) / K) dP on standard BBM, and tail estimators.
//
// Under Q^(K): R(t) = sqrt2 t - Xi(t) + K is a 3-d Bessel process from K, the
// spine splits at rate 2, and every off-spine child starts an ordinary BBM.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "bbm2/engine.hpp"
#include "bbm2/params.hpp"
#include "bbm2/replicas.hpp"
#include "bbm2/rng.hpp"
#include "bbm2/stats.hpp"

namespace bbm2::spine {

struct SpineConfig {
    double K = 5.0;
    double horizon = 10.0;
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    // Off-spine particles deeper than this below sqrt2 s are removed; their
    // current D-term (the conditional mean of their subtree's contribution)
    // is kept in D. Infinity disables pruning.
    double prune_depth = std::numeric_limits<double>::infinity();
    double internal_step = 0.5;
    std::size_t max_particles = 10'000'000;

    void validate() const {
        if (!(K > 0.0)) throw InvalidParameter("spine needs K > 0");
        if (!(horizon > 0.0)) throw InvalidParameter("spine needs horizon > 0");
    }
};

struct SpineSample {
    std::vector<double> fission_times;
    std::vector<double> spine_at_fission;  // Xi at each fission time
    std::vector<double> R_at_fission;
    double R0 = 0.0;
    double R_final = 0.0;
    double spine_final = 0.0;
    double D = 0.0;         // D_t^(K), pruned particles counted by their D-term at removal
    double D_pruned = 0.0;  // part of D coming from removed particles
    double weight = 0.0;    // K / D
    double max_position = -std::numeric_limits<double>::infinity();
    std::size_t particles = 0;
    std::uint64_t pruned = 0;
};

inline double d_term(double depth, double K) { return (depth + K) * std::exp(-kSqrt2 * depth); }

/// Stream layout inside the master seed: spine of replica r uses stream r << 20,
/// its k-th off-spine subtree uses (r << 20) | (k + 1).
inline SpineSample spine_simulate(const SpineConfig& cfg) {
    cfg.validate();
    const double t = cfg.horizon;
    const double K = cfg.K;
    const std::uint64_t base = cfg.replica << 20;
    RandomStream rng(cfg.seed, base);

    SpineSample out;
    out.R0 = K;
    std::array<double, 3> w{K, 0.0, 0.0};
    double now = 0.0;
    auto advance_spine = [&](double dt) {
        const double sd = std::sqrt(dt);
        for (auto& c : w) c += sd * rng.normal();
        now += dt;
        return std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    };
    for (;;) {
        const double e = rng.exponential(2.0);
        if (now + e >= t) {
            out.R_final = advance_spine(t - now);
            break;
        }
        const double r = advance_spine(e);
        out.fission_times.push_back(now);
        out.R_at_fission.push_back(r);
        out.spine_at_fission.push_back(kSqrt2 * now + K - r);
    }
    out.spine_final = kSqrt2 * t + K - out.R_final;
    out.max_position = out.spine_final;
    out.particles = 1;
    out.D = d_term(out.R_final - K, K);

    const ModelParams standard = ModelParams::standard();
    for (std::size_t k = 0; k < out.fission_times.size(); ++k) {
        const double tau = out.fission_times[k];
        const double r = out.R_at_fission[k];
        const double xi = out.spine_at_fission[k];
        const double rem = t - tau;
        const double depth0 = r - K;  // sqrt2 tau - xi
        if (depth0 > cfg.prune_depth) {
            out.D_pruned += d_term(depth0, K);
            ++out.pruned;
            continue;
        }
        if (rem <= 0.0) {
            out.D += d_term(depth0, K);
            ++out.particles;
            continue;
        }
        engine::SimConfig sc;
        sc.horizon = rem;
        sc.seed = cfg.seed;
        sc.stream = base | (k + 1);
        sc.record_paths = true;
        sc.slack_slope = kSqrt2;
        sc.max_particles = cfg.max_particles;
        if (std::isfinite(cfg.prune_depth)) {
            sc.barrier = engine::LinearBarrier{kSqrt2, cfg.prune_depth - depth0};
            sc.internal_step = cfg.internal_step;
            sc.on_prune = [&](const engine::Particle& p, double s) {
                if (r + p.min_slack < 0.0) return;
                out.D_pruned += d_term(depth0 + kSqrt2 * s - p.x, K);
            };
        }
        engine::Simulator sim(standard, sc);
        sim.run([&](const engine::PopulationSnapshot& snap) {
            if (std::abs(snap.t() - rem) > 1e-12) return;
            for (const auto& p : snap.particles()) {
                out.max_position = std::max(out.max_position, xi + p.x);
                if (r + p.min_slack < 0.0) continue;  // lineage crossed sqrt2 s + K
                out.D += d_term(depth0 + kSqrt2 * rem - p.x, K);
            }
            out.particles += snap.size();
        });
        out.pruned += sim.pruned_mass();
    }
    out.D += out.D_pruned;
    out.weight = K / out.D;
    return out;
}

/// rho x exp(-sqrt2 x - x^2/(2t) + (3/(2 sqrt2)) x log t / t)
inline double tail_upper_bound(double x, double t, double rho) {
    return rho * x * std::exp(-kSqrt2 * x - x * x / (2.0 * t) + 3.0 / (2.0 * kSqrt2) * x * std::log(t) / t);
}

/// sqrt2 t - (3/(2 sqrt2)) log t
inline double standard_centering(double t) { return kSqrt2 * t - 3.0 / (2.0 * kSqrt2) * std::log(t); }

struct TailEstimate {
    double prob = 0.0;
    double stderr_ = 0.0;
    double bound = 0.0;
    double level = 0.0;
    std::size_t replicas = 0;
    bool within_bound() const { return prob <= bound + 3.0 * stderr_; }
};

struct TailOptions {
    double K = 5.0;
    double rho = 1.0;
    double prune_depth = 8.0;
    unsigned workers = 1;
};

/// P(M_t >= m_t + x) by Q^(K) reweighting: mean of (K / D_t) 1{M_t >= level}.
inline TailEstimate importance_tail_estimate(double x, double t, std::size_t replicas, std::uint64_t seed,
                                             const TailOptions& opt = {}) {
    if (!(t > 1.0 && t <= 30.0)) throw InvalidParameter("importance_tail_estimate needs 1 < t <= 30");
    if (!(x >= 1.0 && x <= 3.0 * std::sqrt(t))) throw InvalidParameter("importance_tail_estimate needs x in [1, 3 sqrt t]");
    TailEstimate out;
    out.level = standard_centering(t) + x;
    out.bound = tail_upper_bound(x, t, opt.rho);
    out.replicas = replicas;
    auto vals = run_replicas(replicas, opt.workers, [&](std::size_t r) {
        SpineConfig cfg;
        cfg.K = opt.K;
        cfg.horizon = t;
        cfg.seed = seed;
        cfg.replica = r;
        cfg.prune_depth = opt.prune_depth;
        const auto s = spine_simulate(cfg);
        return s.max_position >= out.level ? s.weight : 0.0;
    });
    const auto ms = stats::mean_se(vals);
    out.prob = ms.mean;
    out.stderr_ = ms.stderr_;
    return out;
}

/// Direct simulation of the same probability under P, pruning below sqrt2 s - offset.
inline TailEstimate naive_tail_estimate(double x, double t, std::size_t replicas, std::uint64_t seed,
                                        double barrier_offset = 8.0, double rho = 1.0, unsigned workers = 1) {
    if (!(t > 1.0)) throw InvalidParameter("naive_tail_estimate needs t > 1");
    TailEstimate out;
    out.level = standard_centering(t) + x;
    out.bound = tail_upper_bound(x, t, rho);
    out.replicas = replicas;
    engine::SimConfig cfg;
    cfg.horizon = t;
    cfg.seed = seed;
    cfg.barrier = engine::LinearBarrier{kSqrt2, barrier_offset};
    cfg.internal_step = 0.5;
    auto schedule = engine::Simulator::make_schedule(ModelParams::standard(), cfg);
    auto vals = run_replicas(replicas, workers, [&](std::size_t r) {
        auto c = cfg;
        c.stream = r;
        return engine::simulate_final(ModelParams::standard(), c, schedule).max_position() >= out.level ? 1.0 : 0.0;
    });
    const auto ms = stats::mean_se(vals);
    out.prob = ms.mean;
    out.stderr_ = ms.stderr_;
    return out;
}

}  // namespace bbm2::spine
