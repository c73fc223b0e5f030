#pragma once

// First-moment checks of the engine: mean population sizes and the
// many-to-one formula for type-2 particles.

#include <cmath>
#include <functional>
#include <vector>

#include "bbm2/engine.hpp"
#include "bbm2/replicas.hpp"
#include "bbm2/stats.hpp"

namespace bbm2::engine {

struct EstimateVsExpected {
    double estimate = 0.0;
    double stderr_ = 0.0;
    double expected = 0.0;

    double z() const { return stats::z_score(estimate, stderr_, expected, 0.0); }
};

struct MeanSizeCheck {
    EstimateVsExpected type1;
    EstimateVsExpected type2;
};

/// alpha * int_0^t e^{beta s + (t - s)} ds
inline double expected_type2_count(const ModelParams& m, double t) {
    if (t <= 0.0) return 0.0;
    if (std::abs(m.beta - 1.0) < 1e-12) return m.alpha * t * std::exp(t);
    return m.alpha * (std::exp(m.beta * t) - std::exp(t)) / (m.beta - 1.0);
}

inline MeanSizeCheck population_mean_size_check(const ModelParams& m, double t, std::size_t replicas,
                                                std::uint64_t seed, unsigned workers = 1) {
    m.validate();
    if (t < 0.0 || t > 12.0) throw InvalidParameter("population_mean_size_check needs 0 <= t <= 12");
    MeanSizeCheck out;
    out.type1.expected = std::exp(m.beta * t);
    out.type2.expected = expected_type2_count(m, t);
    if (t == 0.0) {
        out.type1.estimate = 1.0;
        return out;
    }
    SimConfig cfg;
    cfg.horizon = t;
    cfg.seed = seed;
    auto counts = run_replicas(replicas, workers, [&](std::size_t r) {
        SimConfig c = cfg;
        c.stream = r;
        const auto snap = simulate_final(m, c);
        return std::pair<double, double>(static_cast<double>(snap.count(ParticleType::Type1)),
                                         static_cast<double>(snap.count(ParticleType::Type2)));
    });
    std::vector<double> n1, n2;
    for (auto [a, b] : counts) {
        n1.push_back(a);
        n2.push_back(b);
    }
    const auto s1 = stats::mean_se(n1);
    const auto s2 = stats::mean_se(n2);
    out.type1.estimate = s1.mean;
    out.type1.stderr_ = s1.stderr_;
    out.type2.estimate = s2.mean;
    out.type2.stderr_ = s2.stderr_;
    return out;
}

/// f(x, s): x = X_u(t), s = T_u.
using PathFunctional = std::function<double(double x, double s)>;

struct ManyToOneCheck {
    double lhs = 0.0;
    double lhs_se = 0.0;
    double rhs = 0.0;
    double rhs_se = 0.0;
    double z_score = 0.0;
};

/// Right-hand side alpha int_0^t e^{beta s + (t-s)} E f(sigma B_s + B_t - B_s, s) ds:
/// composite Simpson over s, Monte Carlo (`paths_per_node` Gaussians) at each node.
inline std::pair<double, double> many_to_one_rhs(const ModelParams& m, double t, const PathFunctional& f,
                                                 std::size_t paths_per_node, std::uint64_t seed,
                                                 int intervals = 256) {
    if (intervals % 2) ++intervals;
    RandomStream rng(seed, 0xA11CE);
    const double h = t / intervals;
    double value = 0.0;
    double var = 0.0;
    for (int k = 0; k <= intervals; ++k) {
        const double s = k * h;
        const double w = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        const double sd = std::sqrt(m.sigma2 * s + (t - s));
        std::vector<double> samples(paths_per_node);
        for (auto& v : samples) v = f(sd * rng.normal(), s);
        const auto ms = stats::mean_se(samples);
        const double scale = m.alpha * std::exp(m.beta * s + (t - s)) * w * h / 3.0;
        value += scale * ms.mean;
        var += scale * scale * ms.stderr_ * ms.stderr_;
    }
    return {value, std::sqrt(var)};
}

inline ManyToOneCheck many_to_one_check(const ModelParams& m, double t, const PathFunctional& f,
                                        std::size_t replicas, std::uint64_t seed, std::size_t paths_per_node = 4000,
                                        unsigned workers = 1) {
    m.validate();
    if (!(t > 0.0 && t <= 10.0)) throw InvalidParameter("many_to_one_check needs 0 < t <= 10");
    SimConfig cfg;
    cfg.horizon = t;
    cfg.seed = seed;
    auto sums = run_replicas(replicas, workers, [&](std::size_t r) {
        SimConfig c = cfg;
        c.stream = r;
        const auto snap = simulate_final(m, c);
        double acc = 0.0;
        for (const auto& p : snap.particles()) {
            if (p.is_type2()) acc += f(p.x, p.t_u);
        }
        return acc;
    });
    ManyToOneCheck out;
    const auto l = stats::mean_se(sums);
    out.lhs = l.mean;
    out.lhs_se = l.stderr_;
    std::tie(out.rhs, out.rhs_se) = many_to_one_rhs(m, t, f, paths_per_node, seed ^ 0x5DEECE66DULL);
    out.z_score = stats::z_score(out.lhs, out.lhs_se, out.rhs, out.rhs_se);
    return out;
}

}  // namespace bbm2::engine
