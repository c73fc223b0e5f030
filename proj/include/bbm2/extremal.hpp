#pragma once

// Centered point measures of the two-type population, localization windows
// for the type-transformation time, decoration libraries and decorated
// Poisson point process sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bbm2/engine.hpp"
#include "bbm2/phase.hpp"
#include "bbm2/replicas.hpp"
#include "bbm2/rng.hpp"
#include "bbm2/stats.hpp"

namespace bbm2::extremal {

using engine::ParticleType;
using engine::PopulationSnapshot;

struct CenteredPoint {
    double x = 0.0;        // X_u(t) - m(t)
    double t_u = engine::kNaN;
    double x_at_tu = engine::kNaN;
    ParticleType type = ParticleType::Type1;
};

struct CenteredPointMeasure {
    double t = 0.0;
    double m_t = 0.0;
    double A = 0.0;  // points below -A are dropped
    phase::Region region = phase::Region::C_I;
    bool type2_only = false;
    std::uint64_t replica = 0;
    std::vector<CenteredPoint> points;  // sorted by x, descending

    bool empty() const { return points.empty(); }
    std::size_t size() const { return points.size(); }
    double max() const { return points.empty() ? -std::numeric_limits<double>::infinity() : points.front().x; }
};

inline CenteredPointMeasure centered_measure(const PopulationSnapshot& snap, const phase::CenteringSpec& centering,
                                             double A, bool type2_only = false) {
    if (!(A >= 0.0)) throw InvalidParameter("cutoff A must be >= 0");
    CenteredPointMeasure out;
    out.t = snap.t();
    out.m_t = centering(snap.t());
    out.A = A;
    out.region = centering.region;
    out.type2_only = type2_only;
    out.replica = snap.stream();
    for (const auto& p : snap.particles()) {
        if (type2_only && !p.is_type2()) continue;
        const double x = p.x - out.m_t;
        if (x < -A) continue;
        out.points.push_back({x, p.t_u, p.x_at_tu, p.type});
    }
    std::sort(out.points.begin(), out.points.end(), [](const CenteredPoint& a, const CenteredPoint& b) {
        if (a.x != b.x) return a.x > b.x;
        return a.t_u < b.t_u;
    });
    return out;
}

inline CenteredPointMeasure centered_measure(const PopulationSnapshot& snap, double A, bool type2_only = false) {
    return centered_measure(snap, phase::centering_spec(snap.params()), A, type2_only);
}

struct MeasurePair {
    CenteredPointMeasure all;
    CenteredPointMeasure type2;

    bool max_equal() const { return all.max() == type2.max(); }
};

inline MeasurePair centered_measures(const PopulationSnapshot& snap, const phase::CenteringSpec& centering, double A) {
    return {centered_measure(snap, centering, A, false), centered_measure(snap, centering, A, true)};
}

// ---- localization ---------------------------------------------------------

/// Accept predicate on (T_u, X_u(T_u)) of a type-2 particle, per boundary.
struct LocalizationWindow {
    phase::Region regime = phase::Region::B_II_III;
    double R = 10.0;
    double v = 0.0;      // type-1 speed, used on B_I_III
    double theta = 0.0;  // type-1 critical exponent, used on B_I_III

    static LocalizationWindow make(const ModelParams& m, double R) {
        const auto tag = phase::classify(m).tag;
        if (tag != phase::Region::B_II_III && tag != phase::Region::B_I_III && tag != phase::Region::B_I_II) {
            throw InvalidParameter("localization windows exist only on B_II_III, B_I_III and B_I_II");
        }
        if (!(R >= 1.0)) throw InvalidParameter("window parameter R must be >= 1");
        return {tag, R, m.v(), m.theta()};
    }

    /// delta(x; s, t) = x - v s + (theta - v)(t - s)
    double delta(double x, double s, double t) const { return x - v * s + (theta - v) * (t - s); }

    bool accept(const CenteredPoint& p, double t) const {
        if (p.type != ParticleType::Type2) return true;
        const double s = p.t_u;
        if (std::isinf(R)) return true;
        switch (regime) {
            case phase::Region::B_II_III: {
                const double r = std::sqrt(t);
                return s >= r / R && s <= R * r;
            }
            case phase::Region::B_I_III: {
                const double gap = t - s;
                const double r = std::sqrt(t);
                if (gap < r / R || gap > R * r) return false;
                return std::abs(delta(p.x_at_tu, s, t)) <= R * std::sqrt(gap);
            }
            case phase::Region::B_I_II: return s <= R;
            default: return false;
        }
    }
};

/// True when every type-2 point at or above -A lies in the window.
inline bool window_accepts(const CenteredPointMeasure& m, const LocalizationWindow& w, double A) {
    for (const auto& p : m.points) {
        if (p.x < -A) break;
        if (!w.accept(p, m.t)) return false;
    }
    return true;
}

struct Fraction {
    double value = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
};

inline Fraction localization_fraction(const std::vector<CenteredPointMeasure>& measures, const LocalizationWindow& w,
                                      double A) {
    if (measures.empty()) throw InvalidParameter("localization_fraction needs at least one measure");
    const double t = measures.front().t;
    std::size_t hits = 0;
    for (const auto& m : measures) {
        if (m.region != w.regime) {
            throw InvalidParameter("measure regime " + std::string(phase::to_string(m.region)) +
                                   " does not match window regime " + std::string(phase::to_string(w.regime)));
        }
        if (m.t != t) throw InvalidParameter("measures must share the same time");
        if (A > m.A) throw InvalidParameter("cutoff A exceeds the stored measure cutoff");
        hits += window_accepts(m, w, A) ? 1 : 0;
    }
    Fraction f;
    f.n = measures.size();
    f.value = static_cast<double>(hits) / static_cast<double>(f.n);
    f.stderr_ = std::sqrt(f.value * (1.0 - f.value) / static_cast<double>(f.n));
    return f;
}

// ---- gaps and decorations -------------------------------------------------

inline std::vector<double> gap_process(const std::vector<double>& positions) {
    if (positions.empty()) throw InvalidParameter("gap process of an empty measure");
    std::vector<double> g = positions;
    std::sort(g.begin(), g.end(), std::greater<>());
    const double top = g.front();
    for (double& x : g) x -= top;
    return g;
}

inline std::vector<double> gap_process(const CenteredPointMeasure& m) {
    std::vector<double> xs;
    xs.reserve(m.size());
    for (const auto& p : m.points) xs.push_back(p.x);
    return gap_process(xs);
}

class TruncatedLibrary : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Gap vectors of standard BBM at t_dec, kept only when M_{t_dec} >= rho t_dec.
struct DecorationLibrary {
    double rho = kSqrt2;
    double t_dec = 12.0;
    double depth = 4.0;  // gaps stored down to -depth
    std::uint64_t seed = 0;
    std::uint64_t attempts = 0;
    std::vector<std::vector<double>> gaps;

    std::size_t size() const { return gaps.size(); }
    bool empty() const { return gaps.empty(); }
    double acceptance_rate() const { return attempts ? static_cast<double>(gaps.size()) / attempts : 0.0; }
};

struct DecorationOptions {
    double rho = kSqrt2;
    double t_dec = 12.0;
    double depth = 4.0;
    double log_eps = -8.0;
    double internal_step = 0.5;
    std::size_t max_attempts = 200000;
    std::size_t batch = 256;
    unsigned workers = 1;
};

/// Rejection sampler. Particles that cannot reach rho t_dec - depth (first
/// moment below e^{log_eps}) are pruned, which only affects gaps deeper
/// than `depth`.
inline DecorationLibrary build_decoration_library(std::size_t n, std::uint64_t seed, const DecorationOptions& opt = {}) {
    if (n == 0) throw InvalidParameter("decoration library size must be positive");
    if (!(opt.t_dec > 0.0) || !(opt.depth > 0.0)) throw InvalidParameter("t_dec and depth must be positive");
    const ModelParams m = ModelParams::standard();
    const double level = opt.rho * opt.t_dec;
    engine::SimConfig cfg;
    cfg.horizon = opt.t_dec;
    cfg.internal_step = opt.internal_step;
    cfg.barrier = engine::FirstMomentBarrier{level - opt.depth, opt.log_eps};
    cfg.seed = seed;
    const auto schedule = engine::Simulator::make_schedule(m, cfg);

    DecorationLibrary lib{opt.rho, opt.t_dec, opt.depth, seed, 0, {}};
    std::uint64_t next = 0;
    while (lib.gaps.size() < n && next < opt.max_attempts) {
        const std::size_t count = std::min<std::size_t>(opt.batch, opt.max_attempts - next);
        const std::uint64_t base = next;
        auto rows = run_replicas(count, opt.workers, [&](std::size_t i) -> std::optional<std::vector<double>> {
            engine::SimConfig c = cfg;
            c.stream = base + i;
            const auto snap = engine::simulate_final(m, c, schedule);
            const double top = snap.max_position();
            if (!(top >= level)) return std::nullopt;
            std::vector<double> g;
            for (const auto& p : snap.particles()) {
                if (p.x - top >= -opt.depth) g.push_back(p.x - top);
            }
            std::sort(g.begin(), g.end(), std::greater<>());
            return g;
        });
        for (std::size_t i = 0; i < rows.size() && lib.gaps.size() < n; ++i) {
            ++lib.attempts;
            if (rows[i]) lib.gaps.push_back(std::move(*rows[i]));
        }
        next += count;
    }
    if (lib.gaps.size() < n) {
        throw TruncatedLibrary("decoration library: " + std::to_string(lib.gaps.size()) + " of " + std::to_string(n) +
                               " accepted after " + std::to_string(next) + " attempts");
    }
    return lib;
}

// ---- decorated Poisson point process -------------------------------------

struct DPPPIntensity {
    double c = 1.0;
    double theta_exp = kSqrt2;
    double mass = 1.0;

    void validate() const {
        if (!(c > 0.0) || !(theta_exp > 0.0) || !(mass > 0.0) || !std::isfinite(c * mass)) {
            throw InvalidParameter("DPPP intensity needs c > 0, theta > 0, mass > 0");
        }
    }
    /// Expected number of atoms above L.
    double mass_above(double L) const { return c * mass * std::exp(-theta_exp * L); }
};

struct DPPPSample {
    std::vector<double> atoms;  // decorated points, descending
    std::vector<double> heads;  // Poisson atoms before decoration, descending
    double intensity_scale = 0.0;
    double floor = 0.0;
    std::size_t library_size = 0;

    double max() const { return atoms.empty() ? -std::numeric_limits<double>::infinity() : atoms.front(); }
};

inline DPPPSample sample_dppp(const DPPPIntensity& in, const DecorationLibrary& lib, RandomStream& rng,
                              double floor = -10.0) {
    in.validate();
    if (lib.empty()) throw InvalidParameter("empty decoration library");
    DPPPSample s;
    s.intensity_scale = in.mass;
    s.floor = floor;
    s.library_size = lib.size();
    const auto k = rng.poisson(in.mass_above(floor));
    s.heads.reserve(k);
    for (std::uint64_t i = 0; i < k; ++i) s.heads.push_back(floor + rng.exponential(in.theta_exp));
    std::sort(s.heads.begin(), s.heads.end(), std::greater<>());
    for (double h : s.heads) {
        const auto& d = lib.gaps[static_cast<std::size_t>(rng.uniform() * static_cast<double>(lib.size()))];
        for (double g : d) {
            if (h + g < floor) break;
            s.atoms.push_back(h + g);
        }
    }
    std::sort(s.atoms.begin(), s.atoms.end(), std::greater<>());
    return s;
}

/// Max of the DPPP alone; decorations have top gap 0 so only the heads matter.
inline double sample_dppp_max(const DPPPIntensity& in, RandomStream& rng) {
    in.validate();
    return (std::log(in.c * in.mass) - std::log(rng.exponential(1.0))) / in.theta_exp;
}

// ---- Laplace functionals --------------------------------------------------

/// Member of the test class: zero below `support_inf`, constant above
/// `plateau_from`.
struct TestFunction {
    std::function<double(double)> phi;
    double support_inf = 0.0;
    double plateau_from = 0.0;

    static TestFunction zero() { return {[](double) { return 0.0; }, 0.0, 0.0}; }

    static TestFunction indicator_above(double a, double c = 1.0) {
        return {[a, c](double x) { return x >= a ? c : 0.0; }, a, a};
    }

    /// Linear ramp from 0 at a to c at b.
    static TestFunction ramp(double a, double b, double c = 1.0) {
        if (!(b > a)) throw InvalidParameter("ramp needs b > a");
        return {[a, b, c](double x) { return x <= a ? 0.0 : x >= b ? c : c * (x - a) / (b - a); }, a, b};
    }
};

inline double laplace_functional(const std::vector<double>& points, double cutoff, const TestFunction& f) {
    if (!f.phi) throw InvalidParameter("test function is empty");
    if (f.support_inf < cutoff) {
        throw DomainError("cutoff " + std::to_string(cutoff) + " above inf supp(phi) = " +
                          std::to_string(f.support_inf));
    }
    double acc = 0.0;
    for (double x : points) {
        if (x < f.support_inf) continue;
        acc += f.phi(x);
    }
    return std::exp(-acc);
}

inline double laplace_functional(const CenteredPointMeasure& m, const TestFunction& f) {
    std::vector<double> xs;
    xs.reserve(m.size());
    for (const auto& p : m.points) xs.push_back(p.x);
    return laplace_functional(xs, -m.A, f);
}

inline double laplace_functional(const DPPPSample& s, const TestFunction& f) {
    return laplace_functional(s.atoms, s.floor, f);
}

}  // namespace bbm2::extremal
