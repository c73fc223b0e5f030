#pragma once

// Event-driven simulator of the two-type reducible BBM.
//
// Between checkpoints every particle carries exponential clocks (type 1:
// rate beta split + rate alpha type-2 birth; type 2: rate 1 split) and moves
// by exact Gaussian increments between its events. Clocks are memoryless, so
// each particle is re-armed at every checkpoint; pruning only happens there.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bbm2/params.hpp"
#include "bbm2/rng.hpp"

namespace bbm2::engine {

enum class ParticleType : std::uint8_t { Type1 = 1, Type2 = 2 };

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Particle {
    std::uint64_t id = 0;
    ParticleType type = ParticleType::Type1;
    double x = 0.0;
    double birth = 0.0;
    double t_u = kNaN;      // type 2: birth time of the oldest type-2 ancestor
    double x_at_tu = kNaN;  // type 2: position at t_u
    double min_slack = std::numeric_limits<double>::infinity();  // min of (c s - X(s)) on recorded lineage points
    std::uint64_t root2 = 0;  // type 2: id of the type-2 particle born from type 1 that started this line

    bool is_type1() const { return type == ParticleType::Type1; }
    bool is_type2() const { return type == ParticleType::Type2; }
};

/// Kill particles with x < slope * s - offset at checkpoints.
struct LinearBarrier {
    double slope = kSqrt2;
    double offset = 8.0;
};

/// Horizon-aware barrier: kill a particle at (s, x) when the many-to-one
/// expected number of its descendants at the horizon lying above `level` is
/// below exp(log_eps).
struct FirstMomentBarrier {
    double level = 0.0;
    double log_eps = -8.0;
};

using Barrier = std::variant<std::monostate, LinearBarrier, FirstMomentBarrier>;

struct SimConfig {
    double horizon = 1.0;
    std::vector<double> checkpoint_times;  // emitted snapshots; horizon is always emitted
    double internal_step = 0.0;            // > 0 adds non-emitted pruning/recording stops on this grid
    Barrier barrier{};
    std::size_t max_particles = 10'000'000;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;  // replica index inside the master seed
    bool record_paths = false;
    double slack_slope = kSqrt2;
    bool record_genealogy = false;
    std::function<void(const Particle&, double)> on_prune;  // called with each removed particle and the stop time

    void validate() const {
        if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidParameter("horizon must be positive");
        if (max_particles < 1) throw InvalidParameter("max_particles must be >= 1");
        if (!std::is_sorted(checkpoint_times.begin(), checkpoint_times.end())) {
            throw InvalidParameter("checkpoint times must be sorted");
        }
        for (double c : checkpoint_times) {
            if (c < 0.0 || c > horizon) throw InvalidParameter("checkpoint time outside [0, horizon]");
        }
        if (internal_step < 0.0) throw InvalidParameter("internal_step must be >= 0");
        if (const auto* lb = std::get_if<LinearBarrier>(&barrier); lb && !(lb->offset >= 0.0)) {
            throw InvalidParameter("barrier offset must be >= 0");
        }
    }
};

class PopulationSnapshot {
public:
    PopulationSnapshot(double t, std::vector<Particle> particles, std::uint64_t pruned_mass, std::uint64_t seed,
                       std::uint64_t stream, ModelParams params, bool paths_recorded, double slack_slope)
        : t_(t),
          particles_(std::make_shared<const std::vector<Particle>>(std::move(particles))),
          pruned_mass_(pruned_mass),
          seed_(seed),
          stream_(stream),
          params_(params),
          paths_recorded_(paths_recorded),
          slack_slope_(slack_slope) {}

    double t() const { return t_; }
    const std::vector<Particle>& particles() const { return *particles_; }
    std::size_t size() const { return particles_->size(); }
    std::uint64_t pruned_mass() const { return pruned_mass_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    const ModelParams& params() const { return params_; }
    bool paths_recorded() const { return paths_recorded_; }
    double slack_slope() const { return slack_slope_; }

    std::size_t count(ParticleType type) const {
        return static_cast<std::size_t>(std::count_if(particles_->begin(), particles_->end(),
                                                      [type](const Particle& p) { return p.type == type; }));
    }

    /// Max position, -inf when empty.
    double max_position() const {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& p : *particles_) m = std::max(m, p.x);
        return m;
    }

    double max_position(ParticleType type) const {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& p : *particles_) {
            if (p.type == type) m = std::max(m, p.x);
        }
        return m;
    }

private:
    double t_;
    std::shared_ptr<const std::vector<Particle>> particles_;
    std::uint64_t pruned_mass_;
    std::uint64_t seed_;
    std::uint64_t stream_;
    ModelParams params_;
    bool paths_recorded_;
    double slack_slope_;
};

/// Population exceeded the configured cap; carries the snapshots completed so far.
class TruncationError : public std::runtime_error {
public:
    TruncationError(const std::string& what, std::vector<PopulationSnapshot> partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const std::vector<PopulationSnapshot>& partial() const { return partial_; }

private:
    std::vector<PopulationSnapshot> partial_;
};

struct GenealogyRecord {
    std::uint64_t id;
    std::uint64_t parent;  // 0 for the root
    ParticleType type;
    double birth;
    double t_u;
};

namespace detail {

inline double log_normal_sf(double z) {
    if (z < 25.0) return std::log(0.5 * std::erfc(z / kSqrt2));
    // Mills ratio expansion
    const double z2 = z * z;
    return -0.5 * z2 - std::log(z * std::sqrt(2.0 * kPi)) + std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

inline double log_add(double a, double b) {
    if (a == -INFINITY) return b;
    if (b == -INFINITY) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

}  // namespace detail

/// log E[#descendants at time `remaining` later lying >= gap above the particle].
/// `gap` = level - x. Many-to-one for both types.
inline double log_expected_descendants(const ModelParams& m, ParticleType type, double remaining, double gap) {
    if (remaining <= 0.0) return gap <= 0.0 ? 0.0 : -INFINITY;
    if (type == ParticleType::Type2) {
        return remaining + detail::log_normal_sf(gap / std::sqrt(remaining));
    }
    double acc = m.beta * remaining + detail::log_normal_sf(gap / (m.sigma() * std::sqrt(remaining)));
    if (m.alpha > 0.0) {
        // trapezoid in u = time spent as type 1 before the type-2 birth
        constexpr int kNodes = 96;
        const double h = remaining / kNodes;
        double integral = -INFINITY;
        for (int k = 0; k <= kNodes; ++k) {
            const double u = k * h;
            const double var = m.sigma2 * u + (remaining - u);
            const double w = (k == 0 || k == kNodes) ? 0.5 : 1.0;
            const double term = std::log(w * h) + m.beta * u + (remaining - u) +
                                detail::log_normal_sf(gap / std::sqrt(var));
            integral = detail::log_add(integral, term);
        }
        acc = detail::log_add(acc, std::log(m.alpha) + integral);
    }
    return acc;
}

/// Per-stop kill thresholds for both particle types.
class PruneSchedule {
public:
    PruneSchedule() = default;

    PruneSchedule(const ModelParams& m, const Barrier& barrier, double horizon, const std::vector<double>& stops)
        : stops_(stops), type1_(stops.size(), -INFINITY), type2_(stops.size(), -INFINITY) {
        if (const auto* lb = std::get_if<LinearBarrier>(&barrier)) {
            for (std::size_t i = 0; i < stops.size(); ++i) {
                type1_[i] = type2_[i] = lb->slope * stops[i] - lb->offset;
            }
        } else if (const auto* fm = std::get_if<FirstMomentBarrier>(&barrier)) {
            for (std::size_t i = 0; i < stops.size(); ++i) {
                const double rem = horizon - stops[i];
                type1_[i] = first_moment_threshold(m, ParticleType::Type1, rem, *fm);
                type2_[i] = first_moment_threshold(m, ParticleType::Type2, rem, *fm);
            }
        }
    }

    const std::vector<double>& stops() const { return stops_; }
    double threshold(ParticleType type, std::size_t stop) const {
        return type == ParticleType::Type1 ? type1_[stop] : type2_[stop];
    }

private:
    static double first_moment_threshold(const ModelParams& m, ParticleType type, double remaining,
                                         const FirstMomentBarrier& fm) {
        if (remaining <= 0.0) return fm.level;
        auto f = [&](double x) { return log_expected_descendants(m, type, remaining, fm.level - x) - fm.log_eps; };
        double hi = fm.level;
        double step = 1.0;
        double lo = hi - step;
        while (f(lo) >= 0.0) {
            step *= 2.0;
            lo = hi - step;
            if (step > 1e6) return -INFINITY;
        }
        for (int it = 0; it < 80 && hi - lo > 1e-9; ++it) {
            const double mid = 0.5 * (lo + hi);
            (f(mid) >= 0.0 ? hi : lo) = mid;
        }
        return hi;
    }

    std::vector<double> stops_;
    std::vector<double> type1_;
    std::vector<double> type2_;
};

/// Union of emitted checkpoints, the internal grid and the horizon.
inline std::vector<double> stop_times(const SimConfig& cfg) {
    std::vector<double> stops;
    for (double c : cfg.checkpoint_times) {
        if (c > 0.0) stops.push_back(c);
    }
    if (cfg.internal_step > 0.0) {
        const auto n = static_cast<std::size_t>(std::floor(cfg.horizon / cfg.internal_step + 1e-9));
        for (std::size_t k = 1; k <= n; ++k) stops.push_back(static_cast<double>(k) * cfg.internal_step);
    }
    stops.push_back(cfg.horizon);
    std::sort(stops.begin(), stops.end());
    std::vector<double> out;
    for (double s : stops) {
        if (s > cfg.horizon) continue;
        if (out.empty() || s - out.back() > 1e-12) out.push_back(s);
    }
    return out;
}

/// Runs one replica. Reusable PruneSchedule may be shared between replicas.
class Simulator {
public:
    Simulator(ModelParams params, SimConfig cfg, std::shared_ptr<const PruneSchedule> schedule = nullptr)
        : params_(params), cfg_(std::move(cfg)), rng_(cfg_.seed, cfg_.stream) {
        params_.validate();
        cfg_.validate();
        stops_ = stop_times(cfg_);
        if (schedule && schedule->stops() == stops_) {
            schedule_ = std::move(schedule);
        } else {
            schedule_ = std::make_shared<const PruneSchedule>(params_, cfg_.barrier, cfg_.horizon, stops_);
        }
    }

    static std::shared_ptr<const PruneSchedule> make_schedule(const ModelParams& p, const SimConfig& cfg) {
        return std::make_shared<const PruneSchedule>(p, cfg.barrier, cfg.horizon, stop_times(cfg));
    }

    /// Calls `observer(const PopulationSnapshot&)` at every emitted checkpoint.
    template <class Observer>
    void run(Observer&& observer) {
        std::vector<Particle> pop;
        Particle root;
        root.id = next_id_++;
        root.min_slack = cfg_.record_paths ? 0.0 : std::numeric_limits<double>::infinity();
        pop.push_back(root);
        if (cfg_.record_genealogy) genealogy_.push_back({root.id, 0, root.type, 0.0, kNaN});

        std::vector<PopulationSnapshot> emitted;  // kept only to report partial results on truncation
        auto emit = [&](double t) {
            PopulationSnapshot snap(t, pop, pruned_, cfg_.seed, cfg_.stream, params_, cfg_.record_paths,
                                    cfg_.slack_slope);
            observer(snap);
            emitted.push_back(std::move(snap));
        };
        if (!cfg_.checkpoint_times.empty() && cfg_.checkpoint_times.front() == 0.0) emit(0.0);

        double now = 0.0;
        std::vector<Particle> next;
        for (std::size_t k = 0; k < stops_.size(); ++k) {
            const double until = stops_[k];
            next.clear();
            work_.clear();
            for (const auto& p : pop) work_.push_back({p, now});
            if (!advance(until, next)) {
                throw TruncationError("population exceeded max_particles=" + std::to_string(cfg_.max_particles) +
                                          " before t=" + std::to_string(until),
                                      std::move(emitted));
            }
            prune(next, k);
            pop.swap(next);
            now = until;
            if (is_emitted(until)) emit(until);
        }
    }

    std::vector<PopulationSnapshot> run() {
        std::vector<PopulationSnapshot> out;
        run([&out](const PopulationSnapshot& s) { out.push_back(s); });
        return out;
    }

    const std::vector<GenealogyRecord>& genealogy() const { return genealogy_; }
    std::uint64_t pruned_mass() const { return pruned_; }

private:
    struct WorkItem {
        Particle p;
        double tau;
    };

    bool is_emitted(double t) const {
        if (std::abs(t - cfg_.horizon) < 1e-12) return true;
        return std::any_of(cfg_.checkpoint_times.begin(), cfg_.checkpoint_times.end(),
                           [t](double c) { return std::abs(c - t) < 1e-12; });
    }

    void record(Particle& p, double tau) const {
        if (cfg_.record_paths) p.min_slack = std::min(p.min_slack, cfg_.slack_slope * tau - p.x);
    }

    bool advance(double until, std::vector<Particle>& out) {
        const double rate1 = params_.beta + params_.alpha;
        const double split1 = params_.beta / rate1;
        const double sd1 = params_.sigma();
        while (!work_.empty()) {
            WorkItem item = work_.back();
            work_.pop_back();
            Particle& p = item.p;
            double tau = item.tau;
            for (;;) {
                const bool t1 = p.is_type1();
                const double e = rng_.exponential(t1 ? rate1 : 1.0);
                const double sd = t1 ? sd1 : 1.0;
                if (tau + e >= until) {
                    p.x += sd * std::sqrt(until - tau) * rng_.normal();
                    record(p, until);
                    out.push_back(p);
                    break;
                }
                tau += e;
                p.x += sd * std::sqrt(e) * rng_.normal();
                record(p, tau);

                Particle child = p;
                child.id = next_id_++;
                child.birth = tau;
                if (t1 && params_.alpha > 0.0 && rng_.uniform() >= split1) {
                    child.type = ParticleType::Type2;
                    child.t_u = tau;
                    child.x_at_tu = p.x;
                    child.root2 = child.id;
                }
                if (cfg_.record_genealogy) {
                    genealogy_.push_back({child.id, p.id, child.type, tau, child.t_u});
                }
                work_.push_back({child, tau});
                if (out.size() + work_.size() + 1 > cfg_.max_particles) return false;
            }
        }
        return true;
    }

    void prune(std::vector<Particle>& pop, std::size_t stop) {
        if (std::holds_alternative<std::monostate>(cfg_.barrier)) return;
        const double th1 = schedule_->threshold(ParticleType::Type1, stop);
        const double th2 = schedule_->threshold(ParticleType::Type2, stop);
        const auto before = pop.size();
        if (cfg_.on_prune) {
            const double s = schedule_->stops()[stop];
            for (const auto& p : pop) {
                if (p.x < (p.is_type1() ? th1 : th2)) cfg_.on_prune(p, s);
            }
        }
        std::erase_if(pop, [&](const Particle& p) { return p.x < (p.is_type1() ? th1 : th2); });
        pruned_ += before - pop.size();
    }

    ModelParams params_;
    SimConfig cfg_;
    RandomStream rng_;
    std::vector<double> stops_;
    std::shared_ptr<const PruneSchedule> schedule_;
    std::vector<WorkItem> work_;
    std::vector<GenealogyRecord> genealogy_;
    std::uint64_t next_id_ = 1;
    std::uint64_t pruned_ = 0;
};

inline std::vector<PopulationSnapshot> simulate(const ModelParams& params, const SimConfig& cfg) {
    Simulator sim(params, cfg);
    return sim.run();
}

/// Final snapshot only.
inline PopulationSnapshot simulate_final(const ModelParams& params, const SimConfig& cfg,
                                         std::shared_ptr<const PruneSchedule> schedule = nullptr) {
    Simulator sim(params, cfg, std::move(schedule));
    std::optional<PopulationSnapshot> last;
    sim.run([&](const PopulationSnapshot& s) {
        if (std::abs(s.t() - cfg.horizon) < 1e-12) last = s;
    });
    return *last;
}

}  // namespace bbm2::engine
