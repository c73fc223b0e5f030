#pragma once

// Experiment runner behind the bbm2lab CLI: config parsing, task dispatch and
// artifact/manifest writing. Every artifact is a pure function of the config.

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bbm2/correction.hpp"
#include "bbm2/engine.hpp"
#include "bbm2/extremal.hpp"
#include "bbm2/fkpp.hpp"
#include "bbm2/functionals.hpp"
#include "bbm2/gaussintest.hpp"
#include "bbm2/io.hpp"
#include "bbm2/phase.hpp"
#include "bbm2/replicas.hpp"

namespace bbm2::experiment {

using nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kVersion = "0.1.0";

inline const std::vector<std::string>& task_names() {
    static const std::vector<std::string> names{"phase-sweep",  "simulate",     "martingales",   "extremal",
                                                "localization", "gauss-checks", "fit-correction"};
    return names;
}

struct BarrierConfig {
    std::string kind = "linear";  // none | linear | first-moment
    std::optional<double> slope;  // linear; defaults to the region's leading coefficient
    double offset = 8.0;
    double below = 4.0;  // first-moment: level = m(horizon) - below
    double log_eps = -6.0;
};

struct ExperimentConfig {
    std::string task;
    ModelParams model{1.0, 1.0, 0.0};
    double horizon = 1.0;
    std::vector<double> checkpoints;
    double internal_step = 0.5;
    BarrierConfig barrier;
    std::size_t max_particles = 10'000'000;
    std::size_t replicas = 100;
    std::uint64_t seed = 0;
    std::string out = "out";
    unsigned workers = 1;
    bool strict = false;

    int grid = 50;
    std::vector<double> lambdas{0.5};
    double K = 5.0;
    double A = 2.0;
    std::vector<double> R{2.0, 4.0, 10.0};
    std::vector<double> t_grid{10.0, 15.0, 20.0, 25.0};
    std::size_t bootstrap = 1000;
    double w_time = 6.0;         // snapshot time of the W^(I)(sqrt2) mass
    double max_floor = -4.0;     // maxima below this are censored at it
    std::size_t dppp_draws = 10;  // DPPP maxima per replica
    std::string sampler = "conditional";  // maxima: conditional (exact run to s0 + F-KPP) or pruned
    double s0 = 5.0;

    /// Numeric content only; `out` and `workers` never change results.
    json to_json() const {
        json b{{"kind", barrier.kind}, {"offset", barrier.offset}, {"below", barrier.below},
               {"log_eps", barrier.log_eps}};
        b["slope"] = barrier.slope ? json(*barrier.slope) : json(nullptr);
        return json{{"task", task},
                    {"model", {{"beta", model.beta}, {"sigma2", model.sigma2}, {"alpha", model.alpha}}},
                    {"sim",
                     {{"horizon", horizon},
                      {"checkpoints", checkpoints},
                      {"internal_step", internal_step},
                      {"barrier", b},
                      {"max_particles", max_particles}}},
                    {"replicas", replicas},
                    {"seed", seed},
                    {"strict", strict},
                    {"grid", grid},
                    {"lambdas", lambdas},
                    {"K", K},
                    {"A", A},
                    {"R", R},
                    {"t_grid", t_grid},
                    {"bootstrap", bootstrap},
                    {"w_time", w_time},
                    {"max_floor", max_floor},
                    {"dppp_draws", dppp_draws},
                    {"sampler", sampler},
                    {"s0", s0}};
    }

    /// Reads the keys present in `j` over the current values.
    void merge(const json& j) {
        try {
            auto get = [&](const json& o, const char* key, auto& dst) {
                if (o.contains(key) && !o.at(key).is_null()) o.at(key).get_to(dst);
            };
            get(j, "task", task);
            if (j.contains("model")) {
                const auto& m = j.at("model");
                get(m, "beta", model.beta);
                get(m, "sigma2", model.sigma2);
                get(m, "alpha", model.alpha);
            }
            if (j.contains("sim")) {
                const auto& s = j.at("sim");
                get(s, "horizon", horizon);
                get(s, "checkpoints", checkpoints);
                get(s, "internal_step", internal_step);
                get(s, "max_particles", max_particles);
                if (s.contains("barrier")) {
                    const auto& b = s.at("barrier");
                    get(b, "kind", barrier.kind);
                    get(b, "offset", barrier.offset);
                    get(b, "below", barrier.below);
                    get(b, "log_eps", barrier.log_eps);
                    if (b.contains("slope") && !b.at("slope").is_null()) barrier.slope = b.at("slope").get<double>();
                }
            }
            get(j, "replicas", replicas);
            get(j, "seed", seed);
            get(j, "out", out);
            get(j, "workers", workers);
            get(j, "strict", strict);
            get(j, "grid", grid);
            get(j, "lambdas", lambdas);
            get(j, "K", K);
            get(j, "A", A);
            get(j, "R", R);
            get(j, "t_grid", t_grid);
            get(j, "bootstrap", bootstrap);
            get(j, "w_time", w_time);
            get(j, "max_floor", max_floor);
            get(j, "dppp_draws", dppp_draws);
            get(j, "sampler", sampler);
            get(j, "s0", s0);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad config value: ") + e.what());
        }
    }

    void validate() const {
        const auto& names = task_names();
        if (std::find(names.begin(), names.end(), task) == names.end()) {
            throw ConfigError("unknown task '" + task + "'");
        }
        try {
            model.validate();
        } catch (const InvalidParameter& e) {
            throw ConfigError(e.what());
        }
        if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
        if (replicas == 0) throw ConfigError("replicas must be positive");
        if (barrier.kind != "none" && barrier.kind != "linear" && barrier.kind != "first-moment") {
            throw ConfigError("barrier kind must be none, linear or first-moment");
        }
        if (barrier.offset < 0.0) throw ConfigError("barrier offset must be >= 0");
        if (task == "phase-sweep" && (grid < 1 || grid > 2000)) throw ConfigError("grid must lie in [1, 2000]");
        if (A < 0.0) throw ConfigError("A must be >= 0");
        for (double r : R) {
            if (!(r >= 1.0)) throw ConfigError("window parameters R must be >= 1");
        }
        for (double c : checkpoints) {
            if (c < 0.0 || c > horizon) throw ConfigError("checkpoint outside [0, horizon]");
        }
        if (sampler != "conditional" && sampler != "pruned") throw ConfigError("sampler must be conditional or pruned");
        if (!(s0 > 0.0)) throw ConfigError("s0 must be positive");
        if (task == "fit-correction" && sampler == "conditional") {
            for (double t : t_grid) {
                if (!(t >= s0)) throw ConfigError("every t in t_grid must be >= s0");
            }
        }
        if (task == "extremal" && !(w_time > 0.0 && w_time <= horizon)) {
            throw ConfigError("w_time must lie in (0, horizon]");
        }
    }

    static ExperimentConfig from_json(const json& j) {
        ExperimentConfig c;
        c.merge(j);
        return c;
    }
};

struct RunResult {
    int status = 0;  // 0 ok, 3 truncation under strict
    std::vector<std::string> artifacts;
    std::size_t truncated = 0;
    std::string message;
};

// ---- simulation helpers -----------------------------------------------------

inline engine::SimConfig sim_config(const ExperimentConfig& cfg, double horizon) {
    engine::SimConfig s;
    s.horizon = horizon;
    for (double c : cfg.checkpoints) {
        if (c <= horizon) s.checkpoint_times.push_back(c);
    }
    s.internal_step = cfg.internal_step;
    s.max_particles = cfg.max_particles;
    s.seed = cfg.seed;
    const auto spec = phase::centering_spec(cfg.model);
    if (cfg.barrier.kind == "linear") {
        s.barrier = engine::LinearBarrier{cfg.barrier.slope.value_or(spec.leading), cfg.barrier.offset};
    } else if (cfg.barrier.kind == "first-moment") {
        s.barrier = engine::FirstMomentBarrier{spec(horizon) - cfg.barrier.below, cfg.barrier.log_eps};
    }
    return s;
}

/// Snapshots of one replica, or nullopt when the population cap was hit.
using ReplicaRun = std::optional<std::vector<engine::PopulationSnapshot>>;

inline std::vector<ReplicaRun> run_population(const ExperimentConfig& cfg, const engine::SimConfig& base) {
    const auto schedule = engine::Simulator::make_schedule(cfg.model, base);
    return run_replicas(cfg.replicas, cfg.workers, [&](std::size_t r) -> ReplicaRun {
        engine::SimConfig c = base;
        c.stream = r;
        try {
            engine::Simulator sim(cfg.model, c, schedule);
            return sim.run();
        } catch (const engine::TruncationError&) {
            return std::nullopt;
        }
    });
}

inline std::size_t count_truncated(const std::vector<ReplicaRun>& runs) {
    return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const auto& r) { return !r; }));
}

// ---- tasks ------------------------------------------------------------------

using Artifacts = std::map<std::string, std::string>;

inline void task_phase(const ExperimentConfig& cfg, Artifacts& out, json&) {
    const auto axis = phase::uniform_axis(cfg.grid);
    io::Csv csv(phase::kSurfaceCsvHeader);
    for (const auto& row : phase::coefficient_surfaces(axis, axis)) {
        csv.row(row.params.beta, row.params.sigma2, phase::to_string(row.region), row.quantities.v,
                row.quantities.theta, row.optimum.v_star, row.optimum.p_star, row.optimum.a_star,
                row.optimum.b_star, row.centering.leading, row.centering.log_coeff);
    }
    out["phase_surfaces.csv"] = csv.str();
}

inline std::size_t task_simulate(const ExperimentConfig& cfg, Artifacts& out, json& summary) {
    const auto runs = run_population(cfg, sim_config(cfg, cfg.horizon));
    const auto spec = phase::centering_spec(cfg.model);
    io::Csv csv("replica,t,n_type1,n_type2,max_all,max_type1,max_type2,max_centered,pruned,truncated");
    for (std::size_t r = 0; r < runs.size(); ++r) {
        if (!runs[r]) {
            csv.row(r, cfg.horizon, 0, 0, NAN, NAN, NAN, NAN, 0, true);
            continue;
        }
        for (const auto& s : *runs[r]) {
            csv.row(r, s.t(), s.count(engine::ParticleType::Type1), s.count(engine::ParticleType::Type2),
                    s.max_position(), s.max_position(engine::ParticleType::Type1),
                    s.max_position(engine::ParticleType::Type2), s.max_position() - spec(s.t()), s.pruned_mass(),
                    false);
        }
    }
    out["simulate.csv"] = csv.str();
    summary["region"] = phase::to_string(spec.region);
    return count_truncated(runs);
}

inline std::size_t task_martingales(const ExperimentConfig& cfg, Artifacts& out, json&) {
    auto base = sim_config(cfg, cfg.horizon);
    base.record_paths = true;
    base.slack_slope = kSqrt2;
    const auto runs = run_population(cfg, base);
    io::Csv csv("replica,t,quantity,parameter,value");
    std::map<std::tuple<double, std::string, double>, std::vector<double>> pooled;
    auto emit = [&](std::size_t r, double t, const std::string& q, double p, double v) {
        csv.row(r, t, q, p, v);
        pooled[{t, q, p}].push_back(v);
    };
    for (std::size_t r = 0; r < runs.size(); ++r) {
        if (!runs[r]) continue;
        for (const auto& s : *runs[r]) {
            using functionals::TypeClass;
            for (double l : cfg.lambdas) {
                emit(r, s.t(), "W_type1", l, functionals::additive_W(s, l, TypeClass::Type1));
                emit(r, s.t(), "W_type2", l, functionals::additive_W(s, l, TypeClass::Type2));
            }
            emit(r, s.t(), "Z_type1", 0.0, functionals::derivative_Z(s, TypeClass::Type1));
            emit(r, s.t(), "Z_type2", 0.0, functionals::derivative_Z(s, TypeClass::Type2));
            emit(r, s.t(), "D", cfg.K, functionals::truncated_D(s, cfg.K));
        }
    }
    out["martingales.csv"] = csv.str();
    io::Csv sum("t,quantity,parameter,mean,stderr,n");
    for (const auto& [key, xs] : pooled) {
        const auto ms = stats::mean_se(xs);
        sum.row(std::get<0>(key), std::get<1>(key), std::get<2>(key), ms.mean, ms.stderr_, ms.n);
    }
    out["martingales_summary.csv"] = sum.str();
    return count_truncated(runs);
}

/// Centered maxima (all, type 2) and W^(I)(sqrt2) at w_time for each replica.
struct ExtremalRow {
    bool ok = false;
    double max_all = NAN;
    double max_type2 = NAN;
    double w = NAN;
    extremal::CenteredPointMeasure measure;
};

inline std::vector<ExtremalRow> extremal_rows(const ExperimentConfig& cfg, double A) {
    auto base = sim_config(cfg, cfg.horizon);
    base.checkpoint_times = {cfg.w_time};
    const auto spec = phase::centering_spec(cfg.model);
    const auto schedule = engine::Simulator::make_schedule(cfg.model, base);
    return run_replicas(cfg.replicas, cfg.workers, [&](std::size_t r) {
        engine::SimConfig c = base;
        c.stream = r;
        ExtremalRow row;
        try {
            engine::Simulator sim(cfg.model, c, schedule);
            const auto snaps = sim.run();
            const auto pair = extremal::centered_measures(snaps.back(), spec, A);
            row.ok = true;
            row.max_all = pair.all.max();
            row.max_type2 = pair.type2.max();
            row.w = functionals::additive_W(snaps.front(), kSqrt2, functionals::TypeClass::Type1);
            row.measure = pair.all;
        } catch (const engine::TruncationError&) {
        }
        return row;
    });
}

struct DpppComparison {
    functionals::LimitConstants fit;
    double ks = NAN;
    std::vector<double> sim;
    std::vector<double> dppp;
};

/// Fits C on censored maxima paired with W, then draws DPPP maxima with the
/// same masses and compares the two censored samples.
inline DpppComparison compare_with_dppp(const std::vector<double>& maxima, const std::vector<double>& w,
                                        double floor, std::size_t draws, std::uint64_t seed) {
    DpppComparison out;
    for (double m : maxima) out.sim.push_back(std::max(m, floor));
    out.fit = functionals::gumbel_mixture_fit(out.sim, w, kSqrt2);
    RandomStream rng(seed, 0xd999);
    for (std::size_t k = 0; k < draws; ++k) {
        for (double mass : w) {
            const double x = mass > 0.0 ? extremal::sample_dppp_max({out.fit.c_hat, kSqrt2, mass}, rng)
                                        : -std::numeric_limits<double>::infinity();
            out.dppp.push_back(std::max(x, floor));
        }
    }
    out.ks = stats::ks_two_sample(out.sim, out.dppp);
    return out;
}

/// Centered maxima at the horizon and W^(I)(sqrt2) at s0 = w_time from the
/// same exact run; the maximum is drawn from its law given the population at s0.
inline std::pair<std::vector<double>, std::vector<double>> conditional_maxima_with_w(const ExperimentConfig& cfg) {
    const auto spec = phase::centering_spec(cfg.model);
    const double s0 = cfg.w_time;
    const auto tail = fkpp::solve_max_tail(cfg.model, cfg.horizon - s0);
    engine::SimConfig base;
    base.horizon = s0;
    base.seed = cfg.seed;
    base.max_particles = cfg.max_particles;
    const auto rows = run_replicas(cfg.replicas, cfg.workers, [&](std::size_t r) {
        engine::SimConfig c = base;
        c.stream = r;
        const auto snap = engine::simulate_final(cfg.model, c);
        RandomStream rng(cfg.seed, (std::uint64_t{1} << 62) | r);
        const double m = fkpp::sample_conditional_max(snap.particles(), tail, rng) - spec(cfg.horizon);
        return std::pair{m, functionals::additive_W(snap, kSqrt2, functionals::TypeClass::Type1)};
    });
    std::vector<double> maxima, w;
    for (const auto& [m, x] : rows) {
        maxima.push_back(m);
        w.push_back(x);
    }
    return {maxima, w};
}

inline std::size_t task_extremal(const ExperimentConfig& cfg, Artifacts& out, json& summary) {
    if (cfg.sampler == "conditional") {
        const auto [maxima, w] = conditional_maxima_with_w(cfg);
        io::Csv csv("replica,max_all,w_type1_sqrt2");
        for (std::size_t r = 0; r < maxima.size(); ++r) csv.row(r, maxima[r], w[r]);
        out["maxima.csv"] = csv.str();
        summary["region"] = phase::to_string(phase::classify(cfg.model).tag);
        if (maxima.size() >= 2) {
            try {
                const auto cmp = compare_with_dppp(maxima, w, -INFINITY, cfg.dppp_draws, cfg.seed);
                summary["c_hat"] = cmp.fit.c_hat;
                summary["ks_fit"] = cmp.fit.ks;
                summary["ks_dppp"] = cmp.ks;
            } catch (const functionals::FitFailed& e) {
                summary["fit_error"] = e.what();
            }
        }
        return 0;
    }
    const double cut = std::max(cfg.A, -cfg.max_floor);
    const auto rows = extremal_rows(cfg, cut);
    io::Csv csv("replica,max_all,max_type2,w_type1_sqrt2,truncated");
    std::vector<extremal::CenteredPointMeasure> ms;
    std::vector<double> maxima, w;
    std::size_t eq = 0, ok = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        csv.row(r, rows[r].max_all, rows[r].max_type2, rows[r].w, !rows[r].ok);
        if (!rows[r].ok) continue;
        ++ok;
        eq += rows[r].max_all == rows[r].max_type2 ? 1 : 0;
        maxima.push_back(rows[r].max_all);
        w.push_back(rows[r].w);
        ms.push_back(rows[r].measure);
    }
    out["maxima.csv"] = csv.str();
    out["centered_measures.csv"] = io::measures_csv(ms);
    summary["max_equal_fraction"] = ok ? static_cast<double>(eq) / static_cast<double>(ok) : 0.0;
    summary["region"] = phase::to_string(phase::classify(cfg.model).tag);
    if (ok >= 2) {
        try {
            const auto cmp = compare_with_dppp(maxima, w, cfg.max_floor, cfg.dppp_draws, cfg.seed);
            summary["c_hat"] = cmp.fit.c_hat;
            summary["ks_fit"] = cmp.fit.ks;
            summary["ks_dppp"] = cmp.ks;
        } catch (const functionals::FitFailed& e) {
            summary["fit_error"] = e.what();
        }
    }
    return rows.size() - ok;
}

inline std::size_t task_localization(const ExperimentConfig& cfg, Artifacts& out, json& summary) {
    std::vector<extremal::LocalizationWindow> windows;
    try {
        for (double R : cfg.R) windows.push_back(extremal::LocalizationWindow::make(cfg.model, R));
    } catch (const InvalidParameter& e) {
        throw ConfigError(e.what());
    }
    auto c = cfg;
    c.w_time = std::min(cfg.w_time, cfg.horizon);
    const auto rows = extremal_rows(c, cfg.A);
    std::vector<extremal::CenteredPointMeasure> ms;
    std::size_t eq = 0;
    for (const auto& r : rows) {
        if (!r.ok) continue;
        ms.push_back(r.measure);
        eq += r.max_all == r.max_type2 ? 1 : 0;
    }
    io::Csv csv("regime,t,R,A,fraction,stderr,n");
    auto sorted = windows;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.R < b.R; });
    std::size_t nesting_violations = 0;
    if (!ms.empty()) {
        for (const auto& w : windows) {
            const auto f = extremal::localization_fraction(ms, w, cfg.A);
            csv.row(phase::to_string(w.regime), cfg.horizon, w.R, cfg.A, f.value, f.stderr_, f.n);
        }
        for (const auto& m : ms) {
            for (std::size_t i = 1; i < sorted.size(); ++i) {
                if (extremal::window_accepts(m, sorted[i - 1], cfg.A) && !extremal::window_accepts(m, sorted[i], cfg.A)) {
                    ++nesting_violations;
                }
            }
        }
    }
    out["localization.csv"] = csv.str();
    summary["nesting_violations"] = nesting_violations;
    summary["max_equal_fraction"] = ms.empty() ? 0.0 : static_cast<double>(eq) / static_cast<double>(ms.size());
    return rows.size() - ms.size();
}

inline void task_gauss(const ExperimentConfig& cfg, Artifacts& out, json&) {
    using namespace gauss;
    io::Csv csv(kCheckCsvHeader);
    const std::size_t n = cfg.replicas;
    {
        const BridgeSpec spec{1.0, 1.0, 2.0};
        const double exact = bridge_below_line_prob(spec);
        const auto mc = bridge_below_line_mc(spec, n, 200, cfg.seed);
        csv.row("bridge_below_line", "x1=1 x2=1 t=2", mc.mean, exact,
                std::abs(mc.mean - exact) <= 3 * mc.stderr_ + 0.01);
    }
    {
        const auto box = brownian_box_bound_check(1.0, 0.0, 16.0, n, cfg.seed + 1, 400);
        csv.row("brownian_box", "K=1 y=0 t=16", box.mc_prob, box.bound, box.pass);
    }
    {
        const double mass = bessel3_total_mass(1.0, 1.0);
        csv.row("bessel3_density_mass", "x=1 s=1", mass, 1.0, std::abs(mass - 1.0) <= 1e-6);
        const double hit = bessel3_hitting_mass(4.0, 1.0);
        csv.row("bessel3_hitting_mass", "u=4 level=1", hit, 0.25, std::abs(hit - 0.25) <= 1e-6);
        const auto mc = bessel3_interval_mc(1.0, 1.0, 0.9, 1.1, n, cfg.seed + 2);
        const double p = quad::integrate([](double z) { return bessel3_density(1, 1, z); }, 0.9, 1.1, 1e-12);
        csv.row("bessel3_interval", "x=1 s=1 [0.9,1.1]", mc.mean, p, std::abs(mc.mean - p) <= 3 * mc.stderr_ + 1e-3);
    }
    {
        const ModelParams b13{1.2, 6.0 / 7.0, 0.0};
        const auto l = lemma22_bridge_estimate_check(b13, 1.0, 0.0, 100.0, 100.0, std::min<std::size_t>(n, 2000),
                                                     cfg.seed + 3, NAN, 400);
        csv.row("conditioned_bridge", "B_I_III K=1 x=0 s=t=100", l.mc_prob, l.c_hat, std::isfinite(l.c_hat));
    }
    out["gauss_checks.csv"] = csv.str();
}

inline std::size_t task_fit_correction(const ExperimentConfig& cfg, Artifacts& out, json& summary) {
    const auto spec = phase::centering_spec(cfg.model);
    std::vector<correction::TimeSummary> data;
    std::size_t truncated = 0;
    io::Csv med("t,replicas,median,median_centered");
    std::vector<fkpp::MaxTail> tails;
    if (cfg.sampler == "conditional") {
        std::vector<double> ages;
        for (double t : cfg.t_grid) ages.push_back(t - cfg.s0);
        tails = fkpp::solve_max_tail(cfg.model, ages);
    }
    for (std::size_t i = 0; i < cfg.t_grid.size(); ++i) {
        const double t = cfg.t_grid[i];
        correction::TimeSummary s{t, {}};
        if (cfg.sampler == "conditional") {
            fkpp::ConditionalRun run;
            run.s0 = cfg.s0;
            run.seed = cfg.seed;
            run.stream_offset = i * cfg.replicas;
            run.workers = cfg.workers;
            run.max_particles = cfg.max_particles;
            s.maxima = fkpp::conditional_max_samples(cfg.model, t, cfg.replicas, tails[i], run);
        } else {
            auto c = cfg;
            c.checkpoints.clear();
            auto sc = sim_config(c, t);
            sc.seed = cfg.seed + i;
            const auto runs = run_population(c, sc);
            truncated += count_truncated(runs);
            for (const auto& r : runs) {
                if (r) s.maxima.push_back(r->back().max_position());
            }
        }
        const double m = s.maxima.empty() ? NAN : stats::median(s.maxima);
        med.row(t, s.maxima.size(), m, m - spec(t));
        data.push_back(std::move(s));
    }
    out["correction_medians.csv"] = med.str();
    correction::FitOptions opt;
    opt.bootstrap = cfg.bootstrap;
    opt.seed = cfg.seed;
    json fits;
    try {
        for (bool fixed : {true, false}) {
            opt.fixed_leading = fixed;
            const auto f = correction::fit_log_correction(data, spec, opt);
            fits[fixed ? "fixed_leading" : "free_leading"] = {{"leading_hat", f.leading_hat},
                                                              {"log_coeff_hat", f.log_coeff_hat},
                                                              {"intercept_hat", f.intercept_hat},
                                                              {"ci_log_coeff", {f.ci_lo, f.ci_hi}},
                                                              {"theory_log_coeff", f.theory_log_coeff},
                                                              {"t_grid", f.t_grid}};
        }
    } catch (const InvalidParameter& e) {
        throw ConfigError(e.what());
    }
    fits["region"] = phase::to_string(spec.region);
    out["correction_fit.json"] = fits.dump(2) + "\n";
    summary["region"] = phase::to_string(spec.region);
    return truncated;
}

/// Runs the task and writes artifacts plus manifest.json into cfg.out.
inline RunResult run(const ExperimentConfig& cfg) {
    cfg.validate();
    Artifacts art;
    json summary = json::object();
    std::size_t truncated = 0;
    if (cfg.task == "phase-sweep") task_phase(cfg, art, summary);
    else if (cfg.task == "simulate") truncated = task_simulate(cfg, art, summary);
    else if (cfg.task == "martingales") truncated = task_martingales(cfg, art, summary);
    else if (cfg.task == "extremal") truncated = task_extremal(cfg, art, summary);
    else if (cfg.task == "localization") truncated = task_localization(cfg, art, summary);
    else if (cfg.task == "gauss-checks") task_gauss(cfg, art, summary);
    else if (cfg.task == "fit-correction") truncated = task_fit_correction(cfg, art, summary);

    RunResult res;
    res.truncated = truncated;
    const std::filesystem::path dir(cfg.out);
    json manifest;
    const json conf = cfg.to_json();
    manifest["config"] = conf;
    manifest["config_hash"] = io::config_hash(conf);
    manifest["seed"] = cfg.seed;
    manifest["version"] = kVersion;
    manifest["summary"] = summary;
    manifest["truncated_replicas"] = truncated;
    json names = json::array();
    for (const auto& [name, body] : art) {
        io::write_file(dir / name, body);
        names.push_back(name);
        res.artifacts.push_back(name);
    }
    manifest["artifacts"] = names;
    io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    res.artifacts.push_back("manifest.json");
    if (truncated > 0) {
        res.message = std::to_string(truncated) + " replica(s) hit the population cap";
        if (cfg.strict) res.status = 3;
    }
    return res;
}

}  // namespace bbm2::experiment
