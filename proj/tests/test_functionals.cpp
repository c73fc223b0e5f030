#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bbm2/functionals.hpp"

using namespace bbm2;
using namespace bbm2::engine;
using namespace bbm2::functionals;
using Catch::Approx;

namespace {

PopulationSnapshot make_snapshot(double t, std::vector<double> xs, ModelParams m = ModelParams::standard(),
                                 bool paths = false) {
    std::vector<Particle> ps;
    std::uint64_t id = 1;
    for (double x : xs) {
        Particle p;
        p.id = id++;
        p.x = x;
        p.min_slack = paths ? kSqrt2 * t - x : INFINITY;
        ps.push_back(p);
    }
    return PopulationSnapshot(t, std::move(ps), 0, 0, 0, m, paths, kSqrt2);
}

std::vector<PopulationSnapshot> replicas_at(const ModelParams& m, double t, std::size_t n, std::uint64_t seed,
                                            bool paths = false) {
    SimConfig cfg;
    cfg.horizon = t;
    cfg.seed = seed;
    cfg.record_paths = paths;
    std::vector<PopulationSnapshot> out;
    for (std::size_t r = 0; r < n; ++r) {
        cfg.stream = r;
        out.push_back(simulate_final(m, cfg));
    }
    return out;
}

template <class F>
stats::MeanSE mean_over(const std::vector<PopulationSnapshot>& snaps, F f) {
    std::vector<double> v;
    for (const auto& s : snaps) v.push_back(f(s));
    return stats::mean_se(v);
}

}  // namespace

TEST_CASE("martingales at time zero") {
    SimConfig cfg;
    cfg.horizon = 1.0;
    cfg.checkpoint_times = {0.0};
    cfg.record_paths = true;
    const auto s0 = simulate(ModelParams::standard(), cfg).front();
    CHECK(additive_W(s0, 0.7) == 1.0);
    CHECK(additive_W(s0, 0.7, TypeClass::All) == 1.0);
    CHECK(derivative_Z(s0) == 0.0);
    CHECK(truncated_D(s0, 5.0) == 5.0);
    CHECK(additive_W(make_snapshot(3.0, {}), 1.0) == 0.0);
}

TEST_CASE("truncated_D preconditions") {
    const auto s = make_snapshot(1.0, {0.0});
    CHECK_THROWS_AS(truncated_D(s, 5.0), Unavailable);
    CHECK_THROWS_AS(truncated_D(make_snapshot(1.0, {0.0}, ModelParams::standard(), true), 0.0), InvalidParameter);
}

TEST_CASE("frozen particle at vt contributes nothing to Z") {
    const ModelParams m{1.5, 0.5, 0.0};
    const double t = 3.0;
    CHECK(derivative_Z(make_snapshot(t, {m.v() * t}, m)) == 0.0);
    CHECK(derivative_Z(make_snapshot(t, {kSqrt2 * t}), TypeClass::All) == 0.0);
}

TEST_CASE("lambda = 0 gives the normalized count") {
    const ModelParams m{1.3, 0.7, 0.0};
    const auto s = replicas_at(m, 2.0, 1, 3).front();
    CHECK(additive_W(s, 0.0) == Approx(static_cast<double>(s.size()) * std::exp(-1.3 * 2.0)).epsilon(1e-12));
}

TEST_CASE("D^(K) equals Z + K W(sqrt2) when no lineage crossed") {
    const auto snaps = replicas_at(ModelParams::standard(), 3.0, 50, 12, true);
    for (const auto& s : snaps) {
        const double K = 50.0;
        bool clean = true;
        for (const auto& p : s.particles()) clean = clean && p.min_slack >= -K;
        REQUIRE(clean);
        const double lhs = truncated_D(s, K);
        const double rhs = derivative_Z(s, TypeClass::All) + K * additive_W(s, kSqrt2, TypeClass::All);
        CHECK(lhs == Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("martingale means on standard BBM at t=4") {
    const auto snaps = replicas_at(ModelParams::standard(), 4.0, 3000, 2024, true);
    for (double lambda : {0.0, 0.5, 1.0}) {
        const auto w = mean_over(snaps, [&](const auto& s) { return additive_W(s, lambda, TypeClass::All); });
        CHECK(std::abs(w.mean - 1.0) <= 3.0 * w.stderr_);
    }
    const auto z = mean_over(snaps, [](const auto& s) { return derivative_Z(s, TypeClass::All); });
    CHECK(std::abs(z.mean) <= 3.0 * z.stderr_);
    const auto d = mean_over(snaps, [](const auto& s) { return truncated_D(s, 5.0); });
    CHECK(std::abs(d.mean - 5.0) <= 3.0 * d.stderr_);
    for (const auto& s : snaps) CHECK(truncated_D(s, 5.0) >= 0.0);
}

TEST_CASE("type-1 martingale means at (1.5, 0.5)") {
    const ModelParams m{1.5, 0.5, 0.0};
    const auto snaps = replicas_at(m, 3.0, 2000, 77);
    const auto w = mean_over(snaps, [](const auto& s) { return additive_W(s, 0.5); });
    CHECK(std::abs(w.mean - 1.0) <= 3.0 * w.stderr_);
    const auto z = mean_over(snaps, [](const auto& s) { return derivative_Z(s); });
    CHECK(std::abs(z.mean) <= 3.0 * z.stderr_);
}

TEST_CASE("Gibbs LLN") {
    const auto snaps = replicas_at(ModelParams::standard(), 3.0, 20, 5);
    for (const auto& s : snaps) {
        const auto g = gibbs_lln(s, [](double) { return 1.0; }, 0.5);
        CHECK(g.ratio == 1.0);
        CHECK(g.W_f == g.W);
    }
    CHECK_THROWS_AS(gibbs_lln(snaps[0], [](double x) { return x; }, 0.0), DomainError);
    CHECK_THROWS_AS(gibbs_lln(snaps[0], [](double x) { return x; }, kSqrt2), DomainError);
    // rescaled type-1 snapshot: a (beta, sigma2) BBM at time t is a standard BBM at beta t
    const ModelParams m{2.0, 0.5, 0.0};
    const auto s = make_snapshot(1.5, {1.0, -0.5}, m);
    const auto v = standard_view(s);
    CHECK(v.t == 3.0);
    CHECK(v.x[0] == Approx(std::sqrt(2.0) / std::sqrt(0.5)));
}

TEST_CASE("Rayleigh inner products") {
    CHECK(rayleigh_inner([](double) { return 1.0; }) == Approx(1.0).margin(1e-10));
    CHECK(rayleigh_inner([](double z) { return z; }) == Approx(std::sqrt(kPi / 2)).margin(1e-9));
    CHECK(rayleigh_inner([](double z) { return z >= 1 && z <= 2 ? 1.0 : 0.0; }, {1.0, 2.0}) ==
          Approx(std::exp(-0.5) - std::exp(-2.0)).margin(1e-10));
    CHECK(std::exp(-0.5) - std::exp(-2.0) == Approx(0.471195).margin(1e-6));
    // piecewise-constant windows against the antiderivative -e^{-z^2/2}
    const auto wf = WindowFunction({{-1, 0}, {-1, 2}, {0.5, 2}, {0.5, 0.5}, {2, 0.5}, {2, 0}}, 3.0, 1.2);
    auto mu = [](double a, double b) { return std::exp(-a * a / 2) - std::exp(-b * b / 2); };
    const double exact = 2 * mu(3 - 1.2, 3 + 0.6) + 0.5 * mu(3 + 0.6, 3 + 2.4);
    CHECK(rayleigh_inner(wf) == Approx(exact).margin(1e-9));
}

TEST_CASE("window function validation and evaluation") {
    CHECK_THROWS_AS(WindowFunction({{0, 1}}, 1, 1), InvalidParameter);
    CHECK_THROWS_AS(WindowFunction({{1, 1}, {0, 1}}, 1, 1), InvalidParameter);
    CHECK_THROWS_AS(WindowFunction({{0, -1}, {1, 1}}, 1, 1), InvalidParameter);
    CHECK_THROWS_AS(WindowFunction::indicator(-2, 2, 1, 1), InvalidParameter);  // r + y h <= 0
    CHECK_THROWS_AS(WindowFunction::indicator(0, 1, 1, 0), InvalidParameter);
    const auto wf = WindowFunction::indicator(0, 1, 1, 1);
    CHECK(wf.G(0.5) == 1.0);
    CHECK(wf.G(-0.5) == 0.0);
    CHECK(wf.G(1.5) == 0.0);
    const auto tab = WindowFunction::tabulate([](double y) { return 1 - y * y / 4; }, 2, 3, 1);
    CHECK(tab.G(0.0) == Approx(1.0).margin(1e-6));
    CHECK(tab.knots().size() == 2048);
}

TEST_CASE("critical window functional") {
    const auto snaps = replicas_at(ModelParams::standard(), 4.0, 10, 31);
    const auto wf = WindowFunction::indicator(-0.5, 0.5, 1.0, 1.0);
    for (const auto& s : snaps) {
        const double a = critical_window_functional(s, wf);
        CHECK(critical_window_functional(s, wf.scaled(4.0)) == a);
        CHECK(critical_window_functional(s, wf.scaled(3.7)) == Approx(a).epsilon(1e-13));
    }
    // wide indicator: F_t = 1 on (0, 41) so the statistic is sqrt(t) times the sum over particles below the line
    const auto wide = WindowFunction::indicator(-0.999, 40.0, 1.0, 1.0);
    for (const auto& s : snaps) {
        double ref = 0.0;
        for (const auto& p : s.particles()) {
            const double d = kSqrt2 * 4.0 - p.x;
            if (d / 2.0 > 0.001 && d / 2.0 < 41.0) ref += std::exp(-kSqrt2 * d);
        }
        const double norm = std::exp(-0.001 * 0.001 / 2);
        CHECK(critical_window_functional(s, wide) == Approx(2.0 * ref / norm).epsilon(1e-8));
    }
    const auto zero = WindowFunction({{0, 0}, {1, 0}}, 1, 1);
    CHECK_THROWS_AS(critical_window_functional(snaps[0], zero), DomainError);
}

TEST_CASE("bar Z on the B_I_II boundary") {
    BarZOptions opt;
    opt.subtree_horizon = 4.0;
    opt.barrier = LinearBarrier{kSqrt2, 6.0};
    CHECK_THROWS_AS(bar_Z_estimate({1.5, 0.5, 1.0}, {1.0}, 2, 1, opt), InvalidParameter);
    auto est = bar_Z_estimate({0.5, 2.0, 0.0}, {2.0, 4.0}, 20, 3, opt);
    for (const auto& e : est) CHECK(e.value == 0.0);
    est = bar_Z_estimate({0.5, 2.0, 1.0}, {0.0, 2.0, 4.0}, 40, 4, opt);
    REQUIRE(est.size() == 3);
    for (std::size_t r = 0; r < 40; ++r) {
        CHECK(est[0].samples[r] == 0.0);
        CHECK(est[2].samples[r] >= est[1].samples[r]);
    }
    CHECK(est[2].value > 0.0);
}

TEST_CASE("Gumbel mixture fit") {
    RandomStream rng(5, 0);
    std::vector<double> xs, zs;
    for (int i = 0; i < 10000; ++i) {
        xs.push_back(-std::log(-std::log(rng.uniform_open())) / kSqrt2);
        zs.push_back(1.0);
    }
    const auto fit = gumbel_mixture_fit(xs, zs);
    CHECK(fit.c_hat >= 0.8);
    CHECK(fit.c_hat <= 1.25);
    CHECK(fit.ks < 0.02);

    auto shifted = xs;
    for (auto& x : shifted) x += 0.7;
    const auto fit2 = gumbel_mixture_fit(shifted, zs);
    CHECK(fit2.c_hat == Approx(fit.c_hat * std::exp(kSqrt2 * 0.7)).epsilon(1e-6));

    // random mixture weights
    std::vector<double> xm, zm;
    for (int i = 0; i < 5000; ++i) {
        const double z = rng.exponential(1.0);
        const double c = 2.0;
        // P(M <= x) = exp(-c z e^{-sqrt2 x}) -> M = (log(c z) - log(-log U)) / sqrt2
        xm.push_back((std::log(c * z) - std::log(-std::log(rng.uniform_open()))) / kSqrt2);
        zm.push_back(z);
    }
    CHECK(gumbel_mixture_fit(xm, zm).c_hat == Approx(2.0).epsilon(0.15));

    CHECK_THROWS_AS(gumbel_mixture_fit({1.0}, {1.0}), FitFailed);
    CHECK_THROWS_AS(gumbel_mixture_fit({1.0, 2.0}, {0.0, -1.0}), FitFailed);
    CHECK_THROWS_AS(gumbel_mixture_fit({1.0, 1.0}, {1.0, 1.0}), FitFailed);
    const auto tiny = gumbel_mixture_fit({-30.0, -29.0, -28.5}, {1e-3, 2e-3, 1e-3});
    CHECK(std::isfinite(tiny.ks));
}
