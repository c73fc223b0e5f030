#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bbm2/spine.hpp"

using namespace bbm2;
using namespace bbm2::spine;
using Catch::Approx;

TEST_CASE("spine starts at R = K and keeps the spine below sqrt2 s + K") {
    SpineConfig cfg;
    cfg.K = 3.0;
    cfg.horizon = 4.0;
    cfg.seed = 1;
    const auto s = spine_simulate(cfg);
    CHECK(s.R0 == 3.0);
    for (double r : s.R_at_fission) CHECK(r > 0.0);
    CHECK(s.R_final > 0.0);
    CHECK(s.spine_final == Approx(kSqrt2 * 4.0 + 3.0 - s.R_final));
    CHECK(s.weight == Approx(3.0 / s.D));
    CHECK(s.max_position >= s.spine_final);
    cfg.K = 0.0;
    CHECK_THROWS_AS(spine_simulate(cfg), InvalidParameter);
}

TEST_CASE("spine fission count has mean 2t and the sampler is deterministic") {
    const double t = 5.0;
    std::vector<double> counts;
    for (std::uint64_t r = 0; r < 1500; ++r) {
        SpineConfig cfg;
        cfg.horizon = t;
        cfg.seed = 9;
        cfg.replica = r;
        cfg.prune_depth = 6.0;
        counts.push_back(static_cast<double>(spine_simulate(cfg).fission_times.size()));
    }
    const auto ms = stats::mean_se(counts);
    CHECK(std::abs(ms.mean - 2 * t) <= 3 * ms.stderr_);
    SpineConfig cfg;
    cfg.horizon = 3.0;
    cfg.seed = 4;
    cfg.replica = 2;
    CHECK(spine_simulate(cfg).D == spine_simulate(cfg).D);
}

TEST_CASE("Bessel-3 spine: mean of R_t^2 is K^2 + 3t") {
    std::vector<double> r2;
    for (std::uint64_t r = 0; r < 2000; ++r) {
        SpineConfig cfg;
        cfg.K = 2.0;
        cfg.horizon = 3.0;
        cfg.seed = 10;
        cfg.replica = r;
        cfg.prune_depth = 4.0;
        const auto s = spine_simulate(cfg);
        r2.push_back(s.R_final * s.R_final);
    }
    const auto ms = stats::mean_se(r2);
    CHECK(std::abs(ms.mean - (4.0 + 9.0)) <= 3 * ms.stderr_);
}

TEST_CASE("reweighting recovers P-expectations") {
    // E_Q[(K/D) |N_t|] = E_P[|N_t| 1{D_t > 0}] ~ e^t, and E_Q[K/D] = P(D_t > 0) ~ 1
    const double t = 3.0;
    std::vector<double> wn, w;
    for (std::uint64_t r = 0; r < 4000; ++r) {
        SpineConfig cfg;
        cfg.horizon = t;
        cfg.seed = 21;
        cfg.replica = r;
        const auto s = spine_simulate(cfg);
        wn.push_back(s.weight * static_cast<double>(s.particles));
        w.push_back(s.weight);
    }
    const auto a = stats::mean_se(wn);
    const auto b = stats::mean_se(w);
    CHECK(std::abs(a.mean - std::exp(t)) <= 3 * a.stderr_ + 0.02 * std::exp(t));
    CHECK(std::abs(b.mean - 1.0) <= 3 * b.stderr_ + 0.02);
}

TEST_CASE("tail bound helper") {
    CHECK(tail_upper_bound(2.0, 20.0, 1.0) ==
          Approx(2.0 * std::exp(-2 * kSqrt2 - 0.1 + 3.0 / (2 * kSqrt2) * 2.0 * std::log(20.0) / 20.0)));
    CHECK(standard_centering(std::exp(1.0)) == Approx(kSqrt2 * std::exp(1.0) - 3.0 / (2 * kSqrt2)));
    CHECK_THROWS_AS(importance_tail_estimate(0.5, 10.0, 1, 1), InvalidParameter);
    CHECK_THROWS_AS(importance_tail_estimate(2.0, 31.0, 1, 1), InvalidParameter);
    CHECK_THROWS_AS(importance_tail_estimate(10.0, 10.0, 1, 1), InvalidParameter);
}

TEST_CASE("naive and spine tail estimates agree at t=10, x=1") {
    const auto spine = importance_tail_estimate(1.0, 10.0, 600, 1);
    const auto naive = naive_tail_estimate(1.0, 10.0, 3000, 2);
    CHECK(std::abs(stats::z_score(spine.prob, spine.stderr_, naive.prob, naive.stderr_)) <= 3.0);
    CHECK(spine.within_bound());
    CHECK(naive.within_bound());
}

TEST_CASE("centered median of M_10 lies in [-2, 2]") {
    engine::SimConfig cfg;
    cfg.horizon = 10.0;
    cfg.seed = 5;
    cfg.barrier = engine::LinearBarrier{kSqrt2, 8.0};
    cfg.internal_step = 0.5;
    std::vector<double> m;
    for (std::uint64_t r = 0; r < 400; ++r) {
        cfg.stream = r;
        m.push_back(engine::simulate_final(ModelParams::standard(), cfg).max_position() - standard_centering(10.0));
    }
    const double med = stats::median(m);
    CHECK(med >= -2.0);
    CHECK(med <= 2.0);
}

TEST_CASE("spine tail estimate stays below the tail bound at t=20, x=2") {
    const auto est = importance_tail_estimate(2.0, 20.0, 150, 3);
    CHECK(est.prob > 0.0);
    CHECK(est.within_bound());
}
