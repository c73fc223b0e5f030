#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bbm2/quadrature.hpp"
#include "bbm2/rng.hpp"
#include "bbm2/stats.hpp"

using namespace bbm2;
using Catch::Approx;

TEST_CASE("Philox4x32-10 known-answer vectors") {
    auto out = Philox4x32::apply({0, 0, 0, 0}, {0, 0});
    CHECK(out[0] == 0x6627e8d5u);
    CHECK(out[1] == 0xe169c58du);
    CHECK(out[2] == 0xbc57ac4cu);
    CHECK(out[3] == 0x9b00dbd8u);
    out = Philox4x32::apply({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    CHECK(out[0] == 0x408f276du);
    CHECK(out[1] == 0x41c83b0eu);
    CHECK(out[2] == 0xa20bc7c6u);
    CHECK(out[3] == 0x6d5451fdu);
    out = Philox4x32::apply({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    CHECK(out[0] == 0xd16cfe09u);
    CHECK(out[1] == 0x94fdccebu);
    CHECK(out[2] == 0x5001e420u);
    CHECK(out[3] == 0x24126ea1u);
}

TEST_CASE("streams are reproducible and distinct") {
    RandomStream a(42, 3), b(42, 3), c(42, 4), d(43, 3);
    for (int i = 0; i < 100; ++i) {
        const auto x = a();
        CHECK(x == b());
        CHECK(x != c());
        CHECK(x != d());
    }
}

TEST_CASE("variate moments") {
    RandomStream r(1, 0);
    const int n = 200000;
    double su = 0, se = 0, sn = 0, sn2 = 0, sp = 0;
    for (int i = 0; i < n; ++i) {
        su += r.uniform();
        se += r.exponential(2.0);
        const double z = r.normal();
        sn += z;
        sn2 += z * z;
        sp += static_cast<double>(r.poisson(45.0));
    }
    CHECK(su / n == Approx(0.5).margin(0.005));
    CHECK(se / n == Approx(0.5).margin(0.005));
    CHECK(sn / n == Approx(0.0).margin(0.01));
    CHECK(sn2 / n == Approx(1.0).margin(0.01));
    CHECK(sp / n == Approx(45.0).margin(0.1));
}

TEST_CASE("quadrature") {
    CHECK(quad::integrate([](double x) { return x * x; }, 0, 3) == Approx(9.0).margin(1e-10));
    CHECK(quad::integrate([](double x) { return x < 1 ? 0.0 : 1.0; }, 0, 3, 1e-10, {1.0}) == Approx(2.0).margin(1e-12));
    CHECK(quad::integrate_to_infinity([](double x) { return std::exp(-x); }, 0.0) == Approx(1.0).margin(1e-9));
}

TEST_CASE("stats helpers") {
    std::vector<double> xs{1, 2, 3, 4};
    const auto ms = stats::mean_se(xs);
    CHECK(ms.mean == 2.5);
    CHECK(ms.stderr_ == Approx(std::sqrt(5.0 / 3.0 / 4.0)));
    CHECK(stats::quantile(xs, 0.5) == 2.5);
    CHECK(stats::median({3, 1, 2}) == 2.0);
    CHECK(stats::correlation(xs, std::vector<double>{2, 4, 6, 8}) == Approx(1.0));
    CHECK(stats::ks_two_sample({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(stats::ks_two_sample({1, 2}, {3, 4}) == 1.0);
    CHECK(stats::ks_one_sample({0.5}, [](double x) { return x; }) == Approx(0.5));
    CHECK(stats::normal_cdf(0) == 0.5);
    CHECK(stats::z_score(1, 0, 1, 0) == 0.0);
}
