#include "ebsim/errors.hpp"
#include "ebsim/rng.hpp"
#include "ebsim/stats.hpp"

#include "doctest.h"

#include <cmath>
#include <vector>

namespace stats = ebsim::stats;

TEST_CASE("mean, variance and standard error on a hand-checked series") {
    const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
    CHECK(stats::mean(xs) == doctest::Approx(2.5));
    CHECK(stats::sample_variance(xs) == doctest::Approx(5.0 / 3.0));
    CHECK(stats::stderr_of_mean(xs) == doctest::Approx(std::sqrt(5.0 / 12.0)));
    CHECK_THROWS_AS((void)stats::mean(std::vector<double>{}), ebsim::param_error);
}

TEST_CASE("ols recovers an exact line") {
    std::vector<double> x;
    std::vector<double> y;
    for (int i = 0; i < 25; ++i) {
        x.push_back(10.0 + i);
        y.push_back(3.0 * (10.0 + i) - 2.0);
    }
    const stats::LineFit f = stats::ols_line(x, y);
    CHECK(f.slope == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(-2.0).epsilon(1e-10));
    CHECK_THROWS_AS((void)stats::ols_line(std::vector<double>{1.0, 1.0},
                                          std::vector<double>{0.0, 1.0}),
                    ebsim::param_error);
}

TEST_CASE("quadratic fit recovers exact coefficients with a near-zero error bar") {
    std::vector<double> x;
    std::vector<double> y;
    for (int i = 0; i < 30; ++i) {
        const double xi = 100.0 + 0.5 * i;  // offset support exercises centering
        x.push_back(xi);
        y.push_back(2.0 * xi * xi - xi + 0.5);
    }
    const stats::QuadFit q = stats::quadratic_fit(x, y);
    CHECK(q.c2 == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(q.c1 == doctest::Approx(-1.0).epsilon(1e-7));
    CHECK(q.c0 == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(q.c2_se < 1e-8);
    CHECK(q.points == 30);
    CHECK_THROWS_AS((void)stats::quadratic_fit(std::vector<double>{0, 1, 2},
                                               std::vector<double>{0, 1, 4}),
                    ebsim::param_error);
}

TEST_CASE("quadratic fit error bar is calibrated against known noise") {
    // y = x^2 + noise(sd = 1): the closed-form variance of the quadratic
    // coefficient should match the reported one on average.
    ebsim::RngStream rng(77, 0);
    std::vector<double> x;
    for (int i = 0; i < 200; ++i) x.push_back(static_cast<double>(i) / 10.0);
    std::vector<double> y(x.size());
    std::vector<double> pulls;
    for (int rep = 0; rep < 200; ++rep) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            // sum of 12 uniforms - 6: mean 0, variance 1
            double g = -6.0;
            for (int k = 0; k < 12; ++k) g += rng.uniform01();
            y[i] = x[i] * x[i] + g;
        }
        const stats::QuadFit q = stats::quadratic_fit(x, y);
        REQUIRE(q.c2_se > 0.0);
        pulls.push_back((q.c2 - 1.0) / q.c2_se);
    }
    // Standardized pulls should be ~N(0,1): mean near 0, sd near 1.
    CHECK(std::fabs(stats::mean(pulls)) < 0.3);
    const double sd = std::sqrt(stats::sample_variance(pulls));
    CHECK(sd > 0.7);
    CHECK(sd < 1.4);
}

TEST_CASE("block bootstrap mean covers a known iid mean") {
    ebsim::RngStream data_rng(123, 0);
    std::vector<double> xs;
    for (int i = 0; i < 500; ++i) xs.push_back(data_rng.uniform01());
    ebsim::RngStream boot_rng(123, 1);
    const stats::BootInterval ci = stats::block_bootstrap_mean(xs, 400, boot_rng, 0.99);
    CHECK(ci.estimate == doctest::Approx(stats::mean(xs)));
    CHECK(ci.lo < ci.estimate);
    CHECK(ci.hi > ci.estimate);
    CHECK(ci.lo <= 0.5);
    CHECK(ci.hi >= 0.5);
    CHECK(ci.se > 0.0);
    CHECK(ci.se < 0.05);
}

TEST_CASE("block bootstrap slope brackets a noisy trend") {
    ebsim::RngStream data_rng(321, 0);
    std::vector<double> x;
    std::vector<double> y;
    for (int i = 0; i < 400; ++i) {
        x.push_back(static_cast<double>(i));
        y.push_back(0.25 * i + 3.0 * (data_rng.uniform01() - 0.5));
    }
    ebsim::RngStream boot_rng(321, 1);
    const stats::BootInterval ci = stats::block_bootstrap_slope(x, y, 400, boot_rng, 0.99);
    CHECK(ci.lo <= 0.25);
    CHECK(ci.hi >= 0.25);
    CHECK(ci.hi - ci.lo < 0.01);
}

TEST_CASE("quantile is the interpolated order statistic") {
    const std::vector<double> xs{5.0, 1.0, 3.0, 2.0, 4.0};
    CHECK(stats::quantile(xs, 0.0) == doctest::Approx(1.0));
    CHECK(stats::quantile(xs, 1.0) == doctest::Approx(5.0));
    CHECK(stats::quantile(xs, 0.5) == doctest::Approx(3.0));
    CHECK(stats::quantile(xs, 0.25) == doctest::Approx(2.0));
    CHECK_THROWS_AS((void)stats::quantile(xs, 1.5), ebsim::param_error);
}
