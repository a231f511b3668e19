#pragma once

#include "ebsim/rng.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ebsim::stats {

double mean(std::span<const double> xs);
// Unbiased sample variance (n-1 denominator); 0 for n < 2.
double sample_variance(std::span<const double> xs);
double stderr_of_mean(std::span<const double> xs);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

// Ordinary least squares y ~ intercept + slope * x. Requires >= 2 distinct x.
LineFit ols_line(std::span<const double> x, std::span<const double> y);

struct QuadFit {
    double c2 = 0.0;  // quadratic coefficient
    double c1 = 0.0;
    double c0 = 0.0;
    double c2_se = 0.0;  // standard error of c2 from the fit residuals
    int points = 0;
};

// Least-squares fit y ~ c2 x^2 + c1 x + c0 (x centered internally for
// conditioning). Requires >= 4 points and >= 3 distinct x values.
QuadFit quadratic_fit(std::span<const double> x, std::span<const double> y);

struct BootInterval {
    double estimate = 0.0;
    double se = 0.0;
    double lo = 0.0;  // percentile bootstrap bounds at the requested level
    double hi = 0.0;
};

// Moving-block bootstrap CI for the mean of a (possibly autocorrelated)
// series. conf is the two-sided confidence level, e.g. 0.99.
BootInterval block_bootstrap_mean(std::span<const double> xs, int n_boot, RngStream& rng,
                                  double conf = 0.99);

// Residual moving-block bootstrap CI for the OLS slope of y vs x.
BootInterval block_bootstrap_slope(std::span<const double> x, std::span<const double> y,
                                   int n_boot, RngStream& rng, double conf = 0.99);

// q in [0, 1]; nearest-rank quantile of an unsorted copy of xs.
double quantile(std::span<const double> xs, double q);

} // namespace ebsim::stats
