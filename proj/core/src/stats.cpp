#include "ebsim/stats.hpp"

#include "ebsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace ebsim::stats {

double mean(std::span<const double> xs) {
    if (xs.empty()) throw param_error("mean: empty series");
    long double acc = 0.0L;
    for (double v : xs) acc += v;
    return static_cast<double>(acc / static_cast<long double>(xs.size()));
}

double sample_variance(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n < 2) return 0.0;
    const long double m = mean(xs);
    long double acc = 0.0L;
    for (double v : xs) {
        const long double d = v - m;
        acc += d * d;
    }
    return static_cast<double>(acc / static_cast<long double>(n - 1));
}

double stderr_of_mean(std::span<const double> xs) {
    if (xs.empty()) throw param_error("stderr_of_mean: empty series");
    return std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
}

LineFit ols_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw param_error("ols_line: size mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw param_error("ols_line: need >= 2 points");
    const long double mx = mean(x);
    const long double my = mean(y);
    long double sxx = 0.0L, sxy = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        const long double dx = x[i] - mx;
        sxx += dx * dx;
        sxy += dx * (y[i] - my);
    }
    if (sxx == 0.0L) throw param_error("ols_line: degenerate x (all equal)");
    LineFit f;
    f.slope = static_cast<double>(sxy / sxx);
    f.intercept = static_cast<double>(my - (sxy / sxx) * mx);
    return f;
}

QuadFit quadratic_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw param_error("quadratic_fit: size mismatch");
    const std::size_t n = x.size();
    if (n < 4) throw param_error("quadratic_fit: need >= 4 points");

    const long double mx = mean(x);
    // Normal equations on u = x - mx for conditioning. c2 is invariant under
    // the shift; c1/c0 are recovered by expanding back.
    long double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    long double t0 = 0, t1 = 0, t2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const long double u = x[i] - mx;
        const long double u2 = u * u;
        s1 += u;
        s2 += u2;
        s3 += u2 * u;
        s4 += u2 * u2;
        t0 += y[i];
        t1 += u * y[i];
        t2 += u2 * y[i];
    }
    // Solve the symmetric 3x3 system
    //   [n  s1 s2][a0]   [t0]
    //   [s1 s2 s3][a1] = [t1]
    //   [s2 s3 s4][a2]   [t2]
    const long double nn = static_cast<long double>(n);
    long double m[3][4] = {
        {nn, s1, s2, t0},
        {s1, s2, s3, t1},
        {s2, s3, s4, t2},
    };
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::fabs(static_cast<double>(m[r][col])) > std::fabs(static_cast<double>(m[piv][col]))) piv = r;
        std::swap(m[piv], m[col]);
        if (m[col][col] == 0.0L) throw param_error("quadratic_fit: degenerate support");
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const long double f = m[r][col] / m[col][col];
            for (int c = col; c < 4; ++c) m[r][c] -= f * m[col][c];
        }
    }
    const long double a0 = m[0][3] / m[0][0];
    const long double a1 = m[1][3] / m[1][1];
    const long double a2 = m[2][3] / m[2][2];

    QuadFit q;
    q.points = static_cast<int>(n);
    q.c2 = static_cast<double>(a2);
    q.c1 = static_cast<double>(a1 - 2.0L * a2 * mx);
    q.c0 = static_cast<double>(a0 - a1 * mx + a2 * mx * mx);

    // Residual variance; var(a2) = sigma^2 * inv(X'X)[2][2] with the inverse
    // entry computed in closed form (3x3 symmetric).
    long double rss = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        const long double u = x[i] - mx;
        const long double fit = a0 + a1 * u + a2 * u * u;
        const long double e = y[i] - fit;
        rss += e * e;
    }
    if (n > 3) {
        const long double det = nn * (s2 * s4 - s3 * s3) - s1 * (s1 * s4 - s2 * s3) +
                                s2 * (s1 * s3 - s2 * s2);
        const long double inv22 = det > 0.0L ? (nn * s2 - s1 * s1) / det : 0.0L;
        const long double sigma2 = rss / static_cast<long double>(n - 3);
        const long double var2 = sigma2 * inv22;
        q.c2_se = var2 > 0.0L ? static_cast<double>(std::sqrt(static_cast<double>(var2))) : 0.0;
    }
    return q;
}

namespace {

double boot_quantile(std::vector<double>& v, double q) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

std::size_t block_length(std::size_t n) {
    // n^(1/3) rule of thumb, clamped to [1, n].
    const double b = std::cbrt(static_cast<double>(n));
    std::size_t len = static_cast<std::size_t>(b);
    if (len < 1) len = 1;
    if (len > n) len = n;
    return len;
}

} // namespace

BootInterval block_bootstrap_mean(std::span<const double> xs, int n_boot, RngStream& rng,
                                  double conf) {
    if (xs.empty()) throw param_error("block_bootstrap_mean: empty series");
    if (n_boot < 2) throw param_error("block_bootstrap_mean: n_boot must be >= 2");
    BootInterval out;
    out.estimate = mean(xs);
    const std::size_t n = xs.size();
    if (n == 1) {
        out.lo = out.hi = out.estimate;
        return out;
    }
    const std::size_t blen = block_length(n);
    const std::size_t nstarts = n - blen + 1;
    const std::size_t nblocks = (n + blen - 1) / blen;

    std::vector<double> boots;
    boots.reserve(static_cast<std::size_t>(n_boot));
    for (int b = 0; b < n_boot; ++b) {
        long double acc = 0.0L;
        std::size_t filled = 0;
        for (std::size_t k = 0; k < nblocks; ++k) {
            const std::size_t start = rng.uniform_below(nstarts);
            for (std::size_t j = 0; j < blen && filled < n; ++j, ++filled) acc += xs[start + j];
        }
        boots.push_back(static_cast<double>(acc / static_cast<long double>(n)));
    }
    out.se = std::sqrt(sample_variance(boots));
    std::vector<double> tmp = boots;
    const double alpha = (1.0 - conf) / 2.0;
    out.lo = boot_quantile(tmp, alpha);
    out.hi = boot_quantile(tmp, 1.0 - alpha);
    return out;
}

BootInterval block_bootstrap_slope(std::span<const double> x, std::span<const double> y,
                                   int n_boot, RngStream& rng, double conf) {
    if (x.size() != y.size()) throw param_error("block_bootstrap_slope: size mismatch");
    if (n_boot < 2) throw param_error("block_bootstrap_slope: n_boot must be >= 2");
    const std::size_t n = x.size();
    const LineFit fit = ols_line(x, y);

    BootInterval out;
    out.estimate = fit.slope;

    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - (fit.intercept + fit.slope * x[i]);

    const std::size_t blen = block_length(n);
    const std::size_t nstarts = n - blen + 1;
    const std::size_t nblocks = (n + blen - 1) / blen;

    std::vector<double> ystar(n);
    std::vector<double> boots;
    boots.reserve(static_cast<std::size_t>(n_boot));
    for (int b = 0; b < n_boot; ++b) {
        std::size_t filled = 0;
        for (std::size_t k = 0; k < nblocks; ++k) {
            const std::size_t start = rng.uniform_below(nstarts);
            for (std::size_t j = 0; j < blen && filled < n; ++j, ++filled)
                ystar[filled] = fit.intercept + fit.slope * x[filled] + resid[start + j];
        }
        boots.push_back(ols_line(x, ystar).slope);
    }
    out.se = std::sqrt(sample_variance(boots));
    std::vector<double> tmp = boots;
    const double alpha = (1.0 - conf) / 2.0;
    out.lo = boot_quantile(tmp, alpha);
    out.hi = boot_quantile(tmp, 1.0 - alpha);
    return out;
}

double quantile(std::span<const double> xs, double q) {
    if (xs.empty()) throw param_error("quantile: empty series");
    if (q < 0.0 || q > 1.0) throw param_error("quantile: q outside [0,1]");
    std::vector<double> v(xs.begin(), xs.end());
    return boot_quantile(v, q);
}

} // namespace ebsim::stats
