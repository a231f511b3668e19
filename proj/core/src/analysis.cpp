#include "ebsim/analysis.hpp"

#include "ebsim/errors.hpp"
#include "ebsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace ebsim::analysis {

namespace {

void validate_law_params(double b, double i0, int n) {
    if (!std::isfinite(b) || b <= 1.0) throw param_error("analysis: base must exceed 1");
    if (!std::isfinite(i0) || i0 < 0.0) {
        throw param_error("analysis: offset must be finite and non-negative");
    }
    if (n < 2) throw param_error("analysis: need at least 2 users");
}

constexpr double kZ99 = 2.5758293035489004;  // two-sided 99% normal quantile

} // namespace

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::Ergodic: return "ergodic";
        case Regime::NullRecurrent: return "null_recurrent";
        case Regime::Transient: return "transient";
    }
    throw param_error("analysis: unknown regime");
}

RegimeReport classify_regime(double b, double i0, int n) {
    validate_law_params(b, i0, n);
    RegimeReport rep;
    rep.b = b;
    rep.i0 = i0;
    rep.n = n;
    rep.joint_regime = i0 > 1.0   ? Regime::Ergodic
                       : i0 > 0.0 ? Regime::NullRecurrent
                                  : Regime::Transient;
    int upto = 1;
    for (int r = 2; r <= n; ++r) {
        if (i0 > 1.0 / static_cast<double>(n - r + 1)) upto = r;
    }
    rep.marginal_positive_recurrent_upto = upto;
    rep.throughput_one = i0 <= 1.0 / static_cast<double>(n - 1);
    return rep;
}

double CollisionTrace::a0() const {
    return static_cast<double>(initial_cohort_sum) / static_cast<double>(n - 1);
}

CollisionTrace collision_trace(const sim::RawCohortTrace& raw) {
    if (raw.n < 2) throw param_error("analysis: need at least 2 users");
    if (raw.initial.size() != static_cast<std::size_t>(raw.n)) {
        throw param_error("analysis: trace initial state size mismatch");
    }
    CollisionTrace trace;
    trace.n = raw.n;
    trace.ended_by_cohort_success = raw.ended_by_cohort_success;
    for (std::size_t u = 1; u < raw.initial.size(); ++u) trace.initial_cohort_sum += raw.initial[u];
    trace.entries.reserve(raw.entries.size());

    std::int64_t cum = 0;
    std::uint64_t j = 0;
    for (const auto& e : raw.entries) {
        ++j;
        if (e.state_after.size() != static_cast<std::size_t>(raw.n)) {
            throw param_error("analysis: trace entry state size mismatch");
        }
        CollisionEntry out;
        out.slot = e.slot;
        out.x1_after = e.state_after[0];
        for (int u : e.transmitters) {
            if (u == 0) {
                out.u1_transmitted = true;
            } else {
                ++out.cohort_transmitters;
            }
        }
        if (out.cohort_transmitters < 1) {
            throw integrity_error("analysis: recorded slot without a cohort transmitter");
        }
        out.extra_collisions = out.cohort_transmitters - 1;
        cum += out.extra_collisions;
        out.cum_extra = cum;
        out.min_cohort = std::numeric_limits<std::uint32_t>::max();
        for (std::size_t u = 1; u < e.state_after.size(); ++u) {
            const std::uint32_t xi = e.state_after[u];
            out.min_cohort = std::min(out.min_cohort, xi);
            out.max_cohort = std::max(out.max_cohort, xi);
            out.cohort_sum += xi;
        }
        if (out.cohort_sum != trace.initial_cohort_sum + j + static_cast<std::uint64_t>(cum)) {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "analysis: counting identity broken at slot %llu (entry %llu)",
                          static_cast<unsigned long long>(e.slot),
                          static_cast<unsigned long long>(j));
            throw integrity_error(buf);
        }
        trace.entries.push_back(out);
    }
    return trace;
}

SandwichReport sandwich_check(const CollisionTrace& trace) {
    SandwichReport rep;
    rep.min_lower_slack = std::numeric_limits<std::int64_t>::max();
    rep.min_upper_slack = std::numeric_limits<std::int64_t>::max();
    const auto cohort = static_cast<std::int64_t>(trace.n - 1);
    const auto s0 = static_cast<std::int64_t>(trace.initial_cohort_sum);
    std::int64_t j = 0;
    for (const auto& e : trace.entries) {
        ++j;
        const std::int64_t centered = cohort * static_cast<std::int64_t>(e.min_cohort) - s0 - j;
        const std::int64_t spread = static_cast<std::int64_t>(e.max_cohort) -
                                    static_cast<std::int64_t>(e.min_cohort);
        const std::int64_t lower_slack = centered + cohort * spread;
        const std::int64_t upper_slack = e.cum_extra - centered;
        rep.min_lower_slack = std::min(rep.min_lower_slack, lower_slack);
        rep.min_upper_slack = std::min(rep.min_upper_slack, upper_slack);
        if (lower_slack < 0 || upper_slack < 0) ++rep.violations;
        ++rep.checked;
    }
    if (rep.checked == 0) {
        rep.min_lower_slack = 0;
        rep.min_upper_slack = 0;
    }
    return rep;
}

double x1_zero_at_collision_fraction(const CollisionTrace& trace) {
    if (trace.entries.empty()) return 0.0;
    std::uint64_t zero = 0;
    for (const auto& e : trace.entries) {
        const std::uint32_t pre = e.u1_transmitted ? e.x1_after - 1 : e.x1_after;
        if (pre == 0) ++zero;
    }
    return static_cast<double>(zero) / static_cast<double>(trace.entries.size());
}

std::vector<std::uint64_t> spread_histogram(const CollisionTrace& trace) {
    std::vector<std::uint64_t> counts;
    for (const auto& e : trace.entries) {
        const auto spread = static_cast<std::size_t>(e.max_cohort - e.min_cohort);
        if (counts.size() <= spread) counts.resize(spread + 1, 0);
        ++counts[spread];
    }
    return counts;
}

BirthDeathSpec BirthDeathSpec::make(double b, double i0, int n, std::uint32_t x2) {
    validate_law_params(b, i0, n);
    BirthDeathSpec spec;
    spec.b = b;
    spec.i0 = i0;
    spec.n = n;
    spec.x2 = x2;
    int ds = 0;
    while (static_cast<double>(n - 1) * std::pow(b, -ds) >= 0.5) {
        if (++ds > 100000) throw param_error("analysis: no valid floor for these parameters");
    }
    spec.delta_star = ds;
    return spec;
}

BirthDeathSpec BirthDeathSpec::with_delta_star(double b, double i0, int n, std::uint32_t x2,
                                               int delta_star) {
    validate_law_params(b, i0, n);
    if (delta_star < 0) throw param_error("analysis: floor must be non-negative");
    BirthDeathSpec spec = make(b, i0, n, x2);
    spec.delta_star = delta_star;
    return spec;
}

double BirthDeathSpec::alpha(int delta) const {
    return std::min(static_cast<double>(n - 1) * std::pow(b, -delta), 1.0);
}

double BirthDeathSpec::beta() const {
    const double miss = 1.0 - std::pow(b, -(static_cast<double>(x2) + i0));
    return std::pow(miss, n - 1) / static_cast<double>(n - 1);
}

bool BirthDeathSpec::simulable() const {
    return alpha(delta_star + 1) + beta() <= 1.0;
}

bool BirthDeathSpec::dominance_margin_ok() const {
    return alpha(delta_star + 1) <= 0.5;
}

double BdDistribution::at(int delta) const {
    const int k = delta - delta_star;
    if (k < 0 || static_cast<std::size_t>(k) >= pi.size()) return 0.0;
    return pi[static_cast<std::size_t>(k)];
}

BdDistribution bd_stationary(const BirthDeathSpec& spec, int delta_max) {
    if (delta_max < spec.delta_star) {
        throw param_error("analysis: truncation must not precede the floor");
    }
    const double down = spec.beta();
    if (!(down > 0.0)) {
        throw param_error("analysis: down rate is zero; the walk has no stationary law");
    }
    const auto k_max = static_cast<std::size_t>(delta_max - spec.delta_star);
    std::vector<double> logpi(k_max + 1);
    logpi[0] = 0.0;
    const double log_down = std::log(down);
    for (std::size_t k = 1; k <= k_max; ++k) {
        const double up = spec.alpha(spec.delta_star + static_cast<int>(k) - 1);
        logpi[k] = up > 0.0 ? logpi[k - 1] + std::log(up) - log_down
                            : -std::numeric_limits<double>::infinity();
    }
    const double top = *std::ranges::max_element(logpi);
    double z = 0.0;
    for (const double lp : logpi) z += std::exp(lp - top);
    const double log_z = top + std::log(z);

    BdDistribution out;
    out.delta_star = spec.delta_star;
    out.delta_max = delta_max;
    out.pi.resize(k_max + 1);
    for (std::size_t k = 0; k <= k_max; ++k) out.pi[k] = std::exp(logpi[k] - log_z);

    // Ratios beyond the cut shrink monotonically, so a geometric series in the
    // first discarded ratio bounds the lost mass.
    const double q = spec.alpha(delta_max) / down;
    out.truncation_tail_bound = q < 1.0 ? out.pi[k_max] * q / (1.0 - q)
                                        : std::numeric_limits<double>::infinity();
    return out;
}

stats::QuadFit tail_quadratic_fit(std::span<const double> pi) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t k = 0; k < pi.size(); ++k) {
        if (pi[k] > 0.0) {
            xs.push_back(static_cast<double>(k));
            ys.push_back(std::log(pi[k]));
        }
    }
    if (xs.size() < 4) throw param_error("analysis: too few positive points for a quadratic fit");
    return stats::quadratic_fit(xs, ys);
}

double AuxChainResult::n2_gt1_fraction() const {
    return steps == 0 ? 0.0 : static_cast<double>(n2_gt1_steps) / static_cast<double>(steps);
}

std::vector<double> AuxChainResult::occupancy() const {
    std::size_t len = 0;
    for (const auto& h : block_histograms) len = std::max(len, h.size());
    std::vector<double> occ(len, 0.0);
    for (const auto& h : block_histograms) {
        for (std::size_t k = 0; k < h.size(); ++k) occ[k] += static_cast<double>(h[k]);
    }
    for (double& v : occ) v /= static_cast<double>(steps);
    return occ;
}

AuxChainResult simulate_aux_chain(const BirthDeathSpec& spec, std::uint64_t steps,
                                  std::uint64_t seed, std::uint64_t stream_id, int blocks) {
    if (steps == 0) throw param_error("analysis: step count must be positive");
    if (blocks < 1 || static_cast<std::uint64_t>(blocks) > steps) {
        throw param_error("analysis: invalid block count");
    }
    const double down = spec.beta();
    if (!(down > 0.0)) throw param_error("analysis: down rate is zero");
    if (!spec.simulable()) {
        throw param_error("analysis: move rates exceed one; the kernel is not simulable");
    }

    AuxChainResult out;
    out.delta_star = spec.delta_star;
    out.steps = steps;
    out.block_histograms.assign(static_cast<std::size_t>(blocks), {});

    RngStream rng(seed, stream_id);
    std::vector<double> up_cache;
    auto up_at = [&](std::uint32_t k) {
        while (up_cache.size() <= k) {
            up_cache.push_back(spec.alpha(spec.delta_star + static_cast<int>(up_cache.size())));
        }
        return up_cache[k];
    };

    // Floor-sized blocks with the remainder folded into the last one keep
    // every block occupied.
    const std::uint64_t block_size = steps / static_cast<std::uint64_t>(blocks);
    std::uint32_t k = 0;  // delta - delta_star
    auto c = static_cast<std::uint32_t>(spec.n - 1);
    for (std::uint64_t step = 0; step < steps; ++step) {
        const double u = rng.uniform01();
        const double a = up_at(k);
        if (u < a) {
            ++k;
            c = 1;
        } else if (c > 1) {
            --c;
        } else if (u < a + down) {
            if (k > 0) --k;
        }
        const auto block = std::min<std::uint64_t>(step / block_size,
                                                   static_cast<std::uint64_t>(blocks) - 1);
        auto& hist = out.block_histograms[static_cast<std::size_t>(block)];
        if (hist.size() <= k) hist.resize(k + 1, 0);
        ++hist[k];
        if (c > 1) ++out.n2_gt1_steps;
    }
    return out;
}

ExpMomentEstimate exp_moment(const AuxChainResult& result, double base) {
    if (!(base > 0.0) || !std::isfinite(base)) throw param_error("analysis: base must be positive");
    std::vector<double> means;
    means.reserve(result.block_histograms.size());
    for (const auto& h : result.block_histograms) {
        double total = 0.0;
        double acc = 0.0;
        for (std::size_t k = 0; k < h.size(); ++k) {
            const auto weight = static_cast<double>(h[k]);
            total += weight;
            acc += weight * std::pow(base, result.delta_star + static_cast<int>(k));
        }
        if (total > 0.0) means.push_back(acc / total);
    }
    if (means.empty()) throw param_error("analysis: no occupied blocks");
    ExpMomentEstimate est;
    est.estimate = stats::mean(means);
    est.se = stats::stderr_of_mean(means);
    est.lo = est.estimate - kZ99 * est.se;
    est.hi = est.estimate + kZ99 * est.se;
    return est;
}

EmpiricalCcdf ccdf_across_replicas(const std::vector<std::vector<std::uint64_t>>& histograms) {
    if (histograms.empty()) throw param_error("analysis: no histograms");
    std::size_t len = 0;
    for (const auto& h : histograms) len = std::max(len, h.size());
    if (len == 0) throw param_error("analysis: all histograms are empty");

    const std::size_t r = histograms.size();
    std::vector<std::vector<double>> ccdfs(r, std::vector<double>(len, 0.0));
    EmpiricalCcdf out;
    for (std::size_t i = 0; i < r; ++i) {
        const auto& h = histograms[i];
        const std::uint64_t total = std::accumulate(h.begin(), h.end(), std::uint64_t{0});
        if (total == 0) throw param_error("analysis: replica histogram is empty");
        out.total_samples += total;
        // suffix sums: Pr(value > d)
        std::uint64_t above = total;
        for (std::size_t d = 0; d < len; ++d) {
            above -= d < h.size() ? h[d] : 0;
            ccdfs[i][d] = static_cast<double>(above) / static_cast<double>(total);
        }
    }
    out.p.resize(len);
    out.se.resize(len);
    std::vector<double> column(r);
    for (std::size_t d = 0; d < len; ++d) {
        for (std::size_t i = 0; i < r; ++i) column[i] = ccdfs[i][d];
        out.p[d] = stats::mean(column);
        out.se[d] = r >= 2 ? stats::stderr_of_mean(column) : 0.0;
    }
    return out;
}

void pad_ccdf(EmpiricalCcdf& ccdf, std::size_t len) {
    if (ccdf.p.size() < len) {
        ccdf.p.resize(len, 0.0);
        ccdf.se.resize(len, 0.0);
    }
}

DominanceVerdict dominance_test(const EmpiricalCcdf& upper, const EmpiricalCcdf& lower,
                                double tol_sigma) {
    if (upper.p.size() != lower.p.size()) {
        throw param_error("analysis: dominance inputs must share a support");
    }
    DominanceVerdict verdict;
    verdict.support = upper.p.size();
    verdict.worst_margin = std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < upper.p.size(); ++d) {
        const double band = tol_sigma * std::hypot(upper.se[d], lower.se[d]);
        const double margin = upper.p[d] - lower.p[d] + band;
        verdict.worst_margin = std::min(verdict.worst_margin, margin);
        if (margin < 0.0) ++verdict.violations;
    }
    verdict.dominates = verdict.violations == 0;
    if (verdict.support == 0) verdict.worst_margin = 0.0;
    return verdict;
}

double tv_distance(std::span<const double> a, std::span<const double> b) {
    const std::size_t len = std::max(a.size(), b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        const double x = i < a.size() ? a[i] : 0.0;
        const double y = i < b.size() ? b[i] : 0.0;
        acc += std::fabs(x - y);
    }
    return 0.5 * acc;
}

} // namespace ebsim::analysis
