#pragma once

#include "ebsim/sim.hpp"
#include "ebsim/stats.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ebsim::analysis {

enum class Regime { Ergodic, NullRecurrent, Transient };

std::string regime_name(Regime r);

struct RegimeReport {
    double b = 0.0;
    double i0 = 0.0;
    int n = 0;
    Regime joint_regime = Regime::Transient;
    // Largest r such that the r-th smallest index process is positive
    // recurrent; the minimum (r = 1) always is.
    int marginal_positive_recurrent_upto = 1;
    bool throughput_one = false;
};

// Classification for the exponential law b^-(i + i0): ergodic iff i0 > 1,
// null recurrent iff 0 < i0 <= 1, transient at i0 = 0; the r-th order
// statistic is positive recurrent iff i0 > 1/(n - r + 1); long-run throughput
// is one iff i0 <= 1/(n - 1).
RegimeReport classify_regime(double b, double i0, int n);

// One recorded slot at which some cohort user (ids 1..n-1) transmitted,
// with post-slot cohort aggregates attached.
struct CollisionEntry {
    std::uint64_t slot = 0;
    int cohort_transmitters = 0;
    std::int64_t extra_collisions = 0;  // cohort transmitters - 1
    std::int64_t cum_extra = 0;
    std::uint32_t min_cohort = 0;
    std::uint32_t max_cohort = 0;
    std::uint64_t cohort_sum = 0;
    std::uint32_t x1_after = 0;
    bool u1_transmitted = false;
};

struct CollisionTrace {
    int n = 0;
    std::uint64_t initial_cohort_sum = 0;
    std::vector<CollisionEntry> entries;
    bool ended_by_cohort_success = false;

    double a0() const;  // initial cohort sum averaged over the n-1 cohort users
};

// Builds the collision-time view of a raw trace and verifies the counting
// identity sum_r X_r(k_j) = sum_r x_r(0) + j + sum_{l<=j} C(k_l) at every
// entry; a mismatch is an integrity error.
CollisionTrace collision_trace(const sim::RawCohortTrace& raw);

struct SandwichReport {
    std::uint64_t checked = 0;
    std::uint64_t violations = 0;
    std::int64_t min_lower_slack = 0;  // worst-case slack of each bound,
    std::int64_t min_upper_slack = 0;  // negative means violated
};

// Integer form of the min-index sandwich: for every entry j,
// -(n-1) * (max - min) <= (n-1) * min - sum_r x_r(0) - j <= cum_extra.
SandwichReport sandwich_check(const CollisionTrace& trace);

// Fraction of recorded entries at which user 0 sat at index zero when the
// slot began.
double x1_zero_at_collision_fraction(const CollisionTrace& trace);

// Counts of the cohort spread (max - min) over the entries of one trace.
std::vector<std::uint64_t> spread_histogram(const CollisionTrace& trace);

// Dominating birth-death walk on delta >= delta_star with a reflecting floor:
// up moves at rate alpha(delta) = min{(n-1) b^-delta, 1}, down moves at the
// constant rate beta = (1 - b^-(x2+i0))^(n-1) / (n-1).
struct BirthDeathSpec {
    double b = 2.0;
    double i0 = 0.0;
    int n = 2;
    std::uint32_t x2 = 0;
    int delta_star = 0;

    // Auto-selects the floor: smallest delta with (n-1) b^-delta < 1/2.
    static BirthDeathSpec make(double b, double i0, int n, std::uint32_t x2);
    static BirthDeathSpec with_delta_star(double b, double i0, int n, std::uint32_t x2,
                                          int delta_star);

    double alpha(int delta) const;
    double beta() const;
    bool simulable() const;           // alpha(delta_star+1) + beta <= 1
    bool dominance_margin_ok() const; // up-rate at most 1/2 above the floor
};

struct BdDistribution {
    int delta_star = 0;
    int delta_max = 0;
    std::vector<double> pi;  // pi[k] is the mass at delta_star + k
    double truncation_tail_bound = 0.0;

    double at(int delta) const;
};

// Stationary law by the detailed-balance product, computed in log space and
// truncated at delta_max with a geometric bound on the discarded tail.
BdDistribution bd_stationary(const BirthDeathSpec& spec, int delta_max);

// Quadratic fit of log pi against the offset k = delta - delta_star; the
// curvature of the exact law is -(ln b)/2.
stats::QuadFit tail_quadratic_fit(std::span<const double> pi);

struct AuxChainResult {
    int delta_star = 0;
    std::uint64_t steps = 0;
    std::uint64_t n2_gt1_steps = 0;
    // Per-block occupancy counts of delta - delta_star (post-move states).
    std::vector<std::vector<std::uint64_t>> block_histograms;

    double n2_gt1_fraction() const;
    std::vector<double> occupancy() const;  // pooled, normalized
};

// Simulates the (delta, N2) auxiliary chain from (delta_star, n-1): an up
// move always lands at N2 = 1, a down move needs N2 = 1, and otherwise N2
// decays toward 1. Requires a simulable spec.
AuxChainResult simulate_aux_chain(const BirthDeathSpec& spec, std::uint64_t steps,
                                  std::uint64_t seed, std::uint64_t stream_id, int blocks = 64);

struct ExpMomentEstimate {
    double estimate = 0.0;
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// Block-mean estimate of E[base^delta] under the chain's occupancy.
ExpMomentEstimate exp_moment(const AuxChainResult& result, double base);

struct EmpiricalCcdf {
    std::vector<double> p;   // p[d] = Pr(value > d)
    std::vector<double> se;
    std::uint64_t total_samples = 0;
};

// Equal-weight average of per-replica CCDFs; the spread across replicas
// yields the pointwise standard errors.
EmpiricalCcdf ccdf_across_replicas(const std::vector<std::vector<std::uint64_t>>& histograms);

void pad_ccdf(EmpiricalCcdf& ccdf, std::size_t len);

struct DominanceVerdict {
    bool dominates = false;
    std::size_t support = 0;
    std::size_t violations = 0;
    double worst_margin = 0.0;  // min over d of (upper.p - lower.p + tol * se)
};

// Checks upper.p[d] >= lower.p[d] - tol_sigma * combined stderr on the full
// common support (after padding to equal length).
DominanceVerdict dominance_test(const EmpiricalCcdf& upper, const EmpiricalCcdf& lower,
                                double tol_sigma = 3.0);

double tv_distance(std::span<const double> a, std::span<const double> b);

} // namespace ebsim::analysis
