#pragma once

#include "ebsim/model.hpp"
#include "ebsim/sim.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ebsim::queueing {

// Service-time law on whole slots (support starts at 1). Unbounded laws are
// truncated once the remaining mass drops below the tolerance; the cut is
// recorded, not redistributed.
class ServiceDist {
public:
    static ServiceDist deterministic(std::uint32_t slots);
    static ServiceDist geometric(double mean_slots, double tail_tol = 1e-12);
    static ServiceDist from_pairs(const std::vector<std::pair<std::uint32_t, double>>& pairs);
    // "det:3", "geo:2.5", or "pmf:1=0.25,2=0.75".
    static ServiceDist from_text(const std::string& text);

    double mean() const;
    double second_moment() const;
    double tail_mass() const { return tail_mass_; }
    std::span<const double> pmf() const { return pmf_; }  // indexed by slot count

private:
    std::vector<double> pmf_;
    double tail_mass_ = 0.0;
};

// zeta[j] = Pr(j arrivals during one service) for Poisson arrivals at the
// given rate; the expansion is extended until the missed mass per service
// length is below tail_tol.
std::vector<double> compute_zeta(const ServiceDist& service, double lambda,
                                 double tail_tol = 1e-10);

enum class ChainKind { Standard, Modified };
enum class TruncationPolicy { Reflecting, AbsorbingTailMass };

// Queue length embedded at departures, truncated at r_max states above zero.
// Rows are generated from zeta on demand; Reflecting folds overflow into the
// last state, AbsorbingTailMass simply drops it.
class EmbeddedChain {
public:
    EmbeddedChain(ChainKind kind, std::vector<double> zeta, std::size_t r_max,
                  TruncationPolicy policy);

    ChainKind kind() const { return kind_; }
    std::size_t dim() const { return r_max_ + 1; }
    std::size_t r_max() const { return r_max_; }
    const std::vector<double>& zeta() const { return zeta_; }

    std::vector<double> row(std::size_t i) const;
    double entry(std::size_t i, std::size_t j) const;
    double row_sum(std::size_t i) const;
    std::vector<double> multiply_left(std::span<const double> v) const;

private:
    ChainKind kind_;
    TruncationPolicy policy_;
    std::vector<double> zeta_;
    std::size_t r_max_;
};

EmbeddedChain build_chain(ChainKind kind, std::vector<double> zeta, std::size_t r_max,
                          TruncationPolicy policy = TruncationPolicy::Reflecting);

struct StationaryResult {
    bool stable = false;
    std::vector<double> pi;  // at the base truncation
    double residual = 0.0;
    double boundary_mass = 0.0;          // top-band mass at r_max
    double boundary_mass_doubled = 0.0;  // top-band mass at 2 * r_max
    std::size_t r_max_used = 0;

    double mean() const;  // mean state index under pi
};

// Solves the truncated chain at r_max and at 2 * r_max and reads stability
// off the mass in the top sixteenth of the doubled state space: vanishing
// mass means the truncation is faithful, persistent mass means the queue
// escapes; in-between is reported as inconclusive.
StationaryResult stationary_or_diverge(ChainKind kind, const std::vector<double>& zeta,
                                       std::size_t r_max);

// Mean number in system for M/G/1 at arrival rate lambda.
double pk_mean_system(const ServiceDist& service, double lambda);

struct Lambda0Estimate {
    double lambda0 = 0.0;
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::uint64_t replicas = 0;
    bool ergodic_params = false;  // saturation estimates are trustworthy only here
};

// Saturation throughput over the final half of each replica, averaged.
Lambda0Estimate estimate_lambda0(int n, const BackoffLaw& law, std::uint64_t horizon,
                                 std::uint64_t replicas, std::uint64_t seed,
                                 std::uint64_t stream_id = 0);

enum class StabilityVerdict { Stable, Unstable, Inconclusive };

std::string verdict_name(StabilityVerdict v);

struct LambdaVerdict {
    double lambda = 0.0;
    StabilityVerdict verdict = StabilityVerdict::Inconclusive;
    double drift = 0.0;  // queue slope at the doubled horizon
    double drift_se = 0.0;
    double drift_lo = 0.0;
    double drift_hi = 0.0;
    double tail_mean_h = 0.0;
    double tail_mean_2h = 0.0;
};

// Runs the queued system at horizons h and 2h. Stable verdicts need a drift
// interval covering zero and a tail mean that stays bounded as the horizon
// doubles; a strictly positive interval is unstable; anything else is
// inconclusive.
LambdaVerdict stability_experiment(int n, const BackoffLaw& law, double lambda,
                                   std::uint64_t horizon, std::uint64_t replicas,
                                   std::uint64_t seed, std::uint64_t stream_id = 0);

} // namespace ebsim::queueing
