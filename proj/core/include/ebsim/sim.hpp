#pragma once

#include "ebsim/model.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace ebsim::sim {

enum class SimMode { Saturated, Queued };

struct SimConfig {
    int n = 2;
    BackoffLaw law = BackoffLaw::exponential(2.0, 0.0);
    std::uint64_t horizon = 100000;
    std::uint64_t seed = 1;
    std::uint64_t stream_id = 0;
    SimMode mode = SimMode::Saturated;
    double lambda = 0.0;  // total arrival rate, queued mode only
    std::optional<std::vector<std::uint32_t>> initial_state;  // default: all zeros
    std::uint64_t sample_stride = 0;           // 0 -> max(1, horizon / 2048)
    std::uint32_t histogram_buckets = 64;      // 0 disables tail histograms
    std::uint64_t return_times_cap = 1u << 20; // per replica
};

// Per-replica tallies for the saturated chain. The tail window is the final
// half of the horizon; the presumptive winner is the user with the smallest
// index when that window opens (ties to the lowest id).
struct SaturationReplica {
    std::uint64_t replica_id = 0;
    int winner = 0;
    std::uint64_t tail_slots = 0;
    std::uint64_t tail_successes = 0;
    std::uint64_t tail_collisions = 0;
    std::uint64_t tail_idles = 0;
    std::uint64_t winner_index_zero_slots = 0;
    std::uint64_t min_index_zero_slots = 0;
    std::vector<std::uint64_t> tail_per_user_successes;
    std::vector<std::uint64_t> zero_return_times;  // gaps between all-zero visits
    std::vector<std::uint32_t> final_state;

    double x1_zero_fraction() const;
    double min_zero_fraction() const;
    double tail_max_success_share() const;
};

struct SaturationStats {
    int n = 0;
    std::uint64_t slots = 0;
    std::uint64_t successes = 0;
    std::uint64_t collisions = 0;
    std::uint64_t idles = 0;
    std::uint64_t tail_slots = 0;
    std::uint64_t tail_successes = 0;
    std::uint64_t tail_collisions = 0;
    std::uint64_t tail_idles = 0;
    std::vector<std::uint64_t> per_user_successes;
    // Pooled tail histogram per user; the last bucket absorbs the overflow.
    std::vector<std::vector<std::uint64_t>> marginal_histograms;
    std::vector<SaturationReplica> replicas;

    double throughput() const;
    double tail_throughput() const;
    double collision_free_ratio() const;
    double tail_collision_free_ratio() const;
};

struct QueueReplica {
    std::uint64_t replica_id = 0;
    std::uint64_t arrivals = 0;
    std::uint64_t departures = 0;
    std::uint64_t final_queue = 0;
    double drift_estimate = 0.0;  // queue-size slope over the sampled last half
    double tail_sum = 0.0;        // per-slot totals over the last quarter
    std::uint64_t tail_count = 0;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> samples;  // (slot, total queue)

    double mean_queue_tail() const;
};

struct QueueStats {
    int n = 0;
    std::uint64_t slots = 0;
    std::uint64_t arrivals = 0;
    std::uint64_t departures = 0;
    std::vector<QueueReplica> replicas;

    double mean_queue_tail() const;   // pooled over replicas
    double drift_estimate() const;    // mean of per-replica slopes
};

SaturationStats run_saturated(const SimConfig& cfg);
SaturationStats run_saturated_replicas(const SimConfig& cfg, std::uint64_t replicas,
                                       int threads = 1);
QueueStats run_queued(const SimConfig& cfg);
QueueStats run_queued_replicas(const SimConfig& cfg, std::uint64_t replicas, int threads = 1);

// Merges are shape-checked, associative, and commutative (replica order is
// normalized by id), so sharded runs reduce to the same result.
SaturationStats merge_stats(const SaturationStats& a, const SaturationStats& b);
QueueStats merge_stats(const QueueStats& a, const QueueStats& b);

struct FirstSuccessConfig {
    int n = 2;
    BackoffLaw law = BackoffLaw::exponential(2.0, 0.0);
    std::uint32_t m = 0;          // cohort users start at index m, user 0 at 0
    std::uint64_t horizon = 100000;
    std::uint64_t replicas = 100;
    std::uint64_t seed = 1;
    std::uint64_t stream_id = 0;
};

struct FirstSuccessSummary {
    std::uint64_t horizon = 0;
    std::uint64_t replicas = 0;
    std::uint64_t censored = 0;
    double censored_mean = 0.0;  // mean of min(first success slot, horizon)
    double se = 0.0;
    std::vector<double> times;

    double censor_fraction() const;
};

// Slot count until the first success by any of users 1..n-1, starting from
// (0, m, ..., m); censored observations are truncated at the horizon.
FirstSuccessSummary run_first_success_experiment(const FirstSuccessConfig& cfg);

struct ReturnTimeConfig {
    int n = 2;
    BackoffLaw law = BackoffLaw::exponential(2.0, 0.0);
    int rank = 1;                 // 1-based: track the rank-th smallest index
    std::uint64_t horizon = 100000;
    std::uint64_t replicas = 100;
    std::uint64_t seed = 1;
    std::uint64_t stream_id = 0;
};

struct ReturnTimeSummary {
    std::uint64_t replicas = 0;
    std::uint64_t censored = 0;
    std::uint64_t never_left = 0;  // order statistic stayed at zero all horizon
    double censored_mean = 0.0;
    double se = 0.0;
    std::vector<double> times;
};

// Starts all-zero, waits until the rank-th smallest index leaves zero, then
// counts slots until it is zero again; both phases are capped by the horizon.
ReturnTimeSummary run_return_time_experiment(const ReturnTimeConfig& cfg);

struct CohortTraceEntry {
    std::uint64_t slot = 0;                    // 1-based
    std::vector<int> transmitters;             // every transmitter, user 0 included
    std::vector<std::uint32_t> state_after;    // post-slot indices
};

// Slots in which at least one of users 1..n-1 transmits, recorded from the
// start (0, m, ..., m) and cut just before the first success by one of them.
struct RawCohortTrace {
    int n = 0;
    std::uint32_t m = 0;
    std::vector<std::uint32_t> initial;
    std::vector<CohortTraceEntry> entries;
    bool ended_by_cohort_success = false;
    std::uint64_t slots_run = 0;
};

RawCohortTrace record_cohort_trace(int n, const BackoffLaw& law, std::uint32_t m,
                                   std::uint64_t horizon, std::uint64_t seed,
                                   std::uint64_t stream_id);

} // namespace ebsim::sim
