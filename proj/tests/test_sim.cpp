#include "ebsim/errors.hpp"
#include "ebsim/oracle.hpp"
#include "ebsim/sim.hpp"
#include "ebsim/stats.hpp"

#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

using namespace ebsim;

namespace {

sim::SimConfig saturated_cfg(int n, double b, double i0, std::uint64_t horizon,
                             std::uint64_t seed) {
    sim::SimConfig cfg;
    cfg.n = n;
    cfg.law = BackoffLaw::exponential(b, i0);
    cfg.horizon = horizon;
    cfg.seed = seed;
    cfg.mode = sim::SimMode::Saturated;
    return cfg;
}

} // namespace

TEST_CASE("saturated runs are deterministic and conserve slot counts") {
    const auto cfg = saturated_cfg(3, 2.0, 0.7, 40000, 42);
    const auto a = sim::run_saturated(cfg);
    const auto b = sim::run_saturated(cfg);

    CHECK(a.slots == cfg.horizon);
    CHECK(a.successes + a.collisions + a.idles == a.slots);
    CHECK(a.tail_successes + a.tail_collisions + a.tail_idles == a.tail_slots);
    CHECK(a.tail_slots == cfg.horizon - cfg.horizon / 2);
    CHECK(std::accumulate(a.per_user_successes.begin(), a.per_user_successes.end(),
                          std::uint64_t{0}) == a.successes);

    CHECK(a.successes == b.successes);
    CHECK(a.collisions == b.collisions);
    CHECK(a.per_user_successes == b.per_user_successes);
    REQUIRE(a.replicas.size() == 1);
    REQUIRE(b.replicas.size() == 1);
    CHECK(a.replicas[0].final_state == b.replicas[0].final_state);
    CHECK(a.replicas[0].zero_return_times == b.replicas[0].zero_return_times);

    std::uint64_t tail_total = 0;
    for (const auto& h : a.marginal_histograms) {
        CHECK(h.size() == cfg.histogram_buckets);
        tail_total += std::accumulate(h.begin(), h.end(), std::uint64_t{0});
    }
    CHECK(tail_total == a.tail_slots * static_cast<std::uint64_t>(cfg.n));
}

TEST_CASE("different seeds and streams decorrelate runs") {
    const auto base = saturated_cfg(2, 2.0, 1.0, 20000, 7);
    auto other_seed = base;
    other_seed.seed = 8;
    auto other_stream = base;
    other_stream.stream_id = 5;
    const auto r0 = sim::run_saturated(base);
    const auto r1 = sim::run_saturated(other_seed);
    const auto r2 = sim::run_saturated(other_stream);
    CHECK(r0.replicas[0].final_state != r1.replicas[0].final_state);
    const bool differs = r0.successes != r2.successes ||
                         r0.replicas[0].final_state != r2.replicas[0].final_state;
    CHECK(differs);
}

TEST_CASE("replica batches merge associatively and ignore thread count") {
    auto cfg = saturated_cfg(2, 2.0, 1.2, 8000, 11);
    const auto whole = sim::run_saturated_replicas(cfg, 6);
    CHECK(whole.replicas.size() == 6);
    CHECK(whole.slots == 6 * cfg.horizon);

    // Same six replica streams, produced in two shards and merged.
    auto lo = cfg;
    const auto first = sim::run_saturated_replicas(lo, 3);
    auto hi = cfg;
    hi.stream_id = 3;
    const auto second = sim::run_saturated_replicas(hi, 3);
    const auto joined = sim::merge_stats(first, second);
    const auto joined_rev = sim::merge_stats(second, first);

    CHECK(joined.successes == whole.successes);
    CHECK(joined.collisions == whole.collisions);
    CHECK(joined.per_user_successes == whole.per_user_successes);
    CHECK(joined.marginal_histograms == whole.marginal_histograms);
    CHECK(joined_rev.successes == joined.successes);
    CHECK(joined_rev.replicas.size() == joined.replicas.size());
    for (std::size_t i = 0; i < joined.replicas.size(); ++i) {
        CHECK(joined.replicas[i].replica_id == whole.replicas[i].replica_id);
        CHECK(joined.replicas[i].final_state == whole.replicas[i].final_state);
    }

    const auto threaded = sim::run_saturated_replicas(cfg, 6, 3);
    CHECK(threaded.successes == whole.successes);
    CHECK(threaded.per_user_successes == whole.per_user_successes);
    for (std::size_t i = 0; i < threaded.replicas.size(); ++i) {
        CHECK(threaded.replicas[i].final_state == whole.replicas[i].final_state);
    }

    auto mismatched = saturated_cfg(3, 2.0, 1.2, 8000, 11);
    const auto wrong_n = sim::run_saturated_replicas(mismatched, 1);
    CHECK_THROWS_AS(sim::merge_stats(whole, wrong_n), param_error);
}

TEST_CASE("capture effect appears without an offset") {
    // With i0 = 0 one user quickly locks onto index zero and keeps the
    // channel; the presumptive winner should dominate the tail.
    auto cfg = saturated_cfg(2, 2.0, 0.0, 200000, 3);
    const auto stats = sim::run_saturated_replicas(cfg, 4);
    for (const auto& rep : stats.replicas) {
        CHECK(rep.x1_zero_fraction() > 0.9);
        CHECK(rep.tail_max_success_share() > 0.9);
        CHECK(rep.min_zero_fraction() >= rep.x1_zero_fraction() - 1e-12);
    }
}

TEST_CASE("mean return time to the all-zero state matches Kac's formula") {
    const double b = 2.0, i0 = 1.5;
    auto cfg = saturated_cfg(2, b, i0, 2000000, 19);
    const auto stats = sim::run_saturated(cfg);
    const auto& gaps = stats.replicas[0].zero_return_times;
    REQUIRE(gaps.size() > 1000);
    std::vector<double> g(gaps.begin(), gaps.end());
    const double mean_gap = stats::mean(g);
    const double se = stats::stderr_of_mean(g);

    const auto chain = oracle::build_truncated_chain(2, 40, BackoffLaw::exponential(b, i0));
    const auto sol = oracle::exact_stationary(chain);
    const std::vector<std::uint32_t> zero{0, 0};
    const double expected = 1.0 / sol.pi[chain.state_index(zero)];
    CHECK(std::abs(mean_gap - expected) < 5.0 * se);
}

TEST_CASE("initial state override is honored") {
    auto cfg = saturated_cfg(3, 2.0, 1.0, 1, 1);
    cfg.initial_state = std::vector<std::uint32_t>{9, 9, 9};
    const auto stats = sim::run_saturated(cfg);
    for (const std::uint32_t v : stats.replicas[0].final_state) {
        CHECK(v >= 8); // one slot can lower an index only via a success reset
    }
    cfg.initial_state = std::vector<std::uint32_t>{1, 2};
    CHECK_THROWS_AS(sim::run_saturated(cfg), param_error);
}

TEST_CASE("config validation") {
    auto cfg = saturated_cfg(2, 2.0, 1.0, 0, 1);
    CHECK_THROWS_AS(sim::run_saturated(cfg), param_error);
    auto one_user = saturated_cfg(2, 2.0, 1.0, 10, 1);
    one_user.n = 1;
    CHECK_THROWS_AS(sim::run_saturated(one_user), param_error);
    auto queued = saturated_cfg(2, 2.0, 1.5, 10, 1);
    queued.mode = sim::SimMode::Queued;
    queued.lambda = -0.5;
    CHECK_THROWS_AS(sim::run_queued(queued), param_error);
}

TEST_CASE("queued mode conserves customers and is deterministic") {
    sim::SimConfig cfg;
    cfg.n = 3;
    cfg.law = BackoffLaw::exponential(2.0, 1.5);
    cfg.mode = sim::SimMode::Queued;
    cfg.lambda = 0.15;
    cfg.horizon = 60000;
    cfg.seed = 23;
    const auto a = sim::run_queued_replicas(cfg, 3);
    const auto b = sim::run_queued_replicas(cfg, 3, 2);
    CHECK(a.arrivals == b.arrivals);
    CHECK(a.departures == b.departures);
    std::uint64_t final_total = 0;
    for (const auto& rep : a.replicas) {
        CHECK(rep.arrivals >= rep.departures);
        final_total += rep.final_queue;
        CHECK_FALSE(rep.samples.empty());
    }
    CHECK(a.arrivals - a.departures == final_total);
    CHECK(a.slots == 3 * cfg.horizon);

    // Poisson thinning: total arrivals concentrate near lambda * slots.
    const double expect = cfg.lambda * static_cast<double>(a.slots);
    CHECK(std::abs(static_cast<double>(a.arrivals) - expect) < 6.0 * std::sqrt(expect));
}

TEST_CASE("queued mode with zero arrivals stays empty") {
    sim::SimConfig cfg;
    cfg.n = 2;
    cfg.law = BackoffLaw::exponential(2.0, 1.0);
    cfg.mode = sim::SimMode::Queued;
    cfg.lambda = 0.0;
    cfg.horizon = 5000;
    const auto s = sim::run_queued(cfg);
    CHECK(s.arrivals == 0);
    CHECK(s.departures == 0);
    CHECK(s.mean_queue_tail() == doctest::Approx(0.0));
    CHECK(s.drift_estimate() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("queue merge pools tally fields") {
    sim::SimConfig cfg;
    cfg.n = 2;
    cfg.law = BackoffLaw::exponential(2.0, 1.5);
    cfg.mode = sim::SimMode::Queued;
    cfg.lambda = 0.2;
    cfg.horizon = 20000;
    cfg.seed = 5;
    const auto whole = sim::run_queued_replicas(cfg, 4);
    auto hi = cfg;
    hi.stream_id = 2;
    const auto joined =
        sim::merge_stats(sim::run_queued_replicas(cfg, 2), sim::run_queued_replicas(hi, 2));
    CHECK(joined.arrivals == whole.arrivals);
    CHECK(joined.departures == whole.departures);
    CHECK(joined.mean_queue_tail() == doctest::Approx(whole.mean_queue_tail()));
    CHECK(joined.drift_estimate() == doctest::Approx(whole.drift_estimate()));
}

TEST_CASE("first success times agree with the exact absorbing chain") {
    sim::FirstSuccessConfig cfg;
    cfg.n = 2;
    cfg.law = BackoffLaw::exponential(2.0, 2.0);
    cfg.m = 0;
    cfg.horizon = 100000;
    cfg.replicas = 20000;
    cfg.seed = 31;
    const auto sum = sim::run_first_success_experiment(cfg);
    CHECK(sum.replicas == cfg.replicas);
    CHECK(sum.censored == 0);
    CHECK(sum.times.size() == cfg.replicas);

    const double exact = oracle::exact_first_success_time(2, 40, cfg.law, cfg.m);
    CHECK(std::abs(sum.censored_mean - exact) < 4.5 * sum.se);
}

TEST_CASE("first success censoring truncates at the horizon") {
    sim::FirstSuccessConfig cfg;
    cfg.n = 2;
    cfg.law = BackoffLaw::exponential(2.0, 6.0); // lone success is rare
    cfg.m = 12;
    cfg.horizon = 10;
    cfg.replicas = 200;
    const auto sum = sim::run_first_success_experiment(cfg);
    CHECK(sum.censored > 0);
    CHECK(sum.censor_fraction() == doctest::Approx(static_cast<double>(sum.censored) / 200.0));
    for (const double t : sum.times) {
        CHECK(t >= 1.0);
        CHECK(t <= static_cast<double>(cfg.horizon));
    }
}

TEST_CASE("return times to zero for the minimum order statistic") {
    sim::ReturnTimeConfig cfg;
    cfg.n = 2;
    cfg.law = BackoffLaw::exponential(2.0, 0.5);
    cfg.rank = 1;
    cfg.horizon = 50000;
    cfg.replicas = 400;
    cfg.seed = 13;
    const auto sum = sim::run_return_time_experiment(cfg);
    CHECK(sum.replicas == cfg.replicas);
    CHECK(sum.never_left + sum.times.size() == cfg.replicas);
    for (const double t : sum.times) CHECK(t >= 1.0);
    CHECK(sum.censored_mean > 0.0);

    sim::ReturnTimeConfig bad = cfg;
    bad.rank = 3;
    CHECK_THROWS_AS(sim::run_return_time_experiment(bad), param_error);
}

TEST_CASE("cohort traces stop at the first cohort success") {
    const BackoffLaw law = BackoffLaw::exponential(2.0, 0.4);
    for (std::uint64_t stream = 0; stream < 20; ++stream) {
        const auto trace = sim::record_cohort_trace(3, law, 5, 50000, 77, stream);
        CHECK(trace.n == 3);
        CHECK(trace.initial == std::vector<std::uint32_t>{0, 5, 5});
        std::uint64_t prev_slot = 0;
        for (const auto& e : trace.entries) {
            CHECK(e.slot > prev_slot);
            prev_slot = e.slot;
            bool cohort = false;
            for (const int u : e.transmitters) cohort = cohort || u >= 1;
            CHECK(cohort); // recorded slots involve at least one cohort user
            CHECK(e.state_after.size() == 3);
        }
        if (trace.ended_by_cohort_success) {
            CHECK(prev_slot < trace.slots_run); // the success slot is excluded
        } else {
            CHECK(trace.slots_run == 50000);
        }
    }
}
