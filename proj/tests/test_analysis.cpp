#include "ebsim/analysis.hpp"
#include "ebsim/errors.hpp"
#include "ebsim/sim.hpp"

#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

using namespace ebsim;

TEST_CASE("regime classification spot values") {
    using analysis::Regime;
    auto r = analysis::classify_regime(2.0, 2.0, 3);
    CHECK(r.joint_regime == Regime::Ergodic);
    CHECK(r.marginal_positive_recurrent_upto == 3);
    CHECK_FALSE(r.throughput_one);

    r = analysis::classify_regime(2.0, 0.0, 5);
    CHECK(r.joint_regime == Regime::Transient);
    CHECK(r.marginal_positive_recurrent_upto == 1);
    CHECK(r.throughput_one);

    r = analysis::classify_regime(2.0, 0.5, 5);
    CHECK(r.joint_regime == Regime::NullRecurrent);
    CHECK(r.marginal_positive_recurrent_upto == 3);
    CHECK_FALSE(r.throughput_one);

    r = analysis::classify_regime(1.5, 1.0, 2);
    CHECK(r.joint_regime == Regime::NullRecurrent);
    CHECK(r.marginal_positive_recurrent_upto == 1);
    CHECK(r.throughput_one); // boundary: i0 = 1/(n-1)

    CHECK(analysis::regime_name(Regime::Ergodic) == "ergodic");
    CHECK(analysis::regime_name(Regime::NullRecurrent) == "null_recurrent");
    CHECK(analysis::regime_name(Regime::Transient) == "transient");

    CHECK_THROWS_AS(analysis::classify_regime(1.0, 0.5, 2), param_error);
    CHECK_THROWS_AS(analysis::classify_regime(2.0, -0.1, 2), param_error);
    CHECK_THROWS_AS(analysis::classify_regime(2.0, 0.5, 1), param_error);
}

TEST_CASE("regime classification internal consistency") {
    using analysis::Regime;
    const double i0s[] = {0.0, 0.05, 0.2, 0.5, 0.9, 1.0, 1.1, 2.0, 7.5};
    for (int n = 2; n <= 10; ++n) {
        for (const double i0 : i0s) {
            const auto rep = analysis::classify_regime(3.0, i0, n);
            if (rep.joint_regime == Regime::Ergodic) {
                CHECK(rep.marginal_positive_recurrent_upto == n);
            }
            if (rep.joint_regime == Regime::Transient) {
                CHECK(rep.marginal_positive_recurrent_upto == 1);
                CHECK(rep.throughput_one);
            }
            // throughput one <=> even the second-smallest index escapes,
            // i.e. only the minimum is positive recurrent... except at the
            // shared boundary i0 = 1/(n-1) where both conditions hold.
            if (rep.throughput_one) {
                CHECK(i0 <= 1.0 / (n - 1) + 1e-12);
            } else {
                CHECK(rep.marginal_positive_recurrent_upto >= 2);
            }
            CHECK(rep.marginal_positive_recurrent_upto >= 1);
            CHECK(rep.marginal_positive_recurrent_upto <= n);
        }
    }
}

TEST_CASE("collision trace of a hand-built raw trace") {
    sim::RawCohortTrace raw;
    raw.n = 3;
    raw.m = 2;
    raw.initial = {0, 2, 2};
    raw.ended_by_cohort_success = true;
    raw.slots_run = 9;
    raw.entries.push_back({1, {1, 2}, {0, 3, 3}});
    raw.entries.push_back({5, {0, 1}, {1, 4, 3}});

    const auto trace = analysis::collision_trace(raw);
    CHECK(trace.n == 3);
    CHECK(trace.initial_cohort_sum == 4);
    CHECK(trace.a0() == doctest::Approx(2.0));
    REQUIRE(trace.entries.size() == 2);

    const auto& e1 = trace.entries[0];
    CHECK(e1.cohort_transmitters == 2);
    CHECK(e1.extra_collisions == 1);
    CHECK(e1.cum_extra == 1);
    CHECK(e1.min_cohort == 3);
    CHECK(e1.max_cohort == 3);
    CHECK(e1.cohort_sum == 6);
    CHECK_FALSE(e1.u1_transmitted);
    CHECK(e1.x1_after == 0);

    const auto& e2 = trace.entries[1];
    CHECK(e2.cohort_transmitters == 1);
    CHECK(e2.extra_collisions == 0);
    CHECK(e2.cum_extra == 1);
    CHECK(e2.min_cohort == 3);
    CHECK(e2.max_cohort == 4);
    CHECK(e2.cohort_sum == 7);
    CHECK(e2.u1_transmitted);
    CHECK(e2.x1_after == 1);

    const auto report = analysis::sandwich_check(trace);
    CHECK(report.checked == 2);
    CHECK(report.violations == 0);
    CHECK(report.min_lower_slack == 1);
    CHECK(report.min_upper_slack == 0);

    CHECK(analysis::x1_zero_at_collision_fraction(trace) == doctest::Approx(1.0));
    CHECK(analysis::spread_histogram(trace) == std::vector<std::uint64_t>{1, 1});
}

TEST_CASE("corrupted traces are rejected") {
    sim::RawCohortTrace raw;
    raw.n = 3;
    raw.m = 2;
    raw.initial = {0, 2, 2};
    raw.entries.push_back({1, {1, 2}, {0, 3, 3}});

    auto broken_sum = raw;
    broken_sum.entries[0].state_after = {0, 3, 4}; // counting identity fails
    CHECK_THROWS_AS(analysis::collision_trace(broken_sum), integrity_error);

    auto no_cohort = raw;
    no_cohort.entries[0].transmitters = {0}; // cohort-free entry is invalid
    CHECK_THROWS_AS(analysis::collision_trace(no_cohort), integrity_error);
}

TEST_CASE("recorded traces satisfy the counting identity and the sandwich") {
    const BackoffLaw law = BackoffLaw::exponential(2.0, 0.0);
    for (std::uint64_t stream = 0; stream < 25; ++stream) {
        const auto raw = sim::record_cohort_trace(3, law, 5, 20000, 9, stream);
        const auto trace = analysis::collision_trace(raw);
        const auto rep = analysis::sandwich_check(trace);
        CHECK(rep.checked == trace.entries.size());
        CHECK(rep.violations == 0);
        CHECK(rep.min_lower_slack >= 0);
        CHECK(rep.min_upper_slack >= 0);
        const double frac = analysis::x1_zero_at_collision_fraction(trace);
        CHECK(frac >= 0.0);
        CHECK(frac <= 1.0);
        const auto hist = analysis::spread_histogram(trace);
        CHECK(std::accumulate(hist.begin(), hist.end(), std::uint64_t{0}) ==
              trace.entries.size());
    }
}

TEST_CASE("birth-death floor selection and rates") {
    auto spec = analysis::BirthDeathSpec::make(2.0, 0.0, 2, 10);
    CHECK(spec.delta_star == 2);
    spec = analysis::BirthDeathSpec::make(2.0, 0.0, 3, 10);
    CHECK(spec.delta_star == 3);
    spec = analysis::BirthDeathSpec::make(2.0, 0.0, 5, 10);
    CHECK(spec.delta_star == 4);
    spec = analysis::BirthDeathSpec::make(4.0, 1.0, 2, 10);
    CHECK(spec.delta_star == 1);

    // Rates at pinned parameters.
    spec = analysis::BirthDeathSpec::make(2.0, 1.0, 3, 10);
    CHECK(spec.delta_star == 3);
    CHECK(spec.alpha(4) == doctest::Approx(2.0 * std::pow(2.0, -4.0)).epsilon(1e-15));
    CHECK(spec.alpha(0) == doctest::Approx(1.0)); // clamped
    const double expect_beta = std::pow(1.0 - std::pow(2.0, -11.0), 2.0) / 2.0;
    CHECK(spec.beta() == doctest::Approx(expect_beta).epsilon(1e-15));
    CHECK(spec.simulable());
    CHECK(spec.dominance_margin_ok());

    // A floor of zero puts the up-rate at one; the chain cannot be simulated.
    const auto bad = analysis::BirthDeathSpec::with_delta_star(2.0, 0.0, 3, 10, 0);
    CHECK_FALSE(bad.simulable());
    CHECK_FALSE(bad.dominance_margin_ok());
    const auto edge = analysis::BirthDeathSpec::with_delta_star(2.0, 0.0, 3, 10, 1);
    CHECK(edge.dominance_margin_ok()); // alpha(2) = 1/2 sits on the boundary
}

TEST_CASE("birth-death stationary law satisfies detailed balance") {
    const auto spec = analysis::BirthDeathSpec::make(2.0, 1.0, 3, 10);
    const auto dist = analysis::bd_stationary(spec, spec.delta_star + 50);
    REQUIRE(dist.pi.size() == 51);
    CHECK(dist.delta_star == spec.delta_star);

    double total = 0.0;
    for (const double v : dist.pi) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dist.truncation_tail_bound < 1e-100);
    CHECK(dist.at(spec.delta_star) == doctest::Approx(dist.pi[0]));
    CHECK(dist.at(spec.delta_star - 1) == doctest::Approx(0.0));

    for (int k = 0; k + 1 < static_cast<int>(dist.pi.size()); ++k) {
        const double lhs = dist.pi[static_cast<std::size_t>(k) + 1] * spec.beta();
        const double rhs =
            dist.pi[static_cast<std::size_t>(k)] * spec.alpha(spec.delta_star + k);
        if (rhs == 0.0) continue;
        CHECK(std::abs(lhs - rhs) / rhs < 1e-12);
    }

    CHECK_THROWS_AS(analysis::bd_stationary(spec, spec.delta_star - 1), param_error);
}

TEST_CASE("log-stationary curvature equals minus half log base") {
    for (const double b : {1.5, 2.0, 4.0}) {
        const auto spec = analysis::BirthDeathSpec::make(b, 0.5, 3, 8);
        const auto dist = analysis::bd_stationary(spec, spec.delta_star + 40);
        const auto fit = analysis::tail_quadratic_fit(dist.pi);
        // Wide bases push log pi near the underflow edge; allow a little
        // extra floating-point slack there.
        CHECK(std::abs(fit.c2 - (-std::log(b) / 2.0)) < 1e-8);
        CHECK(fit.c2_se < 1e-8);
        if (b == 2.0) CHECK(std::abs(fit.c2 - (-std::log(b) / 2.0)) < 1e-9);
    }
    const std::vector<double> too_short{0.5, 0.3, 0.2};
    CHECK_THROWS_AS(analysis::tail_quadratic_fit(too_short), param_error);
}

TEST_CASE("auxiliary chain occupancy converges to the analytic law") {
    const auto spec = analysis::BirthDeathSpec::make(2.0, 1.0, 3, 10);
    const auto result = analysis::simulate_aux_chain(spec, 1000000, 51, 0);
    CHECK(result.steps == 1000000);
    CHECK(result.delta_star == spec.delta_star);
    CHECK(result.block_histograms.size() == 64);
    CHECK(result.n2_gt1_fraction() < 1e-4);

    const auto occ = result.occupancy();
    const auto dist = analysis::bd_stationary(spec, spec.delta_star + 60);
    const std::size_t len = std::max(occ.size(), dist.pi.size());
    std::vector<double> a(occ.begin(), occ.end());
    std::vector<double> b(dist.pi.begin(), dist.pi.end());
    a.resize(len, 0.0);
    b.resize(len, 0.0);
    CHECK(analysis::tv_distance(a, b) < 0.05);

    // The unit-base moment of a probability law is exactly one.
    const auto unit = analysis::exp_moment(result, 1.0);
    CHECK(unit.estimate == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(unit.se == doctest::Approx(0.0).epsilon(1e-12));

    const auto moment = analysis::exp_moment(result, std::sqrt(2.0));
    double analytic = 0.0;
    for (std::size_t k = 0; k < dist.pi.size(); ++k) {
        analytic += dist.pi[k] *
                    std::pow(std::sqrt(2.0), dist.delta_star + static_cast<double>(k));
    }
    CHECK(moment.se > 0.0);
    CHECK(std::abs(moment.estimate - analytic) < 6.0 * moment.se);
    CHECK(moment.lo <= moment.estimate);
    CHECK(moment.hi >= moment.estimate);

    const auto bad = analysis::BirthDeathSpec::with_delta_star(2.0, 0.0, 3, 10, 0);
    CHECK_THROWS_AS(analysis::simulate_aux_chain(bad, 1000, 1, 0), param_error);
    CHECK_THROWS_AS(analysis::simulate_aux_chain(spec, 0, 1, 0), param_error);
    CHECK_THROWS_AS(analysis::simulate_aux_chain(spec, 10, 1, 0, 11), param_error);
}

TEST_CASE("ccdf across replicas on hand histograms") {
    const std::vector<std::vector<std::uint64_t>> hists{{1, 1}, {0, 2}};
    const auto ccdf = analysis::ccdf_across_replicas(hists);
    REQUIRE(ccdf.p.size() == 2);
    CHECK(ccdf.total_samples == 4);
    CHECK(ccdf.p[0] == doctest::Approx(0.75));
    CHECK(ccdf.p[1] == doctest::Approx(0.0));
    CHECK(ccdf.se[0] == doctest::Approx(0.25));
    CHECK(ccdf.se[1] == doctest::Approx(0.0));

    // Ragged replica lengths are padded with zero counts.
    const std::vector<std::vector<std::uint64_t>> ragged{{2}, {1, 1}};
    const auto r = analysis::ccdf_across_replicas(ragged);
    REQUIRE(r.p.size() == 2);
    CHECK(r.p[0] == doctest::Approx(0.25));
    CHECK(r.p[1] == doctest::Approx(0.0));

    const std::vector<std::vector<std::uint64_t>> with_empty{{1}, {}};
    CHECK_THROWS_AS(analysis::ccdf_across_replicas(with_empty), param_error);

    auto padded = ccdf;
    analysis::pad_ccdf(padded, 5);
    REQUIRE(padded.p.size() == 5);
    CHECK(padded.p[4] == doctest::Approx(0.0));
    CHECK(padded.se[4] == doctest::Approx(0.0));
}

TEST_CASE("dominance verdicts") {
    analysis::EmpiricalCcdf upper;
    upper.p = {1.0, 0.5, 0.25};
    upper.se = {0.0, 0.01, 0.01};
    upper.total_samples = 100;
    analysis::EmpiricalCcdf lower = upper;

    auto verdict = analysis::dominance_test(upper, lower);
    CHECK(verdict.dominates);
    CHECK(verdict.support == 3);
    CHECK(verdict.violations == 0);
    CHECK(verdict.worst_margin >= 0.0);

    lower.p = {1.0, 0.6, 0.25}; // 0.1 above with sigma ~ 0.014: a violation
    verdict = analysis::dominance_test(upper, lower);
    CHECK_FALSE(verdict.dominates);
    CHECK(verdict.violations == 1);
    CHECK(verdict.worst_margin < 0.0);

    lower.p = {1.0, 0.52, 0.25}; // within three combined sigmas
    verdict = analysis::dominance_test(upper, lower);
    CHECK(verdict.dominates);

    analysis::EmpiricalCcdf shorter;
    shorter.p = {1.0};
    shorter.se = {0.0};
    CHECK_THROWS_AS(analysis::dominance_test(upper, shorter), param_error);
}

TEST_CASE("total variation distance") {
    const std::vector<double> a{0.5, 0.5};
    const std::vector<double> b{1.0, 0.0};
    CHECK(analysis::tv_distance(a, b) == doctest::Approx(0.5));
    CHECK(analysis::tv_distance(a, a) == doctest::Approx(0.0));
    // Shorter vectors are zero-padded on the right.
    const std::vector<double> c{1.0};
    CHECK(analysis::tv_distance(a, c) == doctest::Approx(0.5));
}
