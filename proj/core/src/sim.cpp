#include "ebsim/sim.hpp"

#include "ebsim/errors.hpp"
#include "ebsim/rng.hpp"
#include "ebsim/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace ebsim::sim {

namespace {

// Memoized transmission probabilities by backoff index; indices only grow a
// few hundred deep in practice because a user whose probability underflows
// stops transmitting (and stops advancing).
class BetaTable {
public:
    explicit BetaTable(const BackoffLaw& law) : law_(&law) {}

    double at(std::uint32_t idx) {
        while (table_.size() <= idx) {
            table_.push_back(tx_probability(*law_, static_cast<std::uint32_t>(table_.size())));
        }
        return table_[idx];
    }

private:
    const BackoffLaw* law_;
    std::vector<double> table_;
};

std::vector<std::uint32_t> starting_state(const SimConfig& cfg) {
    if (cfg.n < 2) throw param_error("sim: need at least 2 users");
    if (cfg.horizon == 0) throw param_error("sim: horizon must be positive");
    if (!cfg.initial_state) return std::vector<std::uint32_t>(static_cast<std::size_t>(cfg.n), 0);
    if (cfg.initial_state->size() != static_cast<std::size_t>(cfg.n)) {
        throw param_error("sim: initial state size does not match user count");
    }
    return *cfg.initial_state;
}

int argmin_user(const std::vector<std::uint32_t>& x) {
    int best = 0;
    for (int u = 1; u < static_cast<int>(x.size()); ++u) {
        if (x[static_cast<std::size_t>(u)] < x[static_cast<std::size_t>(best)]) best = u;
    }
    return best;
}

SaturationStats run_one_saturated(const SimConfig& cfg, std::uint64_t replica_id) {
    std::vector<std::uint32_t> x = starting_state(cfg);
    const auto n = static_cast<std::size_t>(cfg.n);
    BetaTable beta(cfg.law);
    RngStream rng(cfg.seed, replica_id);

    SaturationStats st;
    st.n = cfg.n;
    st.per_user_successes.assign(n, 0);
    SaturationReplica rep;
    rep.replica_id = replica_id;
    rep.tail_per_user_successes.assign(n, 0);
    const std::uint32_t buckets = cfg.histogram_buckets;
    if (buckets > 0) {
        st.marginal_histograms.assign(n, std::vector<std::uint64_t>(buckets, 0));
    }

    std::size_t num_zero = static_cast<std::size_t>(std::ranges::count(x, 0u));
    bool seen_zero = num_zero == n;
    std::uint64_t last_zero = 0;
    const std::uint64_t onset = cfg.horizon / 2;
    if (onset == 0) rep.winner = argmin_user(x);

    std::vector<int> tx;
    tx.reserve(n);
    for (std::uint64_t slot = 1; slot <= cfg.horizon; ++slot) {
        tx.clear();
        for (std::size_t u = 0; u < n; ++u) {
            if (rng.uniform01() < beta.at(x[u])) tx.push_back(static_cast<int>(u));
        }
        int kind;  // 0 idle, 1 success, 2 collision
        int success_user = -1;
        if (tx.empty()) {
            ++st.idles;
            kind = 0;
        } else if (tx.size() == 1) {
            success_user = tx[0];
            auto& xi = x[static_cast<std::size_t>(success_user)];
            if (xi != 0) ++num_zero;
            xi = 0;
            ++st.successes;
            ++st.per_user_successes[static_cast<std::size_t>(success_user)];
            kind = 1;
        } else {
            for (int u : tx) {
                auto& xi = x[static_cast<std::size_t>(u)];
                if (xi == 0) --num_zero;
                ++xi;
            }
            ++st.collisions;
            kind = 2;
        }

        if (num_zero == n) {
            if (seen_zero && rep.zero_return_times.size() < cfg.return_times_cap) {
                rep.zero_return_times.push_back(slot - last_zero);
            }
            seen_zero = true;
            last_zero = slot;
        }

        if (slot == onset) rep.winner = argmin_user(x);
        if (slot > onset) {
            ++rep.tail_slots;
            if (kind == 0) {
                ++rep.tail_idles;
            } else if (kind == 1) {
                ++rep.tail_successes;
                ++rep.tail_per_user_successes[static_cast<std::size_t>(success_user)];
            } else {
                ++rep.tail_collisions;
            }
            if (x[static_cast<std::size_t>(rep.winner)] == 0) ++rep.winner_index_zero_slots;
            if (num_zero > 0) ++rep.min_index_zero_slots;
            if (buckets > 0) {
                for (std::size_t u = 0; u < n; ++u) {
                    ++st.marginal_histograms[u][std::min(x[u], buckets - 1)];
                }
            }
        }
    }

    st.slots = cfg.horizon;
    st.tail_slots = rep.tail_slots;
    st.tail_successes = rep.tail_successes;
    st.tail_collisions = rep.tail_collisions;
    st.tail_idles = rep.tail_idles;
    rep.final_state = std::move(x);
    st.replicas.push_back(std::move(rep));
    return st;
}

QueueStats run_one_queued(const SimConfig& cfg, std::uint64_t replica_id) {
    if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) {
        throw param_error("sim: arrival rate must be finite and non-negative");
    }
    std::vector<std::uint32_t> x = starting_state(cfg);
    const auto n = static_cast<std::size_t>(cfg.n);
    BetaTable beta(cfg.law);
    RngStream rng(cfg.seed, replica_id);
    const double per_user_rate = cfg.lambda / static_cast<double>(cfg.n);
    const std::uint64_t stride =
        cfg.sample_stride != 0 ? cfg.sample_stride : std::max<std::uint64_t>(1, cfg.horizon / 2048);

    QueueStats st;
    st.n = cfg.n;
    QueueReplica rep;
    rep.replica_id = replica_id;

    std::vector<std::uint64_t> q(n, 0);
    std::uint64_t total_q = 0;
    const std::uint64_t tail_from = cfg.horizon - cfg.horizon / 4;
    std::vector<int> tx;
    tx.reserve(n);
    for (std::uint64_t slot = 1; slot <= cfg.horizon; ++slot) {
        for (std::size_t u = 0; u < n; ++u) {
            const auto a = rng.poisson(per_user_rate);
            q[u] += a;
            rep.arrivals += a;
            total_q += a;
        }
        tx.clear();
        for (std::size_t u = 0; u < n; ++u) {
            // Idle users keep their index frozen and draw nothing.
            if (q[u] > 0 && rng.uniform01() < beta.at(x[u])) tx.push_back(static_cast<int>(u));
        }
        if (tx.size() == 1) {
            const auto u = static_cast<std::size_t>(tx[0]);
            x[u] = 0;  // reset on success, whether or not the queue drains
            --q[u];
            --total_q;
            ++rep.departures;
        } else if (tx.size() > 1) {
            for (int u : tx) ++x[static_cast<std::size_t>(u)];
        }
        if (slot > tail_from) {
            rep.tail_sum += static_cast<double>(total_q);
            ++rep.tail_count;
        }
        if (slot % stride == 0) rep.samples.emplace_back(slot, total_q);
    }
    rep.final_queue = total_q;

    // Slope of the sampled queue trajectory over the final half of the run.
    const std::uint64_t half = cfg.horizon / 2;
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& [slot, size] : rep.samples) {
        if (slot > half) {
            xs.push_back(static_cast<double>(slot));
            ys.push_back(static_cast<double>(size));
        }
    }
    rep.drift_estimate = xs.size() >= 2 ? stats::ols_line(xs, ys).slope : 0.0;

    st.slots = cfg.horizon;
    st.arrivals = rep.arrivals;
    st.departures = rep.departures;
    st.replicas.push_back(std::move(rep));
    return st;
}

template <typename Stats, typename RunOne>
Stats run_replicas(const SimConfig& cfg, std::uint64_t replicas, int threads, RunOne&& run_one) {
    if (replicas == 0) throw param_error("sim: replica count must be positive");
    std::vector<Stats> results(replicas);
    if (threads <= 1 || replicas == 1) {
        for (std::uint64_t r = 0; r < replicas; ++r) {
            results[r] = run_one(cfg, cfg.stream_id + r);
        }
    } else {
        std::atomic<std::uint64_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::uint64_t r = next.fetch_add(1);
                if (r >= replicas) return;
                results[r] = run_one(cfg, cfg.stream_id + r);
            }
        };
        std::vector<std::thread> pool;
        const auto count = std::min<std::uint64_t>(static_cast<std::uint64_t>(threads), replicas);
        pool.reserve(count);
        for (std::uint64_t t = 0; t < count; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    Stats total = std::move(results[0]);
    for (std::uint64_t r = 1; r < replicas; ++r) total = merge_stats(total, results[r]);
    return total;
}

} // namespace

double SaturationReplica::x1_zero_fraction() const {
    return tail_slots == 0 ? 0.0
                           : static_cast<double>(winner_index_zero_slots) /
                                 static_cast<double>(tail_slots);
}

double SaturationReplica::min_zero_fraction() const {
    return tail_slots == 0
               ? 0.0
               : static_cast<double>(min_index_zero_slots) / static_cast<double>(tail_slots);
}

double SaturationReplica::tail_max_success_share() const {
    if (tail_successes == 0) return 0.0;
    const std::uint64_t top = *std::ranges::max_element(tail_per_user_successes);
    return static_cast<double>(top) / static_cast<double>(tail_successes);
}

double SaturationStats::throughput() const {
    return slots == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(slots);
}

double SaturationStats::tail_throughput() const {
    return tail_slots == 0 ? 0.0
                           : static_cast<double>(tail_successes) / static_cast<double>(tail_slots);
}

double SaturationStats::collision_free_ratio() const {
    return slots == 0 ? 0.0
                      : static_cast<double>(slots - collisions) / static_cast<double>(slots);
}

double SaturationStats::tail_collision_free_ratio() const {
    return tail_slots == 0 ? 0.0
                           : static_cast<double>(tail_slots - tail_collisions) /
                                 static_cast<double>(tail_slots);
}

double QueueReplica::mean_queue_tail() const {
    return tail_count == 0 ? 0.0 : tail_sum / static_cast<double>(tail_count);
}

double QueueStats::mean_queue_tail() const {
    double sum = 0.0;
    std::uint64_t count = 0;
    for (const auto& rep : replicas) {
        sum += rep.tail_sum;
        count += rep.tail_count;
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double QueueStats::drift_estimate() const {
    if (replicas.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& rep : replicas) sum += rep.drift_estimate;
    return sum / static_cast<double>(replicas.size());
}

SaturationStats run_saturated(const SimConfig& cfg) {
    if (cfg.mode != SimMode::Saturated) throw param_error("sim: config is not saturated mode");
    return run_one_saturated(cfg, cfg.stream_id);
}

SaturationStats run_saturated_replicas(const SimConfig& cfg, std::uint64_t replicas, int threads) {
    if (cfg.mode != SimMode::Saturated) throw param_error("sim: config is not saturated mode");
    return run_replicas<SaturationStats>(cfg, replicas, threads, run_one_saturated);
}

QueueStats run_queued(const SimConfig& cfg) {
    if (cfg.mode != SimMode::Queued) throw param_error("sim: config is not queued mode");
    return run_one_queued(cfg, cfg.stream_id);
}

QueueStats run_queued_replicas(const SimConfig& cfg, std::uint64_t replicas, int threads) {
    if (cfg.mode != SimMode::Queued) throw param_error("sim: config is not queued mode");
    return run_replicas<QueueStats>(cfg, replicas, threads, run_one_queued);
}

SaturationStats merge_stats(const SaturationStats& a, const SaturationStats& b) {
    if (a.n == 0) return b;
    if (b.n == 0) return a;
    if (a.n != b.n) throw param_error("sim: merge of stats with different user counts");
    SaturationStats out = a;
    out.slots += b.slots;
    out.successes += b.successes;
    out.collisions += b.collisions;
    out.idles += b.idles;
    out.tail_slots += b.tail_slots;
    out.tail_successes += b.tail_successes;
    out.tail_collisions += b.tail_collisions;
    out.tail_idles += b.tail_idles;
    for (std::size_t u = 0; u < out.per_user_successes.size(); ++u) {
        out.per_user_successes[u] += b.per_user_successes[u];
    }
    if (out.marginal_histograms.empty()) {
        out.marginal_histograms = b.marginal_histograms;
    } else if (!b.marginal_histograms.empty()) {
        if (out.marginal_histograms.size() != b.marginal_histograms.size() ||
            out.marginal_histograms[0].size() != b.marginal_histograms[0].size()) {
            throw param_error("sim: merge of histograms with different shapes");
        }
        for (std::size_t u = 0; u < out.marginal_histograms.size(); ++u) {
            for (std::size_t k = 0; k < out.marginal_histograms[u].size(); ++k) {
                out.marginal_histograms[u][k] += b.marginal_histograms[u][k];
            }
        }
    }
    out.replicas.insert(out.replicas.end(), b.replicas.begin(), b.replicas.end());
    std::ranges::sort(out.replicas, {}, &SaturationReplica::replica_id);
    return out;
}

QueueStats merge_stats(const QueueStats& a, const QueueStats& b) {
    if (a.n == 0) return b;
    if (b.n == 0) return a;
    if (a.n != b.n) throw param_error("sim: merge of stats with different user counts");
    QueueStats out = a;
    out.slots += b.slots;
    out.arrivals += b.arrivals;
    out.departures += b.departures;
    out.replicas.insert(out.replicas.end(), b.replicas.begin(), b.replicas.end());
    std::ranges::sort(out.replicas, {}, &QueueReplica::replica_id);
    return out;
}

double FirstSuccessSummary::censor_fraction() const {
    return replicas == 0 ? 0.0 : static_cast<double>(censored) / static_cast<double>(replicas);
}

FirstSuccessSummary run_first_success_experiment(const FirstSuccessConfig& cfg) {
    if (cfg.n < 2) throw param_error("sim: need at least 2 users");
    if (cfg.horizon == 0 || cfg.replicas == 0) {
        throw param_error("sim: horizon and replica count must be positive");
    }
    const auto n = static_cast<std::size_t>(cfg.n);
    FirstSuccessSummary out;
    out.horizon = cfg.horizon;
    out.replicas = cfg.replicas;
    out.times.reserve(cfg.replicas);

    std::vector<int> tx;
    tx.reserve(n);
    for (std::uint64_t r = 0; r < cfg.replicas; ++r) {
        RngStream rng(cfg.seed, cfg.stream_id + r);
        BetaTable beta(cfg.law);
        std::vector<std::uint32_t> x(n, cfg.m);
        x[0] = 0;
        std::uint64_t observed = cfg.horizon;
        bool hit = false;
        for (std::uint64_t slot = 1; slot <= cfg.horizon; ++slot) {
            tx.clear();
            for (std::size_t u = 0; u < n; ++u) {
                if (rng.uniform01() < beta.at(x[u])) tx.push_back(static_cast<int>(u));
            }
            if (tx.size() == 1 && tx[0] >= 1) {
                observed = slot;
                hit = true;
                break;
            }
            if (tx.size() == 1) {
                x[static_cast<std::size_t>(tx[0])] = 0;
            } else {
                for (int u : tx) ++x[static_cast<std::size_t>(u)];
            }
        }
        if (!hit) ++out.censored;
        out.times.push_back(static_cast<double>(observed));
    }
    out.censored_mean = stats::mean(out.times);
    out.se = stats::stderr_of_mean(out.times);
    return out;
}

ReturnTimeSummary run_return_time_experiment(const ReturnTimeConfig& cfg) {
    if (cfg.n < 2) throw param_error("sim: need at least 2 users");
    if (cfg.rank < 1 || cfg.rank > cfg.n) throw param_error("sim: rank out of range");
    if (cfg.horizon == 0 || cfg.replicas == 0) {
        throw param_error("sim: horizon and replica count must be positive");
    }
    const auto n = static_cast<std::size_t>(cfg.n);
    // The rank-th smallest index is zero exactly when at least rank users sit
    // at zero, so a zero counter tracks the order statistic.
    const auto rank = static_cast<std::size_t>(cfg.rank);
    ReturnTimeSummary out;
    out.replicas = cfg.replicas;

    std::vector<int> tx;
    tx.reserve(n);
    for (std::uint64_t r = 0; r < cfg.replicas; ++r) {
        RngStream rng(cfg.seed, cfg.stream_id + r);
        BetaTable beta(cfg.law);
        std::vector<std::uint32_t> x(n, 0);
        std::size_t num_zero = n;
        auto step = [&] {
            tx.clear();
            for (std::size_t u = 0; u < n; ++u) {
                if (rng.uniform01() < beta.at(x[u])) tx.push_back(static_cast<int>(u));
            }
            if (tx.size() == 1) {
                auto& xi = x[static_cast<std::size_t>(tx[0])];
                if (xi != 0) ++num_zero;
                xi = 0;
            } else if (tx.size() > 1) {
                for (int u : tx) {
                    auto& xi = x[static_cast<std::size_t>(u)];
                    if (xi == 0) --num_zero;
                    ++xi;
                }
            }
        };
        bool left = false;
        for (std::uint64_t slot = 1; slot <= cfg.horizon; ++slot) {
            step();
            if (num_zero < rank) {
                left = true;
                break;
            }
        }
        if (!left) {
            ++out.never_left;
            continue;
        }
        std::uint64_t t = 0;
        bool returned = false;
        while (t < cfg.horizon) {
            step();
            ++t;
            if (num_zero >= rank) {
                returned = true;
                break;
            }
        }
        if (!returned) ++out.censored;
        out.times.push_back(static_cast<double>(t));
    }
    if (!out.times.empty()) {
        out.censored_mean = stats::mean(out.times);
        out.se = stats::stderr_of_mean(out.times);
    }
    return out;
}

RawCohortTrace record_cohort_trace(int n, const BackoffLaw& law, std::uint32_t m,
                                   std::uint64_t horizon, std::uint64_t seed,
                                   std::uint64_t stream_id) {
    if (n < 2) throw param_error("sim: need at least 2 users");
    if (horizon == 0) throw param_error("sim: horizon must be positive");
    const auto un = static_cast<std::size_t>(n);
    RawCohortTrace trace;
    trace.n = n;
    trace.m = m;
    trace.initial.assign(un, m);
    trace.initial[0] = 0;

    RngStream rng(seed, stream_id);
    BetaTable beta(law);
    std::vector<std::uint32_t> x = trace.initial;
    std::vector<int> tx;
    tx.reserve(un);
    for (std::uint64_t slot = 1; slot <= horizon; ++slot) {
        tx.clear();
        for (std::size_t u = 0; u < un; ++u) {
            if (rng.uniform01() < beta.at(x[u])) tx.push_back(static_cast<int>(u));
        }
        trace.slots_run = slot;
        if (tx.size() == 1 && tx[0] >= 1) {
            trace.ended_by_cohort_success = true;
            break;
        }
        if (tx.size() == 1) {
            x[static_cast<std::size_t>(tx[0])] = 0;
        } else {
            for (int u : tx) ++x[static_cast<std::size_t>(u)];
        }
        const bool cohort_tx = std::ranges::any_of(tx, [](int u) { return u >= 1; });
        if (cohort_tx) {
            trace.entries.push_back(CohortTraceEntry{slot, tx, x});
        }
    }
    return trace;
}

} // namespace ebsim::sim
