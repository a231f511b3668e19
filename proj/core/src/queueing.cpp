#include "ebsim/queueing.hpp"

#include "ebsim/errors.hpp"
#include "ebsim/rng.hpp"
#include "ebsim/stats.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

namespace ebsim::queueing {

namespace {

constexpr double kZ99 = 2.5758293035489004;

void validate_pmf_sum(double total) {
    if (std::fabs(total - 1.0) > 1e-9) {
        throw param_error("queueing: service probabilities must sum to one");
    }
}

// pi P = pi with the last balance equation swapped for normalization; the
// chain is small, so a sparse direct solve is always available.
std::vector<double> solve_stationary(const EmbeddedChain& chain, double& residual) {
    const std::size_t dim = chain.dim();
    std::vector<Eigen::Triplet<double>> trips;
    const auto last = static_cast<Eigen::Index>(dim - 1);
    for (std::size_t i = 0; i < dim; ++i) {
        const std::vector<double> row = chain.row(i);
        for (std::size_t j = 0; j < dim; ++j) {
            if (row[j] != 0.0 && j + 1 != dim) {
                trips.emplace_back(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i),
                                   row[j]);
            }
        }
    }
    for (std::size_t i = 0; i + 1 < dim; ++i) {
        trips.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), -1.0);
    }
    for (std::size_t i = 0; i < dim; ++i) {
        trips.emplace_back(last, static_cast<Eigen::Index>(i), 1.0);
    }
    Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    a.setFromTriplets(trips.begin(), trips.end());
    a.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) {
        throw diagnostic_error("queueing: stationary system is singular");
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    rhs[last] = 1.0;
    const Eigen::VectorXd sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success) {
        throw diagnostic_error("queueing: stationary solve failed");
    }
    std::vector<double> pi(sol.data(), sol.data() + dim);
    double total = 0.0;
    for (double& p : pi) {
        if (p < 0.0) p = 0.0;
        total += p;
    }
    if (total <= 0.0) throw diagnostic_error("queueing: stationary solve degenerate");
    for (double& p : pi) p /= total;
    const std::vector<double> next = chain.multiply_left(pi);
    residual = 0.0;
    for (std::size_t i = 0; i < dim; ++i) residual += std::fabs(next[i] - pi[i]);
    return pi;
}

double top_band_mass(std::span<const double> pi) {
    const std::size_t band = std::max<std::size_t>(1, pi.size() / 16);
    double mass = 0.0;
    for (std::size_t i = pi.size() - band; i < pi.size(); ++i) mass += pi[i];
    return mass;
}

} // namespace

ServiceDist ServiceDist::deterministic(std::uint32_t slots) {
    if (slots < 1) throw param_error("queueing: service must take at least one slot");
    ServiceDist d;
    d.pmf_.assign(static_cast<std::size_t>(slots) + 1, 0.0);
    d.pmf_[slots] = 1.0;
    return d;
}

ServiceDist ServiceDist::geometric(double mean_slots, double tail_tol) {
    if (!std::isfinite(mean_slots) || mean_slots < 1.0) {
        throw param_error("queueing: geometric mean must be at least one slot");
    }
    if (!(tail_tol > 0.0) || tail_tol >= 1.0) throw param_error("queueing: bad tail tolerance");
    const double p = 1.0 / mean_slots;
    ServiceDist d;
    d.pmf_.push_back(0.0);
    double remaining = 1.0;
    double mass = p;  // Pr(S = s) = p (1-p)^(s-1)
    while (remaining > tail_tol) {
        d.pmf_.push_back(mass);
        remaining -= mass;
        mass *= 1.0 - p;
        if (mass == 0.0) break;
        if (d.pmf_.size() > 10'000'000) {
            throw resource_error("queueing: geometric truncation did not converge");
        }
    }
    d.tail_mass_ = std::max(remaining, 0.0);
    return d;
}

ServiceDist ServiceDist::from_pairs(const std::vector<std::pair<std::uint32_t, double>>& pairs) {
    if (pairs.empty()) throw param_error("queueing: empty service law");
    ServiceDist d;
    double total = 0.0;
    for (const auto& [slots, prob] : pairs) {
        if (slots < 1) throw param_error("queueing: service must take at least one slot");
        if (!(prob >= 0.0) || !std::isfinite(prob)) {
            throw param_error("queueing: probabilities must be non-negative");
        }
        if (d.pmf_.size() <= slots) d.pmf_.resize(static_cast<std::size_t>(slots) + 1, 0.0);
        d.pmf_[slots] += prob;
        total += prob;
    }
    validate_pmf_sum(total);
    for (double& p : d.pmf_) p /= total;
    return d;
}

ServiceDist ServiceDist::from_text(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw param_error("queueing: service law needs kind:args");
    const std::string kind = text.substr(0, colon);
    const std::string args = text.substr(colon + 1);
    if (args.empty()) throw param_error("queueing: service law needs kind:args");
    char* end = nullptr;
    if (kind == "det") {
        const unsigned long slots = std::strtoul(args.c_str(), &end, 10);
        if (end == nullptr || *end != '\0') throw param_error("queueing: bad det service spec");
        return deterministic(static_cast<std::uint32_t>(slots));
    }
    if (kind == "geo") {
        const double mean_slots = std::strtod(args.c_str(), &end);
        if (end == nullptr || *end != '\0') throw param_error("queueing: bad geo service spec");
        return geometric(mean_slots);
    }
    if (kind == "pmf") {
        std::vector<std::pair<std::uint32_t, double>> pairs;
        std::size_t pos = 0;
        while (pos < args.size()) {
            auto comma = args.find(',', pos);
            if (comma == std::string::npos) comma = args.size();
            const std::string item = args.substr(pos, comma - pos);
            const auto eq = item.find('=');
            if (eq == std::string::npos) throw param_error("queueing: bad pmf service spec");
            const unsigned long slots = std::strtoul(item.substr(0, eq).c_str(), &end, 10);
            if (end == nullptr || *end != '\0') throw param_error("queueing: bad pmf service spec");
            const double prob = std::strtod(item.substr(eq + 1).c_str(), &end);
            if (end == nullptr || *end != '\0') throw param_error("queueing: bad pmf service spec");
            pairs.emplace_back(static_cast<std::uint32_t>(slots), prob);
            pos = comma + 1;
        }
        return from_pairs(pairs);
    }
    throw param_error("queueing: unknown service kind '" + kind + "'");
}

double ServiceDist::mean() const {
    double acc = 0.0;
    for (std::size_t s = 0; s < pmf_.size(); ++s) acc += static_cast<double>(s) * pmf_[s];
    return acc;
}

double ServiceDist::second_moment() const {
    double acc = 0.0;
    for (std::size_t s = 0; s < pmf_.size(); ++s) {
        acc += static_cast<double>(s) * static_cast<double>(s) * pmf_[s];
    }
    return acc;
}

std::vector<double> compute_zeta(const ServiceDist& service, double lambda, double tail_tol) {
    if (!std::isfinite(lambda) || lambda < 0.0) {
        throw param_error("queueing: arrival rate must be finite and non-negative");
    }
    if (!(tail_tol > 0.0)) throw param_error("queueing: bad tail tolerance");
    const auto pmf = service.pmf();
    std::vector<double> zeta(1, 0.0);
    bool any = false;
    for (std::size_t s = 1; s < pmf.size(); ++s) {
        const double ps = pmf[s];
        if (ps <= 0.0) continue;
        any = true;
        const double mu = lambda * static_cast<double>(s);
        if (mu > 700.0) {
            throw resource_error("queueing: arrival count expansion too wide");
        }
        double term = std::exp(-mu);
        double cdf = term;
        zeta[0] += ps * term;
        std::size_t j = 0;
        while (1.0 - cdf > tail_tol) {
            ++j;
            term *= mu / static_cast<double>(j);
            cdf += term;
            if (zeta.size() <= j) zeta.resize(j + 1, 0.0);
            zeta[j] += ps * term;
            if (j > 1'000'000) {
                throw resource_error("queueing: arrival count expansion too wide");
            }
        }
    }
    if (!any) throw param_error("queueing: service law has no mass");
    return zeta;
}

EmbeddedChain::EmbeddedChain(ChainKind kind, std::vector<double> zeta, std::size_t r_max,
                             TruncationPolicy policy)
    : kind_(kind), policy_(policy), zeta_(std::move(zeta)), r_max_(r_max) {
    if (r_max_ < 2) throw param_error("queueing: truncation must keep at least states 0..2");
    if (zeta_.empty()) throw param_error("queueing: empty arrival law");
    double total = 0.0;
    for (const double z : zeta_) {
        if (!(z >= 0.0) || !std::isfinite(z)) {
            throw param_error("queueing: arrival probabilities must be non-negative");
        }
        total += z;
    }
    if (total > 1.0 + 1e-9) throw param_error("queueing: arrival probabilities exceed one");
}

std::vector<double> EmbeddedChain::row(std::size_t i) const {
    if (i >= dim()) throw param_error("queueing: row out of range");
    std::vector<double> out(dim(), 0.0);
    const std::size_t base = i >= 2 ? i - 1 : 0;  // landing state for j = 0 arrivals
    auto deposit = [&](std::size_t offset, double mass) {
        const std::size_t j = base + offset;
        if (j < dim()) {
            out[j] += mass;
        } else if (policy_ == TruncationPolicy::Reflecting) {
            out[dim() - 1] += mass;
        }
    };
    if (kind_ == ChainKind::Modified && i == 0) {
        deposit(0, zeta_[0] + (zeta_.size() > 1 ? zeta_[1] : 0.0));
        for (std::size_t j = 2; j < zeta_.size(); ++j) deposit(j - 1, zeta_[j]);
    } else {
        for (std::size_t j = 0; j < zeta_.size(); ++j) deposit(j, zeta_[j]);
    }
    return out;
}

double EmbeddedChain::entry(std::size_t i, std::size_t j) const {
    const std::vector<double> r = row(i);
    if (j >= r.size()) throw param_error("queueing: column out of range");
    return r[j];
}

double EmbeddedChain::row_sum(std::size_t i) const {
    const std::vector<double> r = row(i);
    return std::accumulate(r.begin(), r.end(), 0.0);
}

std::vector<double> EmbeddedChain::multiply_left(std::span<const double> v) const {
    if (v.size() != dim()) throw param_error("queueing: vector length mismatch");
    std::vector<double> out(dim(), 0.0);
    for (std::size_t i = 0; i < dim(); ++i) {
        if (v[i] == 0.0) continue;
        const std::vector<double> r = row(i);
        for (std::size_t j = 0; j < dim(); ++j) out[j] += v[i] * r[j];
    }
    return out;
}

EmbeddedChain build_chain(ChainKind kind, std::vector<double> zeta, std::size_t r_max,
                          TruncationPolicy policy) {
    return EmbeddedChain(kind, std::move(zeta), r_max, policy);
}

double StationaryResult::mean() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) acc += static_cast<double>(i) * pi[i];
    return acc;
}

StationaryResult stationary_or_diverge(ChainKind kind, const std::vector<double>& zeta,
                                       std::size_t r_max) {
    StationaryResult out;
    out.r_max_used = r_max;
    const EmbeddedChain base(kind, zeta, r_max, TruncationPolicy::Reflecting);
    out.pi = solve_stationary(base, out.residual);
    out.boundary_mass = top_band_mass(out.pi);

    const EmbeddedChain doubled(kind, zeta, 2 * r_max, TruncationPolicy::Reflecting);
    double residual2 = 0.0;
    const std::vector<double> pi2 = solve_stationary(doubled, residual2);
    out.boundary_mass_doubled = top_band_mass(pi2);

    if (out.boundary_mass_doubled < 1e-6) {
        out.stable = true;
    } else if (out.boundary_mass_doubled > 1e-3) {
        out.stable = false;
    } else {
        throw diagnostic_error(
            "queueing: truncation diagnostic inconclusive; raise the state cap");
    }
    return out;
}

double pk_mean_system(const ServiceDist& service, double lambda) {
    if (!std::isfinite(lambda) || lambda <= 0.0) {
        throw param_error("queueing: arrival rate must be positive");
    }
    const double rho = lambda * service.mean();
    if (rho >= 1.0) throw param_error("queueing: utilization must be below one");
    return rho + lambda * lambda * service.second_moment() / (2.0 * (1.0 - rho));
}

Lambda0Estimate estimate_lambda0(int n, const BackoffLaw& law, std::uint64_t horizon,
                                 std::uint64_t replicas, std::uint64_t seed,
                                 std::uint64_t stream_id) {
    sim::SimConfig cfg;
    cfg.n = n;
    cfg.law = law;
    cfg.horizon = horizon;
    cfg.seed = seed;
    cfg.stream_id = stream_id;
    cfg.mode = sim::SimMode::Saturated;
    cfg.histogram_buckets = 0;
    cfg.return_times_cap = 0;
    const sim::SaturationStats stats_out = sim::run_saturated_replicas(cfg, replicas);

    std::vector<double> rates;
    rates.reserve(stats_out.replicas.size());
    for (const auto& rep : stats_out.replicas) {
        rates.push_back(rep.tail_slots == 0 ? 0.0
                                            : static_cast<double>(rep.tail_successes) /
                                                  static_cast<double>(rep.tail_slots));
    }
    Lambda0Estimate est;
    est.replicas = replicas;
    est.lambda0 = stats::mean(rates);
    est.se = stats::stderr_of_mean(rates);
    est.lo = est.lambda0 - kZ99 * est.se;
    est.hi = est.lambda0 + kZ99 * est.se;
    est.ergodic_params = law.kind() == LawKind::Exponential && law.offset() > 1.0;
    return est;
}

std::string verdict_name(StabilityVerdict v) {
    switch (v) {
        case StabilityVerdict::Stable: return "stable";
        case StabilityVerdict::Unstable: return "unstable";
        case StabilityVerdict::Inconclusive: return "inconclusive";
    }
    throw param_error("queueing: unknown verdict");
}

LambdaVerdict stability_experiment(int n, const BackoffLaw& law, double lambda,
                                   std::uint64_t horizon, std::uint64_t replicas,
                                   std::uint64_t seed, std::uint64_t stream_id) {
    if (horizon < 16) throw param_error("queueing: horizon too short for a drift estimate");
    sim::SimConfig cfg;
    cfg.n = n;
    cfg.law = law;
    cfg.horizon = horizon;
    cfg.seed = seed;
    cfg.stream_id = stream_id;
    cfg.mode = sim::SimMode::Queued;
    cfg.lambda = lambda;
    cfg.histogram_buckets = 0;
    cfg.return_times_cap = 0;
    const sim::QueueStats short_run = sim::run_queued_replicas(cfg, replicas);
    cfg.horizon = 2 * horizon;
    const sim::QueueStats long_run = sim::run_queued_replicas(cfg, replicas);

    LambdaVerdict out;
    out.lambda = lambda;
    out.tail_mean_h = short_run.mean_queue_tail();
    out.tail_mean_2h = long_run.mean_queue_tail();

    // Per-replica slopes over the sampled last half of the doubled run. The
    // replicas are independent, so the spread of their slopes is an honest
    // standard error; within-path residual resampling is not (queue paths
    // are integrated noise, so residuals wildly understate slope spread).
    std::vector<double> slopes;
    slopes.reserve(long_run.replicas.size());
    for (const auto& rep : long_run.replicas) {
        std::vector<double> xs;
        std::vector<double> ys;
        for (const auto& [slot, size] : rep.samples) {
            if (slot > cfg.horizon / 2) {
                xs.push_back(static_cast<double>(slot));
                ys.push_back(static_cast<double>(size));
            }
        }
        if (xs.size() < 8) continue;
        slopes.push_back(stats::ols_line(xs, ys).slope);
    }
    if (slopes.empty()) throw diagnostic_error("queueing: no usable drift samples");
    const std::size_t used = slopes.size();
    double drift_sum = 0.0;
    for (double s : slopes) drift_sum += s;
    out.drift = drift_sum / static_cast<double>(used);
    double sq = 0.0;
    for (double s : slopes) sq += (s - out.drift) * (s - out.drift);
    out.drift_se = used > 1 ? std::sqrt(sq / static_cast<double>(used - 1) /
                                        static_cast<double>(used))
                            : 0.0;
    out.drift_lo = out.drift - 3.0 * out.drift_se;
    out.drift_hi = out.drift + 3.0 * out.drift_se;

    const bool tail_bounded = out.tail_mean_2h <= 1.5 * out.tail_mean_h + 5.0;
    if (out.drift_lo > 0.0) {
        out.verdict = StabilityVerdict::Unstable;
    } else if (tail_bounded) {
        out.verdict = StabilityVerdict::Stable;
    } else {
        out.verdict = StabilityVerdict::Inconclusive;
    }
    return out;
}

} // namespace ebsim::queueing
