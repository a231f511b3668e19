#include "record_writer.hpp"

#include "ebsim/analysis.hpp"
#include "ebsim/errors.hpp"
#include "ebsim/model.hpp"
#include "ebsim/oracle.hpp"
#include "ebsim/queueing.hpp"
#include "ebsim/sim.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

namespace {

using namespace ebsim;
using tools::Record;
using tools::RecordWriter;

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct GlobalOpts {
    std::uint64_t seed = 1;
    std::uint64_t replicas = 1;
    std::uint64_t stream = 0;
    int threads = 1;
    std::string out = "-";
    std::string format = "csv";
};

// The echoed configuration deliberately skips --out and --threads: neither
// changes the computed records, and skipping them keeps reruns into different
// files byte-comparable.
ConfigEcho base_config(const GlobalOpts& g) {
    return {{"seed", tools::fmt_uint(g.seed)},
            {"replicas", tools::fmt_uint(g.replicas)},
            {"stream", tools::fmt_uint(g.stream)},
            {"format", g.format}};
}

struct LawOpts {
    std::string law = "exp";
    double b = 2.0;
    double i0 = 0.0;
    double alpha = 2.0;

    void add_options(CLI::App* cmd) {
        cmd->add_option("--law", law, "Backoff law kind: exp or poly")->capture_default_str();
        cmd->add_option("--b", b, "Exponential base (> 1)")->capture_default_str();
        cmd->add_option("--i0", i0, "Exponential index offset (>= 0)")->capture_default_str();
        cmd->add_option("--alpha", alpha, "Polynomial exponent (> 0), used with --law poly")
            ->capture_default_str();
    }

    BackoffLaw build() const {
        if (law == "exp") return BackoffLaw::exponential(b, i0);
        if (law == "poly") return BackoffLaw::polynomial(alpha);
        throw param_error("cli: --law must be exp or poly");
    }

    void echo(const std::string& prefix, ConfigEcho& cfg) const {
        cfg.emplace_back(prefix + ".law", law);
        if (law == "poly") {
            cfg.emplace_back(prefix + ".alpha", tools::fmt_double(alpha));
        } else {
            cfg.emplace_back(prefix + ".b", tools::fmt_double(b));
            cfg.emplace_back(prefix + ".i0", tools::fmt_double(i0));
        }
    }
};

class OutputSink {
public:
    explicit OutputSink(const std::string& path) {
        if (path != "-") {
            file_.open(path, std::ios::binary | std::ios::trunc);
            if (!file_) throw resource_error("cli: cannot open output file '" + path + "'");
        }
    }

    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

private:
    std::ofstream file_;
};

std::vector<std::uint64_t> widen(const std::vector<std::uint32_t>& v) {
    return {v.begin(), v.end()};
}

std::string join_u64(const std::vector<std::uint64_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out += ',';
        out += tools::fmt_uint(v[i]);
    }
    return out;
}

// ---- classify ----

struct ClassifyOpts {
    double b = 2.0;
    double i0 = 0.0;
    int n = 2;
};

void run_classify(const GlobalOpts& g, const ClassifyOpts& o) {
    const analysis::RegimeReport rep = analysis::classify_regime(o.b, o.i0, o.n);
    ConfigEcho cfg = base_config(g);
    cfg.emplace_back("classify.b", tools::fmt_double(o.b));
    cfg.emplace_back("classify.i0", tools::fmt_double(o.i0));
    cfg.emplace_back("classify.n", tools::fmt_int(o.n));
    OutputSink sink(g.out);
    RecordWriter writer(sink.stream(), tools::parse_format(g.format), cfg);
    Record r;
    r.add("b", rep.b)
        .add("i0", rep.i0)
        .add("n", rep.n)
        .add("joint_regime", analysis::regime_name(rep.joint_regime))
        .add("marginal_positive_recurrent_upto", rep.marginal_positive_recurrent_upto)
        .add("throughput_one", rep.throughput_one);
    writer.write("regime", r);
}

// ---- sim-sat ----

struct SimSatOpts {
    LawOpts law;
    int n = 2;
    std::uint64_t horizon = 100000;
    std::vector<std::uint64_t> initial;
    std::uint32_t histogram_buckets = 64;
    std::uint64_t return_cap = 1u << 20;
};

void run_sim_sat(const GlobalOpts& g, const SimSatOpts& o) {
    sim::SimConfig cfg;
    cfg.n = o.n;
    cfg.law = o.law.build();
    cfg.horizon = o.horizon;
    cfg.seed = g.seed;
    cfg.stream_id = g.stream;
    cfg.mode = sim::SimMode::Saturated;
    cfg.histogram_buckets = o.histogram_buckets;
    cfg.return_times_cap = o.return_cap;
    if (!o.initial.empty()) {
        cfg.initial_state = std::vector<std::uint32_t>(o.initial.begin(), o.initial.end());
    }
    const sim::SaturationStats st = sim::run_saturated_replicas(cfg, g.replicas, g.threads);

    ConfigEcho echo = base_config(g);
    o.law.echo("sim-sat", echo);
    echo.emplace_back("sim-sat.n", tools::fmt_int(o.n));
    echo.emplace_back("sim-sat.horizon", tools::fmt_uint(o.horizon));
    if (!o.initial.empty()) echo.emplace_back("sim-sat.initial", join_u64(o.initial));
    echo.emplace_back("sim-sat.histogram-buckets", tools::fmt_uint(o.histogram_buckets));
    echo.emplace_back("sim-sat.return-cap", tools::fmt_uint(o.return_cap));

    OutputSink sink(g.out);
    RecordWriter writer(sink.stream(), tools::parse_format(g.format), echo);
    for (const auto& rep : st.replicas) {
        double return_mean = 0.0;
        if (!rep.zero_return_times.empty()) {
            double acc = 0.0;
            for (const std::uint64_t t : rep.zero_return_times) acc += static_cast<double>(t);
            return_mean = acc / static_cast<double>(rep.zero_return_times.size());
        }
        Record r;
        r.add("replica", rep.replica_id)
            .add("winner", rep.winner)
            .add("tail_slots", rep.tail_slots)
            .add("tail_successes", rep.tail_successes)
            .add("tail_collisions", rep.tail_collisions)
            .add("tail_idles", rep.tail_idles)
            .add("x1_zero_fraction", rep.x1_zero_fraction())
            .add("min_zero_fraction", rep.min_zero_fraction())
            .add("tail_max_success_share", rep.tail_max_success_share())
            .add("zero_return_count", static_cast<std::uint64_t>(rep.zero_return_times.size()))
            .add("zero_return_mean", return_mean)
            .add("final_state", widen(rep.final_state));
        writer.write("replica", r);
    }
    Record s;
    s.add("slots", st.slots)
        .add("successes", st.successes)
        .add("collisions", st.collisions)
        .add("idles", st.idles)
        .add("tail_slots", st.tail_slots)
        .add("tail_successes", st.tail_successes)
        .add("tail_collisions", st.tail_collisions)
        .add("tail_idles", st.tail_idles)
        .add("throughput", st.throughput())
        .add("tail_throughput", st.tail_throughput())
        .add("collision_free_ratio", st.collision_free_ratio())
        .add("tail_collision_free_ratio", st.tail_collision_free_ratio())
        .add("per_user_successes", st.per_user_successes);
    writer.write("summary", s);
    for (std::size_t u = 0; u < st.marginal_histograms.size(); ++u) {
        Record h;
        h.add("user", static_cast<int>(u)).add("counts", st.marginal_histograms[u]);
        writer.write("histogram", h);
    }
}

// ---- sim-queue ----

struct SimQueueOpts {
    LawOpts law;
    int n = 2;
    double lambda = 0.1;
    std::uint64_t horizon = 100000;
    std::uint64_t stride = 0;
    bool emit_samples = false;
};

void run_sim_queue(const GlobalOpts& g, const SimQueueOpts& o) {
    sim::SimConfig cfg;
    cfg.n = o.n;
    cfg.law = o.law.build();
    cfg.horizon = o.horizon;
    cfg.seed = g.seed;
    cfg.stream_id = g.stream;
    cfg.mode = sim::SimMode::Queued;
    cfg.lambda = o.lambda;
    cfg.sample_stride = o.stride;
    cfg.histogram_buckets = 0;
    const sim::QueueStats st = sim::run_queued_replicas(cfg, g.replicas, g.threads);

    ConfigEcho echo = base_config(g);
    o.law.echo("sim-queue", echo);
    echo.emplace_back("sim-queue.n", tools::fmt_int(o.n));
    echo.emplace_back("sim-queue.lambda", tools::fmt_double(o.lambda));
    echo.emplace_back("sim-queue.horizon", tools::fmt_uint(o.horizon));
    echo.emplace_back("sim-queue.stride", tools::fmt_uint(o.stride));
    echo.emplace_back("sim-queue.emit-samples", o.emit_samples ? "true" : "false");

    OutputSink sink(g.out);
    RecordWriter writer(sink.stream(), tools::parse_format(g.format), echo);
    for (const auto& rep : st.replicas) {
        Record r;
        r.add("replica", rep.replica_id)
            .add("arrivals", rep.arrivals)
            .add("departures", rep.departures)
            .add("final_queue", rep.final_queue)
            .add("drift_estimate", rep.drift_estimate)
            .add("mean_queue_tail", rep.mean_queue_tail());
        writer.write("replica", r);
        if (o.emit_samples) {
            std::vector<std::uint64_t> slots;
            std::vector<std::uint64_t> sizes;
            slots.reserve(rep.samples.size());
            sizes.reserve(rep.samples.size());
            for (const auto& [slot, size] : rep.samples) {
                slots.push_back(slot);
                sizes.push_back(size);
            }
            Record sr;
            sr.add("replica", rep.replica_id).add("slot", slots).add("total_queue", sizes);
            writer.write("samples", sr);
        }
    }
    Record s;
    s.add("slots", st.slots)
        .add("arrivals", st.arrivals)
        .add("departures", st.departures)
        .add("mean_queue_tail", st.mean_queue_tail())
        .add("drift_estimate", st.drift_estimate());
    writer.write("summary", s);
}

// ---- first-success ----

struct FirstSuccessOpts {
    LawOpts law;
    int n = 2;
    std::uint64_t m = 0;
    std::uint64_t horizon = 100000;
};

void run_first_success(const GlobalOpts& g, const FirstSuccessOpts& o) {
    sim::FirstSuccessConfig cfg;
    cfg.n = o.n;
    cfg.law = o.law.build();
    cfg.m = static_cast<std::uint32_t>(o.m);
    cfg.horizon = o.horizon;
    cfg.replicas = g.replicas;
    cfg.seed = g.seed;
    cfg.stream_id = g.stream;
    const sim::FirstSuccessSummary sum = sim::run_first_success_experiment(cfg);

    ConfigEcho echo = base_config(g);
    o.law.echo("first-success", echo);
    echo.emplace_back("first-success.n", tools::fmt_int(o.n));
    echo.emplace_back("first-success.m", tools::fmt_uint(o.m));
    echo.emplace_back("first-success.horizon", tools::fmt_uint(o.horizon));

    OutputSink sink(g.out);
    RecordWriter writer(sink.stream(), tools::parse_format(g.format), echo);
    Record r;
    r.add("horizon", sum.horizon)
        .add("replicas", sum.replicas)
        .add("censored", sum.censored)
        .add("censor_fraction", sum.censor_fraction())
        .add("censored_mean", sum.censored_mean)
        .add("se", sum.se)
        .add("times", sum.times);
    writer.write("first_success", r);
}

// ---- return-time ----

struct ReturnTimeOpts {
    LawOpts law;
    int n = 2;
    int rank = 1;
    std::uint64_t horizon = 100000;
};

void run_return_time(const GlobalOpts& g, const ReturnTimeOpts& o) {
    sim::ReturnTimeConfig cfg;
    cfg.n = o.n;
    cfg.law = o.law.build();
    cfg.rank = o.rank;
    cfg.horizon = o.horizon;
    cfg.replicas = g.replicas;
    cfg.seed = g.seed;
    cfg.stream_id = g.stream;
    const sim::ReturnTimeSummary sum = sim::run_return_time_experiment(cfg);

    ConfigEcho echo = base_config(g);
    o.law.echo("return-time", echo);
    echo.emplace_back("return-time.n", tools::fmt_int(o.n));
    echo.emplace_back("return-time.rank", tools::fmt_int(o.rank));
    echo.emplace_back("return-time.horizon", tools::fmt_uint(o.horizon));

    OutputSink sink(g.out);
    RecordWriter writer(sink.stream(), tools::parse_format(g.format), echo);
    Record r;
    r.add("replicas", sum.replicas)
        .add("censored", sum.censored)
        .add("never_left", sum.never_left)
        .add("censored_mean", sum.censored_mean)
        .add("se", sum.se)
        .add("times", sum.times);
    writer.write("return_time", r);
}

// ---- bd ----

struct BdOpts {
    double b = 2.0;
    double i0 = 0.0;
    int n = 2;
    std::uint64_t x2 = 0;
    int delta_star = -1;  // negative selects the automatic floor
    int delta_max = 60;
    std::uint64_t mc_steps = 0;
    int blocks = 64;
};

void run_bd(const GlobalOpts& g, const BdOpts& o) {
    const auto x2 = static_cast<std::uint32_t>(o.x2);
    const analysis::BirthDeathSpec spec =
        o.delta_star < 0 ? analysis::BirthDeathSpec::make(o.b, o.i0, o.n, x2)
                         : analysis::BirthDeathSpec::with_delta_star(o.b, o.i0, o.n, x2,
                                                                     o.delta_star);
    const analysis::BdDistribution dist = analysis::bd_stationary(spec, o.delta_max);
    const stats::QuadFit fit = analysis::tail_quadratic_fit(dist.pi);

    ConfigEcho echo = base_config(g);
    echo.emplace_back("bd.b", tools::fmt_double(o.b));
    echo.emplace_back("bd.i0", tools::fmt_double(o.i0));
    echo.emplace_back("bd.n", tools::fmt_int(o.n));
    echo.emplace_back("bd.x2", tools::fmt_uint(o.x2));
    echo.emplace_back("bd.delta-star", tools::fmt_int(o.delta_star));
    echo.emplace_back("bd.delta-max", tools::fmt_int(o.delta_max));
    echo.emplace_back("bd.mc-steps", tools::fmt_uint(o.mc_steps));
    echo.emplace_back("bd.blocks", tools::fmt_int(o.blocks));

    OutputSink sink(g.out);
    RecordWriter writer(sink.stream(), tools::parse_format(g.format), echo);
    Record meta;
    meta.add("b", spec.b)
        .add("i0", spec.i0)
        .add("n", spec.n)
        .add("x2", static_cast<std::uint64_t>(spec.x2))
        .add("delta_star", spec.delta_star)
        .add("delta_max", o.delta_max)
        .add("beta", spec.beta())
        .add("alpha_above_floor", spec.alpha(spec.delta_star + 1))
        .add("simulable", spec.simulable())
        .add("dominance_margin_ok", spec.dominance_margin_ok())
        .add("truncation_tail_bound", dist.truncation_tail_bound)
        .add("c2", fit.c2)
        .add("c2_se", fit.c2_se)
        .add("c2_theory", -0.5 * std::log(spec.b));
    writer.write("bd_meta", meta);
    Record pr;
    pr.add("delta_star", dist.delta_star).add("pi", dist.pi);
    writer.write("bd_pi", pr);

    if (o.mc_steps > 0) {
        const analysis::AuxChainResult aux =
            analysis::simulate_aux_chain(spec, o.mc_steps, g.seed, g.stream, o.blocks);
        const std::vector<double> occ = aux.occupancy();
        Record mc;
        mc.add("steps", aux.steps)
            .add("blocks", static_cast<std::uint64_t>(aux.block_histograms.size()))
            .add("n2_gt1_fraction", aux.n2_gt1_fraction())
            .add("tv_vs_analytic", analysis::tv_distance(occ, dist.pi))
            .add("occupancy", occ);
        writer.write("bd_mc", mc);
    }
}

// ---- dominance ----

struct DominanceOpts {
    double b = 2.0;
    double i0 = 0.0;
    int n = 3;
    std::uint64_t x2 = 10;
    std::uint64_t traces = 200;
    std::uint64_t trace_horizon = 20000;
    std::uint64_t aux_steps = 1000000;
    int blocks = 64;
    double tol_sigma = 3.0;
};

void run_dominance(const GlobalOpts& g, const DominanceOpts& o) {
    const BackoffLaw law = BackoffLaw::exponential(o.b, o.i0);
    const auto x2 = static_cast<std::uint32_t>(o.x2);

    std::vector<std::vector<std::uint64_t>> measured_hists;
    std::uint64_t empty_traces = 0;
    for (std::uint64_t r = 0; r < o.traces; ++r) {
        const sim::RawCohortTrace raw =
            sim::record_cohort_trace(o.n, law, x2, o.trace_horizon, g.seed, g.stream + r);
        const analysis::CollisionTrace trace = analysis::collision_trace(raw);
        std::vector<std::uint64_t> hist = analysis::spread_histogram(trace);
        if (hist.empty()) {
            ++empty_traces;
        } else {
            measured_hists.push_back(std::move(hist));
        }
    }
    if (measured_hists.empty()) throw diagnostic_error("cli: no trace produced any collisions");
    analysis::EmpiricalCcdf measured = analysis::ccdf_across_replicas(measured_hists);

    const analysis::BirthDeathSpec spec = analysis::BirthDeathSpec::make(o.b, o.i0, o.n, x2);
    const analysis::AuxChainResult aux = analysis::simulate_aux_chain(
        spec, o.aux_steps, g.seed, g.stream + (std::uint64_t{1} << 20), o.blocks);
    // Shift block counts from the floor-relative offset to absolute deltas so
    // both CCDFs share an axis.
    std::vector<std::vector<std::uint64_t>> aux_hists;
    aux_hists.reserve(aux.block_histograms.size());
    const auto shift = static_cast<std::size_t>(spec.delta_star);
    for (const auto& h : aux.block_histograms) {
        std::vector<std::uint64_t> abs_hist(h.size() + shift, 0);
        for (std::size_t k = 0; k < h.size(); ++k) abs_hist[k + shift] = h[k];
        aux_hists.push_back(std::move(abs_hist));
    }
    analysis::EmpiricalCcdf upper = analysis::ccdf_across_replicas(aux_hists);

    const std::size_t support = std::max(upper.p.size(), measured.p.size());
    analysis::pad_ccdf(upper, support);
    analysis::pad_ccdf(measured, support);
    const analysis::DominanceVerdict verdict =
        analysis::dominance_test(upper, measured, o.tol_sigma);

    ConfigEcho echo = base_config(g);
    echo.emplace_back("dominance.b", tools::fmt_double(o.b));
    echo.emplace_back("dominance.i0", tools::fmt_double(o.i0));
    echo.emplace_back("dominance.n", tools::fmt_int(o.n));
    echo.emplace_back("dominance.x2", tools::fmt_uint(o.x2));
    echo.emplace_back("dominance.traces", tools::fmt_uint(o.traces));
    echo.emplace_back("dominance.trace-horizon", tools::fmt_uint(o.trace_horizon));
    echo.emplace_back("dominance.aux-steps", tools::fmt_uint(o.aux_steps));
    echo.emplace_back("dominance.blocks", tools::fmt_int(o.blocks));
    echo.emplace_back("dominance.tol-sigma", tools::fmt_double(o.tol_sigma));

    OutputSink sink(g.out);
    RecordWriter writer(sink.stream(), tools::parse_format(g.format), echo);
    for (std::size_t d = 0; d < support; ++d) {
        Record r;
        r.add("d", static_cast<std::uint64_t>(d))
            .add("walk_p", upper.p[d])
            .add("walk_se", upper.se[d])
            .add("observed_p", measured.p[d])
            .add("observed_se", measured.se[d]);
        writer.write("ccdf", r);
    }
    Record v;
    v.add("dominates", verdict.dominates)
        .add("support", static_cast<std::uint64_t>(verdict.support))
        .add("violations", static_cast<std::uint64_t>(verdict.violations))
        .add("worst_margin", verdict.worst_margin)
        .add("delta_star", spec.delta_star)
        .add("n2_gt1_fraction", aux.n2_gt1_fraction())
        .add("traces_used", static_cast<std::uint64_t>(measured_hists.size()))
        .add("empty_traces", empty_traces)
        .add("spread_samples", measured.total_samples);
    writer.write("verdict", v);
}

// ---- oracle ----

struct OracleOpts {
    LawOpts law;
    int n = 2;
    std::uint64_t m_cap = 40;
    std::int64_t m_start = -1;  // >= 0 adds the first-success hitting time
};

void run_oracle(const GlobalOpts& g, const OracleOpts& o) {
    const BackoffLaw law = o.law.build();
    const auto m_cap = static_cast<std::uint32_t>(o.m_cap);
    const oracle::TruncatedChain chain = oracle::build_truncated_chain(o.n, m_cap, law);
    const oracle::StationarySolution sol = oracle::exact_stationary(chain);
    const double tp = oracle::exact_throughput(chain, sol.pi);

    ConfigEcho echo = base_config(g);
    o.law.echo("oracle", echo);
    echo.emplace_back("oracle.n", tools::fmt_int(o.n));
    echo.emplace_back("oracle.m-cap", tools::fmt_uint(o.m_cap));
    echo.emplace_back("oracle.m-start", tools::fmt_int(o.m_start));

    OutputSink sink(g.out);
    RecordWriter writer(sink.stream(), tools::parse_format(g.format), echo);
    Record r;
    r.add("n", o.n)
        .add("m_cap", static_cast<std::uint64_t>(m_cap))
        .add("states", static_cast<std::uint64_t>(chain.num_states()))
        .add("direct_solve", sol.direct)
        .add("iterations", sol.iterations)
        .add("residual", sol.residual)
        .add("boundary_mass", sol.boundary_mass)
        .add("throughput", tp);
    writer.write("oracle", r);
    if (o.m_start >= 0) {
        const double t = oracle::exact_first_success_time(
            o.n, m_cap, law, static_cast<std::uint32_t>(o.m_start));
        Record h;
        h.add("m_start", static_cast<std::uint64_t>(o.m_start)).add("expected_slots", t);
        writer.write("hitting", h);
    }
}

// ---- mg1 ----

struct Mg1Opts {
    std::string service = "det:1";
    double lambda = 0.5;
    std::string kind = "both";
    std::uint64_t r_max = 512;
    bool emit_pi = false;
};

void run_mg1(const GlobalOpts& g, const Mg1Opts& o) {
    const queueing::ServiceDist service = queueing::ServiceDist::from_text(o.service);
    const std::vector<double> zeta = queueing::compute_zeta(service, o.lambda);
    const double rho = o.lambda * service.mean();

    ConfigEcho echo = base_config(g);
    echo.emplace_back("mg1.service", o.service);
    echo.emplace_back("mg1.lambda", tools::fmt_double(o.lambda));
    echo.emplace_back("mg1.kind", o.kind);
    echo.emplace_back("mg1.r-max", tools::fmt_uint(o.r_max));
    echo.emplace_back("mg1.emit-pi", o.emit_pi ? "true" : "false");

    OutputSink sink(g.out);
    RecordWriter writer(sink.stream(), tools::parse_format(g.format), echo);
    Record z;
    z.add("lambda", o.lambda)
        .add("service_mean", service.mean())
        .add("service_second_moment", service.second_moment())
        .add("service_tail_mass", service.tail_mass())
        .add("rho", rho)
        .add("values", zeta);
    writer.write("zeta", z);

    std::vector<queueing::ChainKind> kinds;
    if (o.kind == "standard") {
        kinds = {queueing::ChainKind::Standard};
    } else if (o.kind == "modified") {
        kinds = {queueing::ChainKind::Modified};
    } else if (o.kind == "both") {
        kinds = {queueing::ChainKind::Standard, queueing::ChainKind::Modified};
    } else {
        throw param_error("cli: --kind must be standard, modified, or both");
    }
    for (const queueing::ChainKind kind : kinds) {
        const queueing::StationaryResult res =
            queueing::stationary_or_diverge(kind, zeta, o.r_max);
        Record r;
        r.add("kind", kind == queueing::ChainKind::Standard ? "standard" : "modified")
            .add("r_max", static_cast<std::uint64_t>(res.r_max_used))
            .add("stable", res.stable)
            .add("residual", res.residual)
            .add("boundary_mass", res.boundary_mass)
            .add("boundary_mass_doubled", res.boundary_mass_doubled)
            .add("mean", res.mean());
        if (rho < 1.0 && rho > 0.0) r.add("pk_mean", queueing::pk_mean_system(service, o.lambda));
        writer.write("mg1", r);
        if (o.emit_pi) {
            Record pr;
            pr.add("kind", kind == queueing::ChainKind::Standard ? "standard" : "modified")
                .add("pi", res.pi);
            writer.write("pi", pr);
        }
    }
}

// ---- lambda0 ----

struct Lambda0Opts {
    LawOpts law;
    int n = 2;
    std::uint64_t horizon = 1000000;
};

void run_lambda0(const GlobalOpts& g, const Lambda0Opts& o) {
    const BackoffLaw law = o.law.build();
    const queueing::Lambda0Estimate est =
        queueing::estimate_lambda0(o.n, law, o.horizon, g.replicas, g.seed, g.stream);
    if (!est.ergodic_params) {
        std::cerr << "warning: saturation throughput estimated outside the ergodic regime; "
                     "the value may not stabilize\n";
    }

    ConfigEcho echo = base_config(g);
    o.law.echo("lambda0", echo);
    echo.emplace_back("lambda0.n", tools::fmt_int(o.n));
    echo.emplace_back("lambda0.horizon", tools::fmt_uint(o.horizon));

    OutputSink sink(g.out);
    RecordWriter writer(sink.stream(), tools::parse_format(g.format), echo);
    Record r;
    r.add("n", o.n)
        .add("horizon", o.horizon)
        .add("replicas", est.replicas)
        .add("lambda0", est.lambda0)
        .add("se", est.se)
        .add("lo", est.lo)
        .add("hi", est.hi)
        .add("ergodic_params", est.ergodic_params);
    writer.write("lambda0", r);
}

// ---- stability ----

struct StabilityOpts {
    LawOpts law;
    int n = 2;
    std::vector<double> lambdas;
    std::uint64_t horizon = 200000;
};

void run_stability(const GlobalOpts& g, const StabilityOpts& o) {
    const BackoffLaw law = o.law.build();

    ConfigEcho echo = base_config(g);
    o.law.echo("stability", echo);
    echo.emplace_back("stability.n", tools::fmt_int(o.n));
    {
        std::string joined;
        for (std::size_t i = 0; i < o.lambdas.size(); ++i) {
            if (i > 0) joined += ',';
            joined += tools::fmt_double(o.lambdas[i]);
        }
        echo.emplace_back("stability.lambda", joined);
    }
    echo.emplace_back("stability.horizon", tools::fmt_uint(o.horizon));

    OutputSink sink(g.out);
    RecordWriter writer(sink.stream(), tools::parse_format(g.format), echo);
    for (std::size_t i = 0; i < o.lambdas.size(); ++i) {
        const queueing::LambdaVerdict v = queueing::stability_experiment(
            o.n, law, o.lambdas[i], o.horizon, g.replicas, g.seed,
            g.stream + i * (std::uint64_t{1} << 24));
        Record r;
        r.add("lambda", v.lambda)
            .add("verdict", queueing::verdict_name(v.verdict))
            .add("drift", v.drift)
            .add("drift_se", v.drift_se)
            .add("drift_lo", v.drift_lo)
            .add("drift_hi", v.drift_hi)
            .add("tail_mean_h", v.tail_mean_h)
            .add("tail_mean_2h", v.tail_mean_2h)
            .add("horizon", o.horizon)
            .add("replicas", g.replicas);
        writer.write("stability", r);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Slotted-aloha exponential-backoff simulator and analysis toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from an INI file");

    GlobalOpts g;
    app.add_option("--seed", g.seed, "Master seed for all replica streams")
        ->capture_default_str();
    app.add_option("--replicas", g.replicas, "Independent replicas to run")
        ->capture_default_str();
    app.add_option("--stream", g.stream, "First replica stream id")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads for replica runs")
        ->capture_default_str();
    app.add_option("--out", g.out, "Output path, '-' for stdout")->capture_default_str();
    app.add_option("--format", g.format, "Output format: csv or jsonl")->capture_default_str();

    ClassifyOpts classify_opts;
    auto* classify = app.add_subcommand("classify", "Recurrence regime of the exponential law")
                         ->configurable();
    classify->add_option("--b", classify_opts.b, "Exponential base (> 1)")->capture_default_str();
    classify->add_option("--i0", classify_opts.i0, "Index offset (>= 0)")->capture_default_str();
    classify->add_option("--n", classify_opts.n, "Number of users")->capture_default_str();
    classify->callback([&] { run_classify(g, classify_opts); });

    SimSatOpts sat_opts;
    auto* sat = app.add_subcommand("sim-sat", "Saturated slotted-aloha simulation")
                    ->configurable();
    sat_opts.law.add_options(sat);
    sat->add_option("--n", sat_opts.n, "Number of users")->capture_default_str();
    sat->add_option("--horizon", sat_opts.horizon, "Slots per replica")->capture_default_str();
    sat->add_option("--initial", sat_opts.initial, "Initial backoff indices, comma separated")
        ->delimiter(',');
    sat->add_option("--histogram-buckets", sat_opts.histogram_buckets,
                    "Tail histogram buckets (0 disables)")
        ->capture_default_str();
    sat->add_option("--return-cap", sat_opts.return_cap,
                    "Max recorded all-zero return times per replica")
        ->capture_default_str();
    sat->callback([&] { run_sim_sat(g, sat_opts); });

    SimQueueOpts queue_opts;
    auto* queue = app.add_subcommand("sim-queue", "Queued slotted-aloha simulation")
                      ->configurable();
    queue_opts.law.add_options(queue);
    queue->add_option("--n", queue_opts.n, "Number of users")->capture_default_str();
    queue->add_option("--lambda", queue_opts.lambda, "Total Poisson arrival rate per slot")
        ->required();
    queue->add_option("--horizon", queue_opts.horizon, "Slots per replica")
        ->capture_default_str();
    queue->add_option("--stride", queue_opts.stride, "Sampling stride in slots (0 = auto)")
        ->capture_default_str();
    queue->add_flag("--emit-samples", queue_opts.emit_samples,
                    "Also write the sampled queue trajectory");
    queue->callback([&] { run_sim_queue(g, queue_opts); });

    FirstSuccessOpts fs_opts;
    auto* fs = app.add_subcommand("first-success",
                                  "Time to the first success among users 1..n-1 from (0,m,..,m)")
                   ->configurable();
    fs_opts.law.add_options(fs);
    fs->add_option("--n", fs_opts.n, "Number of users")->capture_default_str();
    fs->add_option("--m", fs_opts.m, "Initial index of users 1..n-1")->capture_default_str();
    fs->add_option("--horizon", fs_opts.horizon, "Censoring horizon in slots")
        ->capture_default_str();
    fs->callback([&] { run_first_success(g, fs_opts); });

    ReturnTimeOpts rt_opts;
    auto* rt = app.add_subcommand("return-time",
                                  "Return time of the rank-th smallest index to zero")
                   ->configurable();
    rt_opts.law.add_options(rt);
    rt->add_option("--n", rt_opts.n, "Number of users")->capture_default_str();
    rt->add_option("--rank", rt_opts.rank, "Order statistic to track (1 = minimum)")
        ->capture_default_str();
    rt->add_option("--horizon", rt_opts.horizon, "Cap on each phase, in slots")
        ->capture_default_str();
    rt->callback([&] { run_return_time(g, rt_opts); });

    BdOpts bd_opts;
    auto* bd = app.add_subcommand("bd", "Dominating birth-death walk: stationary law and fit")
                   ->configurable();
    bd->add_option("--b", bd_opts.b, "Exponential base (> 1)")->capture_default_str();
    bd->add_option("--i0", bd_opts.i0, "Index offset (>= 0)")->capture_default_str();
    bd->add_option("--n", bd_opts.n, "Number of users")->capture_default_str();
    bd->add_option("--x2", bd_opts.x2, "Anchor index in the down rate")->capture_default_str();
    bd->add_option("--delta-star", bd_opts.delta_star, "Reflecting floor (negative = auto)")
        ->capture_default_str();
    bd->add_option("--delta-max", bd_opts.delta_max, "Truncation of the stationary law")
        ->capture_default_str();
    bd->add_option("--mc-steps", bd_opts.mc_steps, "Auxiliary-chain steps (0 skips the check)")
        ->capture_default_str();
    bd->add_option("--blocks", bd_opts.blocks, "Blocks for Monte Carlo error bars")
        ->capture_default_str();
    bd->callback([&] { run_bd(g, bd_opts); });

    DominanceOpts dom_opts;
    auto* dom = app.add_subcommand(
                       "dominance",
                       "Cohort spread CCDF against the dominating walk's CCDF")
                    ->configurable();
    dom->add_option("--b", dom_opts.b, "Exponential base (> 1)")->capture_default_str();
    dom->add_option("--i0", dom_opts.i0, "Index offset (>= 0)")->capture_default_str();
    dom->add_option("--n", dom_opts.n, "Number of users")->capture_default_str();
    dom->add_option("--x2", dom_opts.x2, "Cohort start index and down-rate anchor")
        ->capture_default_str();
    dom->add_option("--traces", dom_opts.traces, "Cohort traces to record")
        ->capture_default_str();
    dom->add_option("--trace-horizon", dom_opts.trace_horizon, "Slots per trace")
        ->capture_default_str();
    dom->add_option("--aux-steps", dom_opts.aux_steps, "Auxiliary-chain steps")
        ->capture_default_str();
    dom->add_option("--blocks", dom_opts.blocks, "Blocks for Monte Carlo error bars")
        ->capture_default_str();
    dom->add_option("--tol-sigma", dom_opts.tol_sigma, "Allowed slack in combined stderrs")
        ->capture_default_str();
    dom->callback([&] { run_dominance(g, dom_opts); });

    OracleOpts oracle_opts;
    auto* orc = app.add_subcommand("oracle",
                                   "Exact results on the index-capped joint chain")
                    ->configurable();
    oracle_opts.law.add_options(orc);
    orc->add_option("--n", oracle_opts.n, "Number of users")->capture_default_str();
    orc->add_option("--m-cap", oracle_opts.m_cap, "Index cap of the truncated chain")
        ->capture_default_str();
    orc->add_option("--m-start", oracle_opts.m_start,
                    "Also report the first-success hitting time from (0,m,..,m)")
        ->capture_default_str();
    orc->callback([&] { run_oracle(g, oracle_opts); });

    Mg1Opts mg1_opts;
    auto* mg1 = app.add_subcommand("mg1", "Embedded M/G/1 chains: build, solve, diagnose")
                    ->configurable();
    mg1->add_option("--service", mg1_opts.service, "Service law: det:K, geo:M, or pmf:s=p,..")
        ->capture_default_str();
    mg1->add_option("--lambda", mg1_opts.lambda, "Poisson arrival rate")->capture_default_str();
    mg1->add_option("--kind", mg1_opts.kind, "Chain kind: standard, modified, or both")
        ->capture_default_str();
    mg1->add_option("--r-max", mg1_opts.r_max, "State-space truncation")->capture_default_str();
    mg1->add_flag("--emit-pi", mg1_opts.emit_pi, "Also write the stationary vector");
    mg1->callback([&] { run_mg1(g, mg1_opts); });

    Lambda0Opts l0_opts;
    auto* l0 = app.add_subcommand("lambda0", "Saturation throughput estimate")
                   ->configurable();
    l0_opts.law.add_options(l0);
    l0->add_option("--n", l0_opts.n, "Number of users")->capture_default_str();
    l0->add_option("--horizon", l0_opts.horizon, "Slots per replica")->capture_default_str();
    l0->callback([&] { run_lambda0(g, l0_opts); });

    StabilityOpts st_opts;
    auto* st = app.add_subcommand("stability", "Queued-system drift verdicts at given rates")
                   ->configurable();
    st_opts.law.add_options(st);
    st->add_option("--n", st_opts.n, "Number of users")->capture_default_str();
    st->add_option("--lambda", st_opts.lambdas, "Arrival rates to test")
        ->required()
        ->delimiter(',');
    st->add_option("--horizon", st_opts.horizon, "Base horizon (doubled internally)")
        ->capture_default_str();
    st->callback([&] { run_stability(g, st_opts); });

    // Global options (seed, output, ...) may appear after the subcommand name.
    for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ebsim::param_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ebsim::resource_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
