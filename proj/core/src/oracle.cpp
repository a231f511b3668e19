#include "ebsim/oracle.hpp"

#include "ebsim/errors.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <utility>

namespace ebsim::oracle {

namespace {

std::size_t checked_num_states(int n, std::uint32_t m_cap, std::size_t budget) {
    if (n < 2) throw param_error("oracle: need at least 2 users");
    if (n > 10) throw param_error("oracle: subset enumeration supports at most 10 users");
    if (m_cap < 1) throw param_error("oracle: index cap must be >= 1");
    const std::size_t radix = static_cast<std::size_t>(m_cap) + 1;
    std::size_t states = 1;
    for (int i = 0; i < n; ++i) {
        if (states > (budget / static_cast<std::size_t>(n)) / radix + 1) {
            throw resource_error("oracle: state space exceeds budget");
        }
        states *= radix;
    }
    if (static_cast<std::size_t>(n) * states > budget) {
        throw resource_error("oracle: state space exceeds budget");
    }
    return states;
}

// Enumerates all transmitter subsets of one state and hands (mask, probability)
// pairs to the sink. Subsets with zero probability (a user with beta == 1 not
// transmitting) are skipped.
template <typename Sink>
void for_each_subset(int n, std::span<const double> beta, Sink&& sink) {
    std::uint32_t forced = 0;
    for (int i = 0; i < n; ++i) {
        if (beta[static_cast<std::size_t>(i)] >= 1.0) forced |= (1u << i);
    }
    const std::uint32_t num_masks = 1u << n;
    for (std::uint32_t mask = 0; mask < num_masks; ++mask) {
        if ((mask & forced) != forced) continue;
        double p = 1.0;
        for (int i = 0; i < n; ++i) {
            const double bi = beta[static_cast<std::size_t>(i)];
            p *= (mask >> i) & 1u ? bi : 1.0 - bi;
        }
        if (p > 0.0) sink(mask, p);
    }
}

// Applies one slot to the state under saturating increments: a lone
// transmitter resets to zero, colliders move up but stop at m_cap.
void apply_mask_saturating(std::span<std::uint32_t> x, std::uint32_t mask, std::uint32_t m_cap) {
    const int k = std::popcount(mask);
    if (k == 0) return;
    if (k == 1) {
        const int u = std::countr_zero(mask);
        x[static_cast<std::size_t>(u)] = 0;
        return;
    }
    for (std::uint32_t rest = mask; rest != 0; rest &= rest - 1) {
        const auto u = static_cast<std::size_t>(std::countr_zero(rest));
        if (x[u] < m_cap) ++x[u];
    }
}

std::vector<double> csr_left_multiply(const TruncatedChain& chain, std::span<const double> v) {
    std::vector<double> out(v.size(), 0.0);
    const std::size_t s = chain.num_states();
    for (std::size_t i = 0; i < s; ++i) {
        const double vi = v[i];
        if (vi == 0.0) continue;
        for (std::size_t k = chain.row_ptr[i]; k < chain.row_ptr[i + 1]; ++k) {
            out[chain.col[k]] += vi * chain.val[k];
        }
    }
    return out;
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::fabs(a[i] - b[i]);
    return d;
}

double boundary_mass_of(const TruncatedChain& chain, std::span<const double> pi) {
    const std::size_t s = chain.num_states();
    std::vector<std::uint32_t> x(static_cast<std::size_t>(chain.n));
    double mass = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
        chain.decode_state(i, x);
        if (std::ranges::any_of(x, [&](std::uint32_t xi) { return xi == chain.m_cap; })) {
            mass += pi[i];
        }
    }
    return mass;
}

} // namespace

std::size_t TruncatedChain::num_states() const {
    std::size_t s = 1;
    const std::size_t radix = static_cast<std::size_t>(m_cap) + 1;
    for (int i = 0; i < n; ++i) s *= radix;
    return s;
}

std::size_t TruncatedChain::state_index(std::span<const std::uint32_t> x) const {
    if (x.size() != static_cast<std::size_t>(n)) throw param_error("oracle: state size mismatch");
    const std::size_t radix = static_cast<std::size_t>(m_cap) + 1;
    std::size_t idx = 0;
    for (std::size_t i = x.size(); i-- > 0;) {
        if (x[i] > m_cap) throw param_error("oracle: state component above cap");
        idx = idx * radix + x[i];
    }
    return idx;
}

void TruncatedChain::decode_state(std::size_t idx, std::span<std::uint32_t> out) const {
    if (out.size() != static_cast<std::size_t>(n)) throw param_error("oracle: state size mismatch");
    const std::size_t radix = static_cast<std::size_t>(m_cap) + 1;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<std::uint32_t>(idx % radix);
        idx /= radix;
    }
}

double TruncatedChain::row_sum(std::size_t i) const {
    double s = 0.0;
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k];
    return s;
}

TruncatedChain build_truncated_chain(int n, std::uint32_t m_cap, const BackoffLaw& law,
                                     std::size_t budget) {
    const std::size_t s = checked_num_states(n, m_cap, budget);
    TruncatedChain chain;
    chain.n = n;
    chain.m_cap = m_cap;
    chain.law = law;
    chain.row_ptr.assign(s + 1, 0);
    chain.col.reserve(s * 4);
    chain.val.reserve(s * 4);

    const auto un = static_cast<std::size_t>(n);
    std::vector<std::uint32_t> x(un);
    std::vector<std::uint32_t> next(un);
    std::vector<double> beta(un);
    std::vector<std::pair<std::uint32_t, double>> row;
    row.reserve(std::size_t{1} << n);

    for (std::size_t i = 0; i < s; ++i) {
        chain.decode_state(i, x);
        for (std::size_t u = 0; u < un; ++u) beta[u] = tx_probability(law, x[u]);
        row.clear();
        for_each_subset(n, beta, [&](std::uint32_t mask, double p) {
            std::ranges::copy(x, next.begin());
            apply_mask_saturating(next, mask, m_cap);
            row.emplace_back(static_cast<std::uint32_t>(chain.state_index(next)), p);
        });
        std::ranges::sort(row, {}, &std::pair<std::uint32_t, double>::first);
        for (const auto& [c, p] : row) {
            if (chain.col.size() > chain.row_ptr[i] && chain.col.back() == c) {
                chain.val.back() += p;
            } else {
                chain.col.push_back(c);
                chain.val.push_back(p);
            }
        }
        chain.row_ptr[i + 1] = chain.col.size();
    }
    return chain;
}

StationarySolution exact_stationary(const TruncatedChain& chain, double tol, int max_iter) {
    const std::size_t s = chain.num_states();
    StationarySolution out;

    // Direct solve of pi (P - I) = 0 with the last balance equation replaced
    // by the normalization sum(pi) = 1, working on the transposed system.
    if (s <= 400000) {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(chain.col.size() + 2 * s);
        const auto last = static_cast<Eigen::Index>(s - 1);
        for (std::size_t i = 0; i < s; ++i) {
            for (std::size_t k = chain.row_ptr[i]; k < chain.row_ptr[i + 1]; ++k) {
                const auto j = static_cast<Eigen::Index>(chain.col[k]);
                if (j == last) continue;
                trips.emplace_back(j, static_cast<Eigen::Index>(i), chain.val[k]);
            }
        }
        for (std::size_t i = 0; i + 1 < s; ++i) {
            trips.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), -1.0);
        }
        for (std::size_t i = 0; i < s; ++i) {
            trips.emplace_back(last, static_cast<Eigen::Index>(i), 1.0);
        }
        Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
        a.setFromTriplets(trips.begin(), trips.end());
        a.makeCompressed();
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(a);
        if (lu.info() == Eigen::Success) {
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s));
            rhs[last] = 1.0;
            Eigen::VectorXd sol = lu.solve(rhs);
            if (lu.info() == Eigen::Success) {
                out.pi.assign(sol.data(), sol.data() + s);
                double total = 0.0;
                for (double& p : out.pi) {
                    if (p < 0.0) p = 0.0;
                    total += p;
                }
                if (total > 0.0) {
                    for (double& p : out.pi) p /= total;
                }
                const std::vector<double> next = csr_left_multiply(chain, out.pi);
                out.residual = l1_distance(next, out.pi);
                if (out.residual <= std::max(tol, 1e-9)) {
                    out.direct = true;
                    out.boundary_mass = boundary_mass_of(chain, out.pi);
                    return out;
                }
            }
        }
    }

    // Fallback for chains the plain solve cannot handle (deep backoff tails
    // make the balance system singular to working precision). Power-iterate
    // the lazy kernel (P + I) / 2 from the all-zero state -- which never
    // seeds mass on quasi-frozen capture states -- and finish with
    // shift-invert refinement: solves against P^T - (1 + eps) I, which is
    // nonsingular and crushes every non-stationary mode by eps / (gap + eps).
    std::vector<double> v(s, 0.0);
    v[0] = 1.0;
    int iter = 0;
    const int forward_cap = std::min(max_iter, 2000);
    double res = std::numeric_limits<double>::infinity();
    while (iter < forward_cap) {
        std::vector<double> w = csr_left_multiply(chain, v);
        res = l1_distance(w, v);
        for (std::size_t i = 0; i < s; ++i) v[i] = 0.5 * (v[i] + w[i]);
        const double total = std::accumulate(v.begin(), v.end(), 0.0);
        for (double& p : v) p /= total;
        ++iter;
        if (res <= tol) break;
    }

    if (res > tol) {
        for (double eps = 1e-12; eps <= 1e-6; eps *= 100.0) {
            std::vector<Eigen::Triplet<double>> trips;
            trips.reserve(chain.col.size() + s);
            for (std::size_t i = 0; i < s; ++i) {
                for (std::size_t k = chain.row_ptr[i]; k < chain.row_ptr[i + 1]; ++k) {
                    trips.emplace_back(static_cast<Eigen::Index>(chain.col[k]),
                                       static_cast<Eigen::Index>(i), chain.val[k]);
                }
                trips.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i),
                                   -(1.0 + eps));
            }
            Eigen::SparseMatrix<double> shifted(static_cast<Eigen::Index>(s),
                                                static_cast<Eigen::Index>(s));
            shifted.setFromTriplets(trips.begin(), trips.end());
            shifted.makeCompressed();
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
            lu.compute(shifted);
            if (lu.info() != Eigen::Success) continue;

            Eigen::VectorXd x(static_cast<Eigen::Index>(s));
            for (std::size_t i = 0; i < s; ++i) x[static_cast<Eigen::Index>(i)] = v[i];
            for (int pass = 0; pass < 4 && res > tol; ++pass) {
                const Eigen::VectorXd y = lu.solve(x);
                if (lu.info() != Eigen::Success) break;
                const double total = y.sum();
                if (total == 0.0 || !std::isfinite(total)) break;
                std::vector<double> cand(s);
                for (std::size_t i = 0; i < s; ++i) {
                    const double p = y[static_cast<Eigen::Index>(i)] / total;
                    cand[i] = p > 0.0 ? p : 0.0;
                }
                double norm = std::accumulate(cand.begin(), cand.end(), 0.0);
                for (double& p : cand) p /= norm;
                const double cand_res = l1_distance(csr_left_multiply(chain, cand), cand);
                if (cand_res < res) {
                    res = cand_res;
                    v = std::move(cand);
                }
                for (std::size_t i = 0; i < s; ++i) x[static_cast<Eigen::Index>(i)] = v[i];
            }
            break;
        }
    }

    out.pi = std::move(v);
    out.residual = l1_distance(csr_left_multiply(chain, out.pi), out.pi);
    out.iterations = iter;
    out.direct = false;
    if (out.residual > std::max(tol, 1e-9)) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "oracle: stationary solve stalled at residual %.17g",
                      out.residual);
        throw diagnostic_error(buf);
    }
    out.boundary_mass = boundary_mass_of(chain, out.pi);
    return out;
}

double exact_throughput(const TruncatedChain& chain, std::span<const double> pi) {
    const std::size_t s = chain.num_states();
    if (pi.size() != s) throw param_error("oracle: distribution size mismatch");
    std::vector<std::uint32_t> x(static_cast<std::size_t>(chain.n));
    double tp = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
        if (pi[i] == 0.0) continue;
        chain.decode_state(i, x);
        tp += pi[i] * success_probability(SystemState(x), chain.law);
    }
    return tp;
}

double exact_first_success_time(int n, std::uint32_t m_cap, const BackoffLaw& law,
                                std::uint32_t m_start, std::size_t budget) {
    const std::size_t s = checked_num_states(n, m_cap, budget);
    if (m_start > m_cap) throw param_error("oracle: start index above cap");

    TruncatedChain shape;
    shape.n = n;
    shape.m_cap = m_cap;

    const auto un = static_cast<std::size_t>(n);
    std::vector<std::uint32_t> x(un);
    std::vector<std::uint32_t> next(un);
    std::vector<double> beta(un);

    // Q keeps only transitions that avoid a success by users 1..n-1; the slot
    // count to absorption solves (I - Q) t = 1.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(s * 4);
    for (std::size_t i = 0; i < s; ++i) {
        shape.decode_state(i, x);
        for (std::size_t u = 0; u < un; ++u) beta[u] = tx_probability(law, x[u]);
        for_each_subset(n, beta, [&](std::uint32_t mask, double p) {
            if (std::popcount(mask) == 1 && std::countr_zero(mask) >= 1) return;
            std::ranges::copy(x, next.begin());
            apply_mask_saturating(next, mask, m_cap);
            trips.emplace_back(static_cast<Eigen::Index>(i),
                               static_cast<Eigen::Index>(shape.state_index(next)), -p);
        });
        trips.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), 1.0);
    }
    Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
    a.setFromTriplets(trips.begin(), trips.end());
    a.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) {
        throw diagnostic_error("oracle: hitting-time system is singular");
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(s));
    Eigen::VectorXd t = lu.solve(rhs);
    if (lu.info() != Eigen::Success) {
        throw diagnostic_error("oracle: hitting-time solve failed");
    }
    std::fill(x.begin(), x.end(), m_start);
    x[0] = 0;
    return t[static_cast<Eigen::Index>(shape.state_index(x))];
}

} // namespace ebsim::oracle
