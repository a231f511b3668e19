#pragma once

#include "ebsim/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ebsim::oracle {

// Truncated joint chain over states (x_0, ..., x_{n-1}), 0 <= x_i <= m_cap,
// with index increments saturating at m_cap. Sparse CSR transition matrix
// built by exhaustive transmitter-subset enumeration (2^n subsets per state).
struct TruncatedChain {
    int n = 0;
    std::uint32_t m_cap = 0;
    BackoffLaw law = BackoffLaw::exponential(2.0, 0.0);

    std::vector<std::size_t> row_ptr;  // size num_states()+1
    std::vector<std::uint32_t> col;
    std::vector<double> val;

    std::size_t num_states() const;
    std::size_t state_index(std::span<const std::uint32_t> x) const;
    void decode_state(std::size_t idx, std::span<std::uint32_t> out) const;
    double row_sum(std::size_t i) const;
};

// Budget is on n * (m_cap+1)^n (working-set scale); exceeding it, or n > 10
// (2^n subset enumeration), is a resource error.
TruncatedChain build_truncated_chain(int n, std::uint32_t m_cap, const BackoffLaw& law,
                                     std::size_t budget = 4'000'000);

struct StationarySolution {
    std::vector<double> pi;
    double residual = 0.0;       // ||pi P - pi||_1
    double boundary_mass = 0.0;  // mass on states with any x_i == m_cap
    int iterations = 0;          // 0 for the direct solve
    bool direct = false;
};

// Solves pi P = pi, sum pi = 1. Direct sparse LU when the state count allows;
// otherwise (or if the direct solve reports a poor residual) lazy power
// iteration from the all-zero state followed by shift-invert refinement,
// which handles chains whose deep backoff tails make the plain balance
// system singular at working precision. Throws diagnostic_error when the
// residual cannot be brought below max(tol, 1e-9).
StationarySolution exact_stationary(const TruncatedChain& chain, double tol = 1e-12,
                                    int max_iter = 200000);

// sum_x pi(x) * success_probability(x).
double exact_throughput(const TruncatedChain& chain, std::span<const double> pi);

// Expected slots until the first success of any cohort user (users 1..n-1),
// starting from (0, m_start, ..., m_start), on the m_cap-truncated chain.
// Solves (I - Q) t = 1 over non-absorbed states; singular system -> diagnostic.
double exact_first_success_time(int n, std::uint32_t m_cap, const BackoffLaw& law,
                                std::uint32_t m_start, std::size_t budget = 4'000'000);

} // namespace ebsim::oracle
