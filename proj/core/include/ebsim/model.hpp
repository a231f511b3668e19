#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace ebsim {

enum class LawKind { Exponential, Polynomial };

// Per-index transmission probability law.
//   Exponential: beta(i) = b^(-i-i0),   b > 1, i0 >= 0
//   Polynomial:  beta(i) = (i+1)^(-alpha), alpha > 0 (comparison runs only)
class BackoffLaw {
public:
    static BackoffLaw exponential(double b, double i0);
    static BackoffLaw polynomial(double alpha);

    LawKind kind() const { return kind_; }
    double base() const { return b_; }      // Exponential only
    double offset() const { return i0_; }   // Exponential only
    double exponent() const { return alpha_; }  // Polynomial only

    // In (0, 1] for every index; strictly decreasing in index.
    double tx_probability(std::uint32_t index) const;

private:
    BackoffLaw(LawKind kind, double b, double i0, double alpha)
        : kind_(kind), b_(b), i0_(i0), alpha_(alpha) {}

    LawKind kind_;
    double b_;
    double i0_;
    double alpha_;
};

inline double tx_probability(const BackoffLaw& law, std::uint32_t index) {
    return law.tx_probability(index);
}

// Per-user backoff indices. Storage is per-user (identity = position); sorted
// views are produced on demand for reporting only.
class SystemState {
public:
    explicit SystemState(std::vector<std::uint32_t> indices);
    static SystemState zeros(int n);
    // (0, m, m, ..., m): user 0 fresh, cohort users 1..n-1 at offset m.
    static SystemState cohort_start(int n, std::uint32_t m);

    int num_users() const { return static_cast<int>(indices_.size()); }
    std::uint32_t index_of(int user) const;
    std::span<const std::uint32_t> indices() const { return indices_; }
    std::vector<std::uint32_t> sorted_view() const;

    friend std::pair<SystemState, struct SlotOutcome> resolve_slot(SystemState state,
                                                                   std::span<const int> transmitters);
    bool operator==(const SystemState&) const = default;

private:
    std::vector<std::uint32_t> indices_;
};

enum class OutcomeKind { Idle, Success, Collision };

struct SlotOutcome {
    OutcomeKind kind = OutcomeKind::Idle;
    int success_user = -1;          // valid iff kind == Success
    std::vector<int> transmitters;  // valid iff kind == Collision (sorted, size >= 2)

    static SlotOutcome idle() { return {}; }
    static SlotOutcome success(int user) { return {OutcomeKind::Success, user, {}}; }
    static SlotOutcome collision(std::vector<int> users) {
        return {OutcomeKind::Collision, -1, std::move(users)};
    }
    bool operator==(const SlotOutcome&) const = default;
};

// One slot of the protocol: empty set -> Idle (state unchanged); singleton
// {u} -> Success(u), u's index reset to 0; >= 2 transmitters -> Collision,
// each transmitter's index incremented, non-transmitters unchanged.
std::pair<SystemState, SlotOutcome> resolve_slot(SystemState state,
                                                 std::span<const int> transmitters);

// Pr(exactly one user transmits) = sum_u beta(x_u) prod_{v != u} (1 - beta(x_v)).
double success_probability(const SystemState& state, const BackoffLaw& law);

// Pr(no user transmits) = prod_u (1 - beta(x_u)).
double idle_probability(const SystemState& state, const BackoffLaw& law);

// Pr(at least one user in `subset` transmits); subset must be nonempty.
double any_tx_probability(const SystemState& state, const BackoffLaw& law,
                          std::span<const int> subset);

namespace detail {

// Shared slot semantics for the hot simulation loops: applies one slot's
// transmitter set to raw indices. Returns the outcome kind; success_user is
// set iff Success. Caller guarantees transmitter ids are valid and unique.
OutcomeKind apply_slot(std::span<std::uint32_t> indices, std::span<const int> transmitters,
                       int& success_user);

} // namespace detail

} // namespace ebsim
