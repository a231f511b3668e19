#include "ebsim/model.hpp"

#include "ebsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ebsim {

BackoffLaw BackoffLaw::exponential(double b, double i0) {
    if (!(b > 1.0) || !std::isfinite(b))
        throw param_error("BackoffLaw: exponential base must satisfy b > 1");
    if (!(i0 >= 0.0) || !std::isfinite(i0))
        throw param_error("BackoffLaw: offset i0 must satisfy i0 >= 0");
    return BackoffLaw(LawKind::Exponential, b, i0, 0.0);
}

BackoffLaw BackoffLaw::polynomial(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw param_error("BackoffLaw: polynomial exponent must satisfy alpha > 0");
    return BackoffLaw(LawKind::Polynomial, 0.0, 0.0, alpha);
}

double BackoffLaw::tx_probability(std::uint32_t index) const {
    if (kind_ == LawKind::Exponential)
        return std::pow(b_, -static_cast<double>(index) - i0_);
    return std::pow(static_cast<double>(index) + 1.0, -alpha_);
}

SystemState::SystemState(std::vector<std::uint32_t> indices) : indices_(std::move(indices)) {
    if (indices_.size() < 2) throw param_error("SystemState: need at least 2 users");
}

SystemState SystemState::zeros(int n) {
    if (n < 2) throw param_error("SystemState: need at least 2 users");
    return SystemState(std::vector<std::uint32_t>(static_cast<std::size_t>(n), 0u));
}

SystemState SystemState::cohort_start(int n, std::uint32_t m) {
    if (n < 2) throw param_error("SystemState: need at least 2 users");
    std::vector<std::uint32_t> v(static_cast<std::size_t>(n), m);
    v[0] = 0;
    return SystemState(std::move(v));
}

std::uint32_t SystemState::index_of(int user) const {
    if (user < 0 || user >= num_users()) throw param_error("SystemState: user id out of range");
    return indices_[static_cast<std::size_t>(user)];
}

std::vector<std::uint32_t> SystemState::sorted_view() const {
    std::vector<std::uint32_t> v = indices_;
    std::sort(v.begin(), v.end());
    return v;
}

namespace detail {

OutcomeKind apply_slot(std::span<std::uint32_t> indices, std::span<const int> transmitters,
                       int& success_user) {
    success_user = -1;
    if (transmitters.empty()) return OutcomeKind::Idle;
    if (transmitters.size() == 1) {
        success_user = transmitters[0];
        indices[static_cast<std::size_t>(success_user)] = 0;
        return OutcomeKind::Success;
    }
    for (int u : transmitters) ++indices[static_cast<std::size_t>(u)];
    return OutcomeKind::Collision;
}

} // namespace detail

std::pair<SystemState, SlotOutcome> resolve_slot(SystemState state,
                                                 std::span<const int> transmitters) {
    const int n = state.num_users();
    std::vector<int> tx(transmitters.begin(), transmitters.end());
    std::sort(tx.begin(), tx.end());
    for (std::size_t i = 0; i < tx.size(); ++i) {
        if (tx[i] < 0 || tx[i] >= n)
            throw param_error("resolve_slot: user id " + std::to_string(tx[i]) + " out of range");
        if (i > 0 && tx[i] == tx[i - 1])
            throw param_error("resolve_slot: duplicate user id in transmitter set");
    }
    int success_user = -1;
    const OutcomeKind kind = detail::apply_slot(state.indices_, tx, success_user);
    SlotOutcome outcome;
    switch (kind) {
        case OutcomeKind::Idle: outcome = SlotOutcome::idle(); break;
        case OutcomeKind::Success: outcome = SlotOutcome::success(success_user); break;
        case OutcomeKind::Collision: outcome = SlotOutcome::collision(std::move(tx)); break;
    }
    return {std::move(state), std::move(outcome)};
}

double success_probability(const SystemState& state, const BackoffLaw& law) {
    const auto xs = state.indices();
    double total = 0.0;
    for (std::size_t u = 0; u < xs.size(); ++u) {
        double term = law.tx_probability(xs[u]);
        for (std::size_t v = 0; v < xs.size(); ++v) {
            if (v == u) continue;
            term *= 1.0 - law.tx_probability(xs[v]);
        }
        total += term;
    }
    return std::min(total, 1.0);
}

double idle_probability(const SystemState& state, const BackoffLaw& law) {
    double prod = 1.0;
    for (std::uint32_t x : state.indices()) prod *= 1.0 - law.tx_probability(x);
    return prod;
}

double any_tx_probability(const SystemState& state, const BackoffLaw& law,
                          std::span<const int> subset) {
    if (subset.empty()) throw param_error("any_tx_probability: empty subset");
    double silent = 1.0;
    for (int u : subset) silent *= 1.0 - law.tx_probability(state.index_of(u));
    return 1.0 - silent;
}

} // namespace ebsim
