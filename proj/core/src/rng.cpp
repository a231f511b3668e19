#include "ebsim/rng.hpp"

#include "ebsim/errors.hpp"

#include <bit>
#include <cmath>

namespace ebsim {

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(seed & 0xffffffffu),
        static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(stream_id & 0xffffffffu),
        static_cast<std::uint32_t>(stream_id >> 32),
        0x9e3779b9u,
    };
    engine_.seed(seq);
}

std::uint64_t RngStream::poisson(double mean) {
    if (mean < 0.0 || !std::isfinite(mean)) throw param_error("poisson: mean must be finite and >= 0");
    // Chunked Knuth: split the mean into pieces <= 16 and sum independent
    // draws, so exp(-chunk) never underflows for large means.
    std::uint64_t total = 0;
    double remaining = mean;
    while (remaining > 0.0) {
        const double chunk = remaining > 16.0 ? 16.0 : remaining;
        remaining -= chunk;
        const double limit = std::exp(-chunk);
        std::uint64_t k = 0;
        double prod = uniform01();
        while (prod > limit) {
            ++k;
            prod *= uniform01();
        }
        total += k;
    }
    return total;
}

std::uint64_t RngStream::uniform_below(std::uint64_t n) {
    if (n == 0) throw param_error("uniform_below: n must be >= 1");
    if (n == 1) return 0;
    const std::uint64_t mask = std::bit_ceil(n) - 1;
    std::uint64_t v;
    do {
        v = engine_() & mask;
    } while (v >= n);
    return v;
}

} // namespace ebsim
