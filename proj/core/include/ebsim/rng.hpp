#pragma once

#include <cstdint>
#include <random>

namespace ebsim {

// Deterministic per-replica random stream.
//
// Contract: identical (seed, stream_id) gives a bit-identical draw sequence on
// every platform (mt19937_64 and seed_seq are fully specified by the
// standard; the derived draws below avoid every libstdc++ distribution class
// on purpose). Distinct stream_ids give statistically independent streams.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1), 53-bit resolution. Never returns 1.0, so
    // bernoulli(1.0) is always true.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform01() < p; }

    // Exact Poisson sampling (Knuth product method, chunked so the running
    // product never underflows for large means).
    std::uint64_t poisson(double mean);

    // Uniform integer in [0, n); n >= 1. Masked rejection, deterministic.
    std::uint64_t uniform_below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    std::uint64_t stream_id_;
};

} // namespace ebsim
