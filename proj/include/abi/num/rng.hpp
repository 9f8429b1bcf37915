#pragma once

#include <cstdint>
#include <stdexcept>

#include "abi/num/tensor.hpp"

namespace abi::num {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

// Counter-addressed PCG32 generator. A stream is identified by (seed,
// stream_id); the draw counter advances with every raw draw. spawn(key) is a
// pure function of (seed, stream_id, counter, key), so children derived at the
// same point are identical whether or not other streams were used in between.
// fork(key) additionally advances this stream, so successive forks with the
// same key differ.
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}

    RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {
        inc_ = (stream_id << 1) | 1ULL;
        state_ = 0;
        step();
        state_ += seed;
        step();
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }
    std::uint64_t counter() const { return counter_; }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        step();
        ++counter_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18) ^ old) >> 27);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // 53-bit mantissa uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, cosine branch only so the draw count per call is fixed.
    double normal() {
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential(double rate) {
        if (!(rate > 0)) throw std::invalid_argument("exponential: rate must be positive");
        return -std::log(1.0 - uniform()) / rate;
    }

    // Uniform integer in [lo, hi); rejection keeps it unbiased.
    std::int64_t randint(std::int64_t lo, std::int64_t hi) {
        if (lo >= hi) throw std::invalid_argument("randint: empty range");
        std::uint64_t range = static_cast<std::uint64_t>(hi - lo);
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return lo + static_cast<std::int64_t>(r % range);
    }

    // Pure derivation: does not disturb this stream.
    RngStream spawn(std::uint64_t key) const {
        std::uint64_t h = detail::splitmix64(seed_);
        h = detail::splitmix64(h ^ stream_id_);
        h = detail::splitmix64(h ^ counter_);
        h = detail::splitmix64(h ^ key);
        return RngStream(h, detail::splitmix64(h ^ 0x6a09e667f3bcc909ULL));
    }

    // Derivation that advances this stream, so repeated forks differ.
    RngStream fork(std::uint64_t key) {
        RngStream child = spawn(key);
        next_u32();
        return child;
    }

private:
    void step() { state_ = state_ * 6364136223846793005ULL + inc_; }

    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 1;
    std::uint64_t seed_ = 0;
    std::uint64_t stream_id_ = 0;
    std::uint64_t counter_ = 0;
};

// Tensor fillers draw in flat row-major order.

template <typename S>
Tensor<S> randn(RngStream& rng, Shape shape) {
    Tensor<S> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = static_cast<S>(rng.normal());
    return t;
}

template <typename S>
Tensor<S> rand_uniform(RngStream& rng, Shape shape, double lo = 0.0, double hi = 1.0) {
    Tensor<S> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

// Fisher-Yates permutation of 0..n-1.
inline std::vector<std::int64_t> rand_permutation(RngStream& rng, std::int64_t n) {
    std::vector<std::int64_t> p(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = n - 1; i > 0; --i) std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(rng.randint(0, i + 1))]);
    return p;
}

}  // namespace abi::num
