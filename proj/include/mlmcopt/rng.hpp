// Counter-based splittable random number stream.
//
// Each stream is identified by a (seed, stream_id) pair. The generator is a
// keyed Weyl sequence passed through the SplitMix64 finalizer (Steele, Lea,
// Flood 2014; Vigna 2015): output(i) = mix64(key + i * gamma), where key and
// gamma are both derived from (seed, stream_id) and gamma is odd. Streams
// with distinct stream_ids have distinct keys and increments, so replicate r
// of an experiment can simply use stream_id = r and draw independently of
// every other replicate, with no sequential coupling between streams.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace mlmcopt {

namespace detail {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer; bijective on 64-bit words.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Variant finalizer used for increment derivation (MurmurHash3 constants).
inline constexpr std::uint64_t mix64_variant(std::uint64_t z) {
    z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
    z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
    return z ^ (z >> 33);
}

// Derive an odd Weyl increment with enough bit transitions, as in
// java.util.SplittableRandom.
inline constexpr std::uint64_t mix_gamma(std::uint64_t z) {
    z = mix64_variant(z) | 1ULL;
    if (std::popcount(z ^ (z >> 1)) < 24) {
        z ^= 0xAAAAAAAAAAAAAAAAULL;
    }
    return z;
}

}  // namespace detail

class RngStream {
public:
    RngStream() : RngStream(0, 0) {}

    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed),
          stream_id_(stream_id),
          key_(detail::mix64(seed + detail::kGoldenGamma) ^
               detail::mix64(stream_id + 0x6A09E667F3BCC909ULL)),
          gamma_(detail::mix_gamma(key_ ^ detail::mix64_variant(stream_id))),
          counter_(0) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    std::uint64_t next_u64() {
        ++counter_;
        return detail::mix64(key_ + counter_ * gamma_);
    }

    /// Uniform draw in [0, 1), 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform draw in (0, 1]; safe under log().
    double open_uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; consumes exactly two words.
    double normal() {
        const double u1 = open_uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Geometric(1/2) level draw on {1, 2, ...}, P[K = k] = 2^{-k}.
    /// Uses the raw bits as fair coin flips, so the pmf is exact.
    std::uint64_t geometric_half() {
        std::uint64_t base = 1;
        for (;;) {
            const std::uint64_t x = next_u64();
            if (x != 0) return base + std::countr_zero(x);
            base += 64;
        }
    }

    /// Uniform index in {0, ..., n-1}.
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw std::domain_error("uniform_index: n must be >= 1");
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) %
               n;
    }

    /// Categorical draw from normalized probabilities (inverse cdf walk).
    std::size_t categorical(std::span<const double> probs) {
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return probs.empty() ? 0 : probs.size() - 1;
    }

    friend bool operator==(const RngStream&, const RngStream&) = default;

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t gamma_;
    std::uint64_t counter_;
};

inline RngStream make_stream(std::uint64_t seed, std::uint64_t stream_id) {
    return RngStream(seed, stream_id);
}

/// n i.i.d. standard normal draws; advances the stream.
inline std::vector<double> standard_normal(RngStream& stream, std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = stream.normal();
    return out;
}

}  // namespace mlmcopt
