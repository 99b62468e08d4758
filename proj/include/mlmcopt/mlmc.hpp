// Multilevel Monte Carlo gradient estimation over Markov chain prefixes.
//
// A level K is drawn from a non-increasing pmf mu over {1, 2, ...} (the
// geometric(1/2) law in all optimizer wiring). The level span tau(K) = 1/mu(K)
// determines how many chain states the estimator consumes: a full prefix of
// floor(tau(K)) states when floor(tau(K)) <= T, a single state otherwise. The
// estimate combines the first-state update with a span-weighted difference of
// partial means, so that averaging over K reproduces the plain ergodic mean
// over floor(tau(kmax)) states exactly while the *expected* number of states
// consumed stays logarithmic in T.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmcopt/core.hpp"
#include "mlmcopt/rng.hpp"

namespace mlmcopt {

/// Distribution of the correction level K. Either geometric(q) on {1,2,...}
/// or an explicit finite pmf on {1..m}; the pmf must be non-increasing.
class LevelDistribution {
public:
    static LevelDistribution geometric(double q = 0.5) {
        if (!(q > 0.0 && q < 1.0)) {
            throw std::domain_error("LevelDistribution: q must be in (0,1)");
        }
        LevelDistribution d;
        d.q_ = q;
        return d;
    }

    static LevelDistribution finite(std::vector<double> pmf) {
        if (pmf.empty()) {
            throw std::domain_error("LevelDistribution: empty pmf");
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < pmf.size(); ++i) {
            if (pmf[i] < 0.0) {
                throw std::domain_error("LevelDistribution: negative mass");
            }
            if (i > 0 && pmf[i] > pmf[i - 1]) {
                throw std::domain_error(
                    "LevelDistribution: pmf must be non-increasing");
            }
            sum += pmf[i];
        }
        if (std::abs(sum - 1.0) > 1e-12) {
            throw std::domain_error(
                "LevelDistribution: pmf must sum to 1 (got " +
                std::to_string(sum) + ")");
        }
        LevelDistribution d;
        d.pmf_ = std::move(pmf);
        return d;
    }

    bool is_geometric() const { return pmf_.empty(); }
    double geometric_q() const { return q_; }

    /// Largest level with positive mass; unbounded for geometric.
    std::uint64_t support_max() const {
        if (is_geometric()) return std::numeric_limits<std::uint64_t>::max();
        std::uint64_t m = pmf_.size();
        while (m > 0 && pmf_[m - 1] == 0.0) --m;
        return m;
    }

    /// mu(k) for k >= 1.
    double mass(std::uint64_t k) const {
        if (k < 1) throw std::domain_error("mass: k must be >= 1");
        if (is_geometric()) {
            return q_ * std::pow(1.0 - q_, static_cast<double>(k - 1));
        }
        if (k > pmf_.size()) return 0.0;
        return pmf_[k - 1];
    }

    /// P[K > k], computed without cancellation for the geometric case.
    double tail_mass(std::uint64_t k) const {
        if (is_geometric()) {
            return std::pow(1.0 - q_, static_cast<double>(k));
        }
        double t = 0.0;
        for (std::uint64_t j = pmf_.size(); j > k; --j) t += pmf_[j - 1];
        return t;
    }

    /// Level span tau(k) = 1/mu(k), with tau(0) = max(1, 1/(2 mu(1))) so that
    /// the sequence is non-decreasing. Equals 2^k for geometric(1/2).
    double tau(std::uint64_t k) const {
        if (k == 0) return std::max(1.0, 1.0 / (2.0 * mass(1)));
        const double m = mass(k);
        if (m <= 0.0 || k > support_max()) {
            throw std::domain_error("tau: level " + std::to_string(k) +
                                    " outside support");
        }
        return 1.0 / m;
    }

    /// Largest level whose floored span fits under the truncation bound:
    /// kmax = max{k : floor(tau(k)) <= T}. floor(log2 T) for geometric(1/2).
    std::uint64_t max_level(double T) const {
        if (std::floor(tau(1)) > T) {
            throw std::invalid_argument(
                "max_level: T must be >= floor(tau(1))");
        }
        std::uint64_t k = 1;
        while (k < support_max() && std::floor(tau(k + 1)) <= T) ++k;
        return k;
    }

    /// Sample K ~ mu. Exact bit-level sampling for geometric(1/2).
    std::uint64_t sample(RngStream& stream) const {
        if (is_geometric()) {
            if (q_ == 0.5) return stream.geometric_half();
            const double u = stream.open_uniform();
            return 1 + static_cast<std::uint64_t>(
                           std::floor(std::log(u) / std::log(1.0 - q_)));
        }
        const double u = stream.uniform();
        double acc = 0.0;
        for (std::uint64_t k = 1; k <= pmf_.size(); ++k) {
            acc += pmf_[k - 1];
            if (u < acc) return k;
        }
        return support_max();
    }

private:
    LevelDistribution() = default;
    double q_ = 0.5;
    std::vector<double> pmf_;  // empty => geometric(q_)
};

/// One sampled level, with the spans needed to form the estimator.
struct LevelDraw {
    std::uint64_t level = 1;   // K >= 1
    double span = 2.0;         // tau(K)
    double span_prev = 1.0;    // tau(K-1)

    bool truncated_at(double T) const { return std::floor(span) > T; }

    /// Chain states the estimator will consume under truncation bound T.
    std::uint64_t states_needed(double T) const {
        return truncated_at(T) ? 1
                               : static_cast<std::uint64_t>(std::floor(span));
    }
};

inline LevelDraw sample_level(const LevelDistribution& dist,
                              RngStream& stream) {
    const std::uint64_t k = dist.sample(stream);
    return LevelDraw{k, dist.tau(k), dist.tau(k - 1)};
}

/// Bounded update function H_theta(x). The bound G is part of the contract:
/// outputs are clipped entrywise to [-G, G] at evaluation, so the sup-norm
/// assumption holds by construction and is checkable.
template <typename State>
struct GradFn {
    std::function<Vec(const ParamVector&, const State&)> fn;
    double bound = 1.0;  // G > 0

    Vec operator()(const ParamVector& theta, const State& x) const {
        Vec g = fn(theta, x);
        for (double& v : g) {
            v = std::clamp(v, -bound, bound);
        }
        return g;
    }
};

/// Mean of the first floor(r) entries, r >= 1.
inline Vec partial_mean(std::span<const Vec> values, double r) {
    if (r < 1.0) throw std::domain_error("partial_mean: r must be >= 1");
    const std::size_t n = static_cast<std::size_t>(std::floor(r));
    if (values.size() < n) {
        throw std::length_error("partial_mean: need " + std::to_string(n) +
                                " values, have " +
                                std::to_string(values.size()));
    }
    Vec out(values[0].size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        check_same_dim(out, values[i], "partial_mean");
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += values[i][j];
    }
    for (double& v : out) v /= static_cast<double>(n);
    return out;
}

struct MlmcEstimate {
    Vec estimate;
    std::uint64_t used_len = 1;  // chain states consumed
};

namespace detail {

template <typename State>
std::vector<Vec> eval_updates(const GradFn<State>& grad,
                              const ParamVector& theta,
                              std::span<const State> chain, std::size_t n) {
    if (chain.size() < n) {
        throw std::length_error("mlmc: chain has " +
                                std::to_string(chain.size()) +
                                " states, need " + std::to_string(n));
    }
    std::vector<Vec> h;
    h.reserve(n);
    for (std::size_t i = 0; i < n; ++i) h.push_back(grad(theta, chain[i]));
    return h;
}

}  // namespace detail

/// The multilevel estimate on a materialized chain prefix:
///   H(X_1) + tau(K) * { mean over floor(tau(K)) - mean over floor(tau(K-1)) }
/// when floor(tau(K)) <= T; the bare first-state update otherwise.
template <typename State>
MlmcEstimate mlmc_estimate(const GradFn<State>& grad, const ParamVector& theta,
                           std::span<const State> chain, const LevelDraw& draw,
                           double T) {
    if (!(draw.span_prev < draw.span)) {
        throw std::domain_error("mlmc_estimate: spans must be increasing");
    }
    if (draw.truncated_at(T)) {
        auto h = detail::eval_updates(grad, theta, chain, 1);
        return MlmcEstimate{std::move(h[0]), 1};
    }
    const auto n_k = static_cast<std::size_t>(std::floor(draw.span));
    auto h = detail::eval_updates(grad, theta, chain, n_k);
    const Vec mean_k = partial_mean(h, draw.span);
    const Vec mean_km1 = partial_mean(h, draw.span_prev);
    Vec est = h[0];
    for (std::size_t j = 0; j < est.size(); ++j) {
        est[j] += draw.span * (mean_k[j] - mean_km1[j]);
    }
    return MlmcEstimate{std::move(est), n_k};
}

/// Average of the level-k estimates over mu, holding the chain fixed. By the
/// telescoping identity this equals partial_mean at tau(kmax) exactly, which
/// is what makes the estimator conditionally unbiased for the truncated mean.
template <typename State>
Vec mixture_mean(const GradFn<State>& grad, const ParamVector& theta,
                 std::span<const State> chain, const LevelDistribution& dist,
                 double T) {
    const std::uint64_t kmax = dist.max_level(T);
    const auto n_max = static_cast<std::size_t>(std::floor(dist.tau(kmax)));
    auto h = detail::eval_updates(grad, theta, chain, n_max);

    Vec acc(h[0].size(), 0.0);
    for (std::uint64_t k = 1; k <= kmax; ++k) {
        const LevelDraw draw{k, dist.tau(k), dist.tau(k - 1)};
        const auto n_k = static_cast<std::size_t>(std::floor(draw.span));
        const Vec mean_k = partial_mean(std::span<const Vec>(h).first(n_k),
                                        draw.span);
        const Vec mean_km1 = partial_mean(std::span<const Vec>(h).first(n_k),
                                          draw.span_prev);
        const double mu_k = dist.mass(k);
        for (std::size_t j = 0; j < acc.size(); ++j) {
            acc[j] += mu_k * (h[0][j] + draw.span * (mean_k[j] - mean_km1[j]));
        }
    }
    // Levels beyond kmax are truncated to the bare first-state update.
    const double tail = dist.tail_mass(kmax);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += tail * h[0][j];
    return acc;
}

/// Exact expected number of chain states a single estimate consumes:
///   sum_{k<=kmax} mu(k) floor(tau(k)) + P[K > kmax] * 1.
inline double expected_cost(const LevelDistribution& dist, double T) {
    const std::uint64_t kmax = dist.max_level(T);
    double cost = 0.0;
    for (std::uint64_t k = 1; k <= kmax; ++k) {
        cost += dist.mass(k) * std::floor(dist.tau(k));
    }
    return cost + dist.tail_mass(kmax);
}

}  // namespace mlmcopt
