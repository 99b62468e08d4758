// Shared numeric types and run bookkeeping.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmcopt/rng.hpp"

namespace mlmcopt {

/// Dense parameter vector theta in R^d. Dimension is fixed for the lifetime
/// of a run; all entries stay finite.
using ParamVector = std::vector<double>;
using Vec = std::vector<double>;

inline bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline double squared_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline double norm(std::span<const double> v) {
    return std::sqrt(squared_norm(v));
}

inline double inf_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline void check_same_dim(std::span<const double> a, std::span<const double> b,
                           const char* what) {
    if (a.size() != b.size()) {
        throw std::length_error(std::string(what) + ": dimension mismatch");
    }
}

/// Numerically careful sum: pairwise reduction, order independent of any
/// threading of the producer loop.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Per-iteration log entry of an optimizer run. cumulative_cost counts chain
/// states consumed (one kernel transition evaluation per state beyond the
/// first), the unit in which the expected per-iteration cost is O(log T).
struct RunRecord {
    std::uint64_t iteration = 0;
    ParamVector theta;
    Vec grad_estimate;
    std::uint64_t level = 0;
    std::uint64_t chain_len = 1;
    std::uint64_t cumulative_cost = 0;
    std::optional<double> true_grad_sq_norm;
};

}  // namespace mlmcopt
