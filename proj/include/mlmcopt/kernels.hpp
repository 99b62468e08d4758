// Markov transition kernels targeting an unnormalized density pi_theta:
// random-walk Metropolis-Hastings, the Metropolis-adjusted Langevin
// algorithm, chain simulation, and a grid-discretization oracle for testing
// invariance and detailed balance on one-dimensional targets.
//
// All density arithmetic happens in log space; acceptance is decided by
// comparing log u against the log ratio.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "mlmcopt/core.hpp"
#include "mlmcopt/rng.hpp"

namespace mlmcopt {

/// Target known up to a normalizing constant. grad_log_pdf may be empty
/// (required only by MALA).
struct TargetDensity {
    std::function<double(const Vec&)> log_pdf;
    std::function<Vec(const Vec&)> grad_log_pdf;
    int dim = 1;
};

/// Compare grad_log_pdf against central finite differences of log_pdf at
/// random probe points; returns the worst relative error seen.
inline double gradient_check(const TargetDensity& target, RngStream& stream,
                             int probes = 100, double fd_step = 1e-5) {
    if (!target.grad_log_pdf) {
        throw std::invalid_argument("gradient_check: no gradient supplied");
    }
    double worst = 0.0;
    for (int p = 0; p < probes; ++p) {
        Vec x(target.dim);
        for (auto& v : x) v = stream.normal();
        const Vec g = target.grad_log_pdf(x);
        for (int j = 0; j < target.dim; ++j) {
            Vec hi = x, lo = x;
            hi[j] += fd_step;
            lo[j] -= fd_step;
            const double fd =
                (target.log_pdf(hi) - target.log_pdf(lo)) / (2.0 * fd_step);
            const double scale = std::max({1.0, std::abs(fd), std::abs(g[j])});
            worst = std::max(worst, std::abs(fd - g[j]) / scale);
        }
    }
    return worst;
}

struct StepResult {
    Vec state;
    bool accepted = false;
};

/// One random-walk Metropolis-Hastings step with isotropic Gaussian proposal
/// of scale sigma_p: Y = x + sigma_p Z, accepted with probability
/// 1 ^ pi(Y)/pi(x).
inline StepResult rwmh_step(const Vec& x, const TargetDensity& target,
                            double sigma_p, RngStream& stream) {
    if (!(sigma_p > 0.0)) {
        throw std::invalid_argument("rwmh_step: sigma_p must be > 0");
    }
    const double lp_x = target.log_pdf(x);
    if (!std::isfinite(lp_x)) {
        throw std::runtime_error("rwmh_step: log_pdf not finite at state");
    }
    Vec y(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        y[j] = x[j] + sigma_p * stream.normal();
    }
    const double log_alpha = target.log_pdf(y) - lp_x;
    const double log_u = std::log(stream.open_uniform());
    if (log_u <= log_alpha) return StepResult{std::move(y), true};
    return StepResult{x, false};
}

/// One MALA step with step size h. The proposal is
///   Y = x - h grad U(x) + sqrt(2h) Z,  U = -log pi,
/// and acceptance uses the full Hastings correction with the Gaussian
/// proposal density N(y - h grad U(y), 2h I); only the corrected ratio leaves
/// pi invariant.
inline StepResult mala_step(const Vec& x, const TargetDensity& target,
                            double h, RngStream& stream) {
    if (!(h > 0.0)) throw std::invalid_argument("mala_step: h must be > 0");
    if (!target.grad_log_pdf) {
        throw std::invalid_argument("mala_step: target has no gradient");
    }
    const double lp_x = target.log_pdf(x);
    if (!std::isfinite(lp_x)) {
        throw std::runtime_error("mala_step: log_pdf not finite at state");
    }
    const double root = std::sqrt(2.0 * h);
    const Vec glp_x = target.grad_log_pdf(x);  // -grad U
    Vec mean_x(x.size()), y(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        mean_x[j] = x[j] + h * glp_x[j];
        y[j] = mean_x[j] + root * stream.normal();
    }
    const Vec glp_y = target.grad_log_pdf(y);
    double fwd = 0.0, bwd = 0.0;  // squared proposal residuals
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double mean_y_j = y[j] + h * glp_y[j];
        const double df = y[j] - mean_x[j];
        const double db = x[j] - mean_y_j;
        fwd += df * df;
        bwd += db * db;
    }
    // fwd == bwd exactly when the gradient vanishes, making the correction a
    // true zero and the acceptance identical to the symmetric-proposal rule.
    const double log_alpha =
        target.log_pdf(y) - lp_x + (fwd - bwd) / (4.0 * h);
    const double log_u = std::log(stream.open_uniform());
    if (log_u <= log_alpha) return StepResult{std::move(y), true};
    return StepResult{x, false};
}

/// Generic one-step transition; lets tests and optimizer problems plug in
/// kernels that are not Metropolis-type (exactly enumerable toys,
/// deterministic gradient oracles, autoregressions).
using StepFn = std::function<StepResult(const Vec&, RngStream&)>;

struct MarkovKernelSpec {
    enum class Kind { rwmh, mala, custom };
    Kind kind = Kind::rwmh;
    TargetDensity target;
    double scale = 1.0;  // sigma_p for rwmh, h for mala
    StepFn custom_step;  // used when kind == custom
};

inline StepFn make_step(const MarkovKernelSpec& spec) {
    switch (spec.kind) {
        case MarkovKernelSpec::Kind::rwmh:
            return [spec](const Vec& x, RngStream& s) {
                return rwmh_step(x, spec.target, spec.scale, s);
            };
        case MarkovKernelSpec::Kind::mala:
            return [spec](const Vec& x, RngStream& s) {
                return mala_step(x, spec.target, spec.scale, s);
            };
        case MarkovKernelSpec::Kind::custom:
            if (!spec.custom_step) {
                throw std::invalid_argument("make_step: missing custom step");
            }
            return spec.custom_step;
    }
    throw std::invalid_argument("make_step: unknown kernel kind");
}

struct Trajectory {
    std::vector<Vec> states;
    std::uint64_t accept_count = 0;
};

/// Simulate exactly len states, the first being x0.
inline Trajectory simulate_chain(const StepFn& step, const Vec& x0,
                                 std::uint64_t len, RngStream& stream) {
    if (len < 1) throw std::invalid_argument("simulate_chain: len must be >= 1");
    Trajectory traj;
    traj.states.reserve(len);
    traj.states.push_back(x0);
    for (std::uint64_t i = 1; i < len; ++i) {
        StepResult r = step(traj.states.back(), stream);
        traj.accept_count += r.accepted ? 1 : 0;
        traj.states.push_back(std::move(r.state));
    }
    return traj;
}

inline Trajectory simulate_chain(const MarkovKernelSpec& spec, const Vec& x0,
                                 std::uint64_t len, RngStream& stream) {
    return simulate_chain(make_step(spec), x0, len, stream);
}

/// Row-stochastic discretization of a 1D Metropolis kernel on a sorted grid.
/// Off-diagonal entries integrate proposal density times acceptance over the
/// destination cell (midpoint rule); the diagonal absorbs the rejection mass
/// and any proposal mass falling outside the grid.
inline std::vector<std::vector<double>> transition_matrix_oracle(
    const MarkovKernelSpec& spec, const std::vector<double>& grid) {
    if (spec.kind == MarkovKernelSpec::Kind::custom) {
        throw std::invalid_argument(
            "transition_matrix_oracle: custom kernels unsupported");
    }
    if (spec.target.dim != 1) {
        throw std::invalid_argument(
            "transition_matrix_oracle: target must be 1-dimensional");
    }
    const std::size_t n = grid.size();
    if (n < 3) {
        throw std::invalid_argument("transition_matrix_oracle: grid too small");
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (!(grid[i] > grid[i - 1])) {
            throw std::invalid_argument(
                "transition_matrix_oracle: grid must be sorted");
        }
    }

    const bool is_mala = spec.kind == MarkovKernelSpec::Kind::mala;
    const double h = spec.scale;
    const double prop_var = is_mala ? 2.0 * h : spec.scale * spec.scale;

    auto drift_mean = [&](double x) {
        if (!is_mala) return x;
        return x + h * spec.target.grad_log_pdf(Vec{x})[0];
    };
    auto log_prop = [&](double from, double to) {
        const double r = to - drift_mean(from);
        return -0.5 * r * r / prop_var;  // up to a constant, cancels in ratio
    };

    std::vector<double> lp(n), cell(n);
    for (std::size_t i = 0; i < n; ++i) lp[i] = spec.target.log_pdf(Vec{grid[i]});
    for (std::size_t i = 0; i < n; ++i) {
        const double lo = i == 0 ? grid[0] : 0.5 * (grid[i - 1] + grid[i]);
        const double hi =
            i + 1 == n ? grid[n - 1] : 0.5 * (grid[i] + grid[i + 1]);
        cell[i] = hi - lo;
    }

    const double norm_const = 1.0 / std::sqrt(2.0 * std::numbers::pi * prop_var);
    std::vector<std::vector<double>> P(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        double off = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double log_ratio =
                lp[j] - lp[i] + log_prop(grid[j], grid[i]) -
                log_prop(grid[i], grid[j]);
            const double alpha = std::min(1.0, std::exp(log_ratio));
            const double q_ij =
                norm_const * std::exp(log_prop(grid[i], grid[j]));
            P[i][j] = q_ij * alpha * cell[j];
            off += P[i][j];
        }
        P[i][i] = std::max(0.0, 1.0 - off);
    }
    return P;
}

/// Grid probability vector proportional to the target, cell-weighted.
inline std::vector<double> grid_density(const TargetDensity& target,
                                        const std::vector<double>& grid) {
    const std::size_t n = grid.size();
    std::vector<double> pi(n);
    double maxlp = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        pi[i] = target.log_pdf(Vec{grid[i]});
        maxlp = std::max(maxlp, pi[i]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lo = i == 0 ? grid[0] : 0.5 * (grid[i - 1] + grid[i]);
        const double hi =
            i + 1 == n ? grid[n - 1] : 0.5 * (grid[i] + grid[i + 1]);
        pi[i] = std::exp(pi[i] - maxlp) * (hi - lo);
        z += pi[i];
    }
    for (auto& v : pi) v /= z;
    return pi;
}

}  // namespace mlmcopt
