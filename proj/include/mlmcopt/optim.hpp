// Schedules, diagonal preconditioners, and the multilevel adaptive SGD loop.
//
// Each iteration draws a level K ~ geometric(1/2), simulates exactly the
// chain prefix the estimator needs (never the full truncation span), forms
// the multilevel gradient estimate, updates the preconditioner, and moves
//   theta_{n+1} = theta_n - gamma_{n+1} * A_n .* drift.
// The convergence guarantees are stated for a randomly selected iterate
// theta_R with P[R = n] proportional to gamma_{n+1} lambda_{n+1}, where the
// lambda sequence is the optimizer-specific spectral floor.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmcopt/core.hpp"
#include "mlmcopt/kernels.hpp"
#include "mlmcopt/mlmc.hpp"
#include "mlmcopt/rng.hpp"

namespace mlmcopt {

/// Power-law schedules:
///   gamma_n = c_gamma * n^{-gamma_exp}        (step size, non-increasing)
///   T_n     = max(2, ceil(c_T * n^{alpha_exp}))  (truncation, non-decreasing)
///   eps_n   = c_eps * n^{eps_exp}             (regularizer, non-decreasing)
///   M_{n-1} = c_M * n^{M_exp}                 (clipping threshold)
/// The floor T_n >= 2 keeps every truncation bound above floor(tau(1)).
struct ScheduleSpec {
    double c_gamma = 0.001;
    double gamma_exp = 0.5;
    double c_T = 1.0;
    double alpha_exp = 0.5;
    double c_eps = 1.0;
    double eps_exp = 0.0;
    double c_M = 1.0;
    double M_exp = 0.0;
};

struct ScheduleValues {
    double gamma_n = 0.0;
    double T_n = 2.0;    // integral value
    double eps_n = 1.0;  // epsilon_n
    double M_nm1 = 1.0;  // M_{n-1}
};

inline ScheduleValues schedule_eval(const ScheduleSpec& s, std::uint64_t n) {
    if (n < 1) throw std::domain_error("schedule_eval: n must be >= 1");
    const double nd = static_cast<double>(n);
    ScheduleValues v;
    v.gamma_n = s.c_gamma * std::pow(nd, -s.gamma_exp);
    v.T_n = std::max(2.0, std::ceil(s.c_T * std::pow(nd, s.alpha_exp)));
    v.eps_n = s.c_eps * std::pow(nd, s.eps_exp);
    v.M_nm1 = s.c_M * std::pow(nd, s.M_exp);
    return v;
}

enum class OptimizerKind { identity, adagrad, amsgrad };

/// Exponent pair for the generic preconditioned analysis: spectral floor
/// lambda_min(A_n) ~ n^{lower} and ceiling lambda_max(A_n) ~ n^{upper}.
struct GenericSpectralExponents {
    double lower = 0.0;
    double upper = 0.0;
};

/// Check the exponent inequality the convergence rates require, plus basic
/// positivity and monotonicity of the schedules. Violations are returned as
/// data, one message each.
inline std::vector<std::string> validate_schedule(
    const ScheduleSpec& s, OptimizerKind kind,
    GenericSpectralExponents generic = {}) {
    std::vector<std::string> v;
    auto fail = [&](std::string msg) { v.push_back(std::move(msg)); };

    if (!(s.c_gamma > 0.0)) fail("schedule.c_gamma must be > 0");
    if (!(s.c_T > 0.0)) fail("schedule.c_T must be > 0");
    if (!(s.c_eps > 0.0)) fail("schedule.c_eps must be > 0");
    if (!(s.c_M > 0.0)) fail("schedule.c_M must be > 0");
    if (!(s.alpha_exp > 0.0)) {
        fail("schedule.alpha_exp must be > 0 (T_n must grow)");
    }
    if (s.gamma_exp < 0.0) {
        fail("schedule.gamma_exp must be >= 0 (gamma_n non-increasing)");
    }
    if (s.eps_exp < 0.0) {
        fail("schedule.eps_exp must be >= 0 (eps_n non-decreasing)");
    }

    auto num = [](double x) { return std::to_string(x); };
    switch (kind) {
        case OptimizerKind::identity:
            if (!(s.gamma_exp + generic.lower < 1.0)) {
                fail("generic rate condition gamma + lambda_lower < 1 "
                     "violated: " +
                     num(s.gamma_exp) + " + " + num(generic.lower) + " >= 1");
            }
            break;
        case OptimizerKind::adagrad:
            if (!(s.gamma_exp + s.M_exp < 1.0 + s.eps_exp)) {
                fail("adagrad rate condition gamma + M < 1 + eps violated: " +
                     num(s.gamma_exp) + " + " + num(s.M_exp) +
                     " >= 1 + " + num(s.eps_exp));
            }
            break;
        case OptimizerKind::amsgrad:
            if (!(2.0 * s.gamma_exp + s.eps_exp < 2.0)) {
                fail("amsgrad rate condition 2*gamma + eps < 2 violated: 2*" +
                     num(s.gamma_exp) + " + " + num(s.eps_exp) + " >= 2");
            }
            break;
    }
    return v;
}

/// Adagrad accumulator: running sum of clipped squared estimate entries.
struct AdagradState {
    Vec accum;
    std::uint64_t count = 0;

    explicit AdagradState(std::size_t dim = 0) : accum(dim, 0.0) {}
};

/// One Adagrad update. Entrywise:
///   accum += min(estimate^2, M_n^2)
///   A = (eps_{n+1}^{-2} + accum / count)^{-1/2}
/// Returns the preconditioner diagonal; the state is advanced in place.
inline Vec adagrad_update(AdagradState& state, const Vec& estimate,
                          double eps_np1, double M_n) {
    if (!(eps_np1 > 0.0)) {
        throw std::domain_error("adagrad_update: eps must be > 0");
    }
    if (!(M_n > 0.0)) throw std::domain_error("adagrad_update: M must be > 0");
    if (state.accum.empty()) state.accum.assign(estimate.size(), 0.0);
    check_same_dim(state.accum, estimate, "adagrad_update");
    state.count += 1;
    const double m_sq = M_n * M_n;
    Vec a(estimate.size());
    const double inv_eps_sq = 1.0 / (eps_np1 * eps_np1);
    for (std::size_t j = 0; j < estimate.size(); ++j) {
        state.accum[j] += std::min(estimate[j] * estimate[j], m_sq);
        a[j] = 1.0 / std::sqrt(inv_eps_sq +
                               state.accum[j] /
                                   static_cast<double>(state.count));
    }
    return a;
}

/// Spectral floor sequence for Adagrad: eps_1 at n = 0, then
/// (eps_{n+1}^{-2} + sup M^2)^{-1/2}. This is the lambda sequence for the
/// randomized-iterate selector.
inline double adagrad_lower_eps(std::uint64_t n, double eps_np1,
                                double sup_M_sq) {
    if (n == 0) return eps_np1;
    return 1.0 / std::sqrt(1.0 / (eps_np1 * eps_np1) + sup_M_sq);
}

/// AMSGrad state: first-moment EMA m, clipped second-moment EMA W, and the
/// running max W_hat that makes the preconditioner sequence non-increasing.
struct AmsgradState {
    Vec m;
    Vec W;
    Vec W_hat;
    double rho1 = 0.9;
    double rho2 = 0.999;
    double delta = 1e-8;

    AmsgradState(std::size_t dim, double rho1_, double rho2_, double delta_)
        : m(dim, 0.0),
          W(dim, 0.0),
          W_hat(dim, 0.0),
          rho1(rho1_),
          rho2(rho2_),
          delta(delta_) {}
};

struct AmsgradUpdate {
    Vec a_diag;
    Vec m;  // the drift to apply is a_diag .* m
};

/// One AMSGrad update. Entrywise:
///   m     = rho1 m + (1 - rho1) estimate
///   W     = rho2 W + (1 - rho2) min(eps_{n+1}, estimate^2)
///   W_hat = max(W_hat, W)
///   A     = (delta + W_hat)^{-1/2}
inline AmsgradUpdate amsgrad_update(AmsgradState& state, const Vec& estimate,
                                    double eps_np1) {
    if (!(eps_np1 > 0.0)) {
        throw std::domain_error("amsgrad_update: eps must be > 0");
    }
    check_same_dim(state.m, estimate, "amsgrad_update");
    AmsgradUpdate out;
    out.a_diag.resize(estimate.size());
    for (std::size_t j = 0; j < estimate.size(); ++j) {
        state.m[j] = state.rho1 * state.m[j] + (1.0 - state.rho1) * estimate[j];
        state.W[j] = state.rho2 * state.W[j] +
                     (1.0 - state.rho2) *
                         std::min(eps_np1, estimate[j] * estimate[j]);
        state.W_hat[j] = std::max(state.W_hat[j], state.W[j]);
        out.a_diag[j] = 1.0 / std::sqrt(state.delta + state.W_hat[j]);
    }
    out.m = state.m;
    return out;
}

/// Spectral floor sequence for AMSGrad: 0 at n = 0, then
/// 1 / sqrt(delta + eps_n (1 - rho2^n)).
inline double amsgrad_lower_eps(std::uint64_t n, double delta, double eps_n,
                                double rho2) {
    if (n == 0) return 0.0;
    const double shrink = 1.0 - std::pow(rho2, static_cast<double>(n));
    return 1.0 / std::sqrt(delta + eps_n * shrink);
}

/// Weighted iterate selector: P[R = n] = weights[n] / varpi.
struct IterateSelector {
    std::vector<double> weights;  // w_n = gamma_{n+1} * lambda_{n+1}
    double varpi = 0.0;
};

inline IterateSelector make_selector(std::vector<double> weights) {
    IterateSelector sel;
    sel.weights = std::move(weights);
    for (double w : sel.weights) {
        if (w < 0.0 || !std::isfinite(w)) {
            throw std::domain_error("make_selector: weights must be >= 0");
        }
        sel.varpi += w;
    }
    if (!(sel.varpi > 0.0)) {
        throw std::domain_error("make_selector: total weight must be > 0");
    }
    return sel;
}

/// Selector weights for iterates 0..N under the given optimizer's lambda
/// sequence. For AMSGrad the first weight is zero (its floor sequence starts
/// at zero), so iterate 0 is never selected.
inline IterateSelector make_selector(const ScheduleSpec& spec,
                                     OptimizerKind kind, std::uint64_t N,
                                     double delta = 1e-8, double rho2 = 0.999) {
    std::vector<double> w(N + 1);
    double sup_m_sq = 0.0;
    for (std::uint64_t n = 0; n <= N; ++n) {
        const ScheduleValues now = schedule_eval(spec, n + 1);
        double lambda = 1.0;
        switch (kind) {
            case OptimizerKind::identity:
                lambda = 1.0;
                break;
            case OptimizerKind::adagrad:
                // lambda_{n+1} = lower-eps at n, which looks at eps_{n+1}
                // and the clipping thresholds M_0..M_{n-1}.
                lambda = adagrad_lower_eps(n, now.eps_n, sup_m_sq);
                break;
            case OptimizerKind::amsgrad:
                lambda = amsgrad_lower_eps(n, delta, n == 0 ? 1.0 : schedule_eval(spec, n).eps_n, rho2);
                break;
        }
        w[n] = now.gamma_n * lambda;
        const double m_n = now.M_nm1;  // M_n enters the sup from the next step
        sup_m_sq = std::max(sup_m_sq, m_n * m_n);
    }
    return make_selector(std::move(w));
}

inline std::uint64_t select_random_iterate(const IterateSelector& sel,
                                           RngStream& stream) {
    if (!(sel.varpi > 0.0)) {
        throw std::domain_error("select_random_iterate: varpi must be > 0");
    }
    const double u = stream.uniform() * sel.varpi;
    double acc = 0.0;
    for (std::size_t n = 0; n + 1 < sel.weights.size(); ++n) {
        acc += sel.weights[n];
        if (u < acc) return n;
    }
    return sel.weights.empty() ? 0 : sel.weights.size() - 1;
}

/// An optimization problem: initial point, a kernel targeting pi_theta, the
/// bounded update function, and (when available) the exact gradient of the
/// objective for diagnostics.
struct Problem {
    ParamVector theta0;
    std::function<StepFn(const ParamVector&)> kernel_for;
    std::function<Vec(const ParamVector&)> chain_init;
    GradFn<Vec> update_fn;
    std::function<Vec(const ParamVector&)> exact_grad;  // optional oracle
};

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::amsgrad;
    double rho1 = 0.9;
    double rho2 = 0.999;
    double delta = 1e-8;
    bool allow_invalid_schedule = false;
};

/// Run the multilevel adaptive SGD loop for N iterations. Record 0 is the
/// starting point; record n (n >= 1) logs the estimate and chain cost of the
/// step that produced theta_n. Levels are drawn from geometric(1/2), the
/// chain is simulated lazily to exactly the needed prefix, and a fresh chain
/// is started from chain_init(theta) at every iteration.
inline std::vector<RunRecord> run_optimizer(const Problem& problem,
                                            const OptimizerConfig& cfg,
                                            const ScheduleSpec& schedule,
                                            std::uint64_t N,
                                            RngStream& stream) {
    if (!cfg.allow_invalid_schedule) {
        const auto violations = validate_schedule(schedule, cfg.kind);
        if (!violations.empty()) {
            std::string msg = "run_optimizer: invalid schedule:";
            for (const auto& v : violations) msg += "\n  " + v;
            throw std::invalid_argument(msg);
        }
    }

    const LevelDistribution levels = LevelDistribution::geometric(0.5);
    const std::size_t d = problem.theta0.size();
    ParamVector theta = problem.theta0;

    AdagradState adagrad(d);
    AmsgradState amsgrad(d, cfg.rho1, cfg.rho2, cfg.delta);

    std::vector<RunRecord> records;
    records.reserve(N + 1);
    auto oracle_sq_norm = [&](const ParamVector& th) {
        std::optional<double> v;
        if (problem.exact_grad) v = squared_norm(problem.exact_grad(th));
        return v;
    };
    records.push_back(RunRecord{0, theta, Vec(d, 0.0), 0, 1, 0,
                                oracle_sq_norm(theta)});

    std::uint64_t cumulative_cost = 0;
    for (std::uint64_t n = 0; n < N; ++n) {
        try {
            const ScheduleValues sv = schedule_eval(schedule, n + 1);
            const LevelDraw draw = sample_level(levels, stream);
            const std::uint64_t need = draw.states_needed(sv.T_n);

            const StepFn step = problem.kernel_for(theta);
            const Vec x0 = problem.chain_init
                               ? problem.chain_init(theta)
                               : Vec(static_cast<std::size_t>(1), 0.0);
            const Trajectory traj = simulate_chain(step, x0, need, stream);

            MlmcEstimate est = mlmc_estimate<Vec>(
                problem.update_fn, theta, traj.states, draw, sv.T_n);

            Vec drift;
            switch (cfg.kind) {
                case OptimizerKind::identity:
                    drift = est.estimate;
                    break;
                case OptimizerKind::adagrad: {
                    const Vec a = adagrad_update(adagrad, est.estimate,
                                                 sv.eps_n, sv.M_nm1);
                    drift.resize(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        drift[j] = a[j] * est.estimate[j];
                    }
                    break;
                }
                case OptimizerKind::amsgrad: {
                    const AmsgradUpdate u =
                        amsgrad_update(amsgrad, est.estimate, sv.eps_n);
                    drift.resize(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        drift[j] = u.a_diag[j] * u.m[j];
                    }
                    break;
                }
            }
            for (std::size_t j = 0; j < d; ++j) {
                theta[j] -= sv.gamma_n * drift[j];
            }
            if (!all_finite(theta)) {
                throw std::runtime_error("parameter vector left finite range");
            }
            cumulative_cost += est.used_len;
            records.push_back(RunRecord{n + 1, theta, std::move(est.estimate),
                                        draw.level, est.used_len,
                                        cumulative_cost,
                                        oracle_sq_norm(theta)});
        } catch (const std::exception& e) {
            throw std::runtime_error("iteration " + std::to_string(n + 1) +
                                     ": " + e.what());
        }
    }
    return records;
}

}  // namespace mlmcopt
