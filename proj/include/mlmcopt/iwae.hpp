// Importance-weighted gradient estimation for latent-variable models:
// the self-normalized (SNIS) gradient, the sampling-importance-resampling
// chain step, the multilevel estimator built on top of it, and a
// linear-Gaussian fixture with closed-form marginal gradient.
//
// The variational parameters are held fixed throughout; only the generative
// parameter theta is estimated.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlmcopt/core.hpp"
#include "mlmcopt/rng.hpp"

namespace mlmcopt {

/// A latent-variable model p_theta(y, z) with proposal q(z | y). The
/// proposal does not see theta; tests that want q equal to the posterior at
/// a specific theta bake that theta into the closure.
template <typename Latent>
struct LatentModel {
    std::function<double(const ParamVector&, double, const Latent&)> log_joint;
    std::function<Vec(const ParamVector&, double, const Latent&)>
        grad_theta_log_joint;
    std::function<Latent(double, RngStream&)> sample_q;
    std::function<double(double, const Latent&)> log_q;
    std::function<Vec(const ParamVector&, double)> exact_marginal_grad;
};

/// Particles with log weights and their log-sum-exp normalization.
template <typename Latent>
struct WeightedParticleSet {
    std::vector<Latent> particles;
    std::vector<double> log_weights;
    std::vector<double> normalized;
};

/// Normalize in log space. Throws if every weight is -inf.
inline std::vector<double> normalize_log_weights(
    std::span<const double> log_weights) {
    double max_lw = -std::numeric_limits<double>::infinity();
    for (double lw : log_weights) max_lw = std::max(max_lw, lw);
    if (!std::isfinite(max_lw)) {
        throw std::runtime_error(
            "normalize_log_weights: all importance weights vanished");
    }
    std::vector<double> w(log_weights.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(log_weights[i] - max_lw);
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

template <typename Latent>
WeightedParticleSet<Latent> weigh_particles(const LatentModel<Latent>& model,
                                            const ParamVector& theta, double y,
                                            std::vector<Latent> particles) {
    WeightedParticleSet<Latent> set;
    set.log_weights.reserve(particles.size());
    for (const Latent& z : particles) {
        set.log_weights.push_back(model.log_joint(theta, y, z) -
                                  model.log_q(y, z));
    }
    set.normalized = normalize_log_weights(set.log_weights);
    set.particles = std::move(particles);
    return set;
}

/// Self-normalized importance-sampling gradient over given particles:
///   sum_l omega_l * grad_theta log p_theta(y, z_l).
template <typename Latent>
Vec snis_gradient(const LatentModel<Latent>& model, const ParamVector& theta,
                  double y, std::vector<Latent> particles) {
    if (particles.empty()) {
        throw std::domain_error("snis_gradient: need at least one particle");
    }
    const auto set = weigh_particles(model, theta, y, std::move(particles));
    Vec grad;
    for (std::size_t l = 0; l < set.particles.size(); ++l) {
        const Vec g = model.grad_theta_log_joint(theta, y, set.particles[l]);
        if (grad.empty()) grad.assign(g.size(), 0.0);
        for (std::size_t j = 0; j < g.size(); ++j) {
            grad[j] += set.normalized[l] * g[j];
        }
    }
    return grad;
}

template <typename Latent>
struct SirStep {
    Latent next;
    Vec grad_term;
};

/// One sampling-importance-resampling step: plant the carried state at a
/// uniform slot, surround it with k-1 fresh proposal draws, weigh, emit the
/// SNIS gradient of the batch, and resample the carried state by weight.
template <typename Latent>
SirStep<Latent> sir_step(const LatentModel<Latent>& model,
                         const ParamVector& theta, double y,
                         const Latent& z_prev, std::size_t k,
                         RngStream& stream) {
    if (k < 1) throw std::domain_error("sir_step: k must be >= 1");
    const std::size_t slot = stream.uniform_index(k);
    std::vector<Latent> particles;
    particles.reserve(k);
    for (std::size_t l = 0; l < k; ++l) {
        if (l == slot) {
            particles.push_back(z_prev);
        } else {
            particles.push_back(model.sample_q(y, stream));
        }
    }
    auto set = weigh_particles(model, theta, y, std::move(particles));

    SirStep<Latent> out;
    for (std::size_t l = 0; l < set.particles.size(); ++l) {
        const Vec g = model.grad_theta_log_joint(theta, y, set.particles[l]);
        if (out.grad_term.empty()) out.grad_term.assign(g.size(), 0.0);
        for (std::size_t j = 0; j < g.size(); ++j) {
            out.grad_term[j] += set.normalized[l] * g[j];
        }
    }
    out.next = set.particles[stream.categorical(set.normalized)];
    return out;
}

struct IwaeGradient {
    Vec estimate;
    std::uint64_t cost = 0;  // joint-density evaluations, t_K * k
};

/// Multilevel importance-weighted gradient estimator. Draws K ~
/// geometric(1/2) and runs t_K = 1 v (2^K 1{2^K <= T}) resampling steps from
/// a fresh proposal draw; the estimate combines the first step's gradient
/// with the span-weighted difference of running means at t_K and t_K/2.
/// For T < 2 every level truncates and this is exactly the plain k-particle
/// SNIS gradient.
template <typename Latent>
IwaeGradient mlmc_iwae_gradient(const LatentModel<Latent>& model,
                                const ParamVector& theta, double y,
                                std::size_t k, double T, RngStream& stream) {
    if (k < 1) throw std::domain_error("mlmc_iwae_gradient: k must be >= 1");
    Latent z = model.sample_q(y, stream);
    const std::uint64_t K = stream.geometric_half();
    const bool truncated =
        K >= 64 || std::ldexp(1.0, static_cast<int>(K)) > T;
    const std::uint64_t t_k = truncated ? 1 : (std::uint64_t{1} << K);

    Vec first, sum_half, sum_full;
    std::uint64_t steps = 0;
    for (std::uint64_t p = 1; p <= t_k; ++p) {
        SirStep<Latent> s = sir_step(model, theta, y, z, k, stream);
        z = std::move(s.next);
        ++steps;
        if (p == 1) first = s.grad_term;
        if (sum_full.empty()) {
            sum_full.assign(s.grad_term.size(), 0.0);
            sum_half.assign(s.grad_term.size(), 0.0);
        }
        for (std::size_t j = 0; j < s.grad_term.size(); ++j) {
            sum_full[j] += s.grad_term[j];
            if (p <= t_k / 2) sum_half[j] += s.grad_term[j];
        }
    }

    IwaeGradient out;
    out.cost = steps * k;
    out.estimate = first;
    if (!truncated && t_k >= 2) {
        const double td = static_cast<double>(t_k);
        for (std::size_t j = 0; j < out.estimate.size(); ++j) {
            const double mean_full = sum_full[j] / td;
            const double mean_half = sum_half[j] / (td / 2.0);
            out.estimate[j] += td * (mean_full - mean_half);
        }
    }
    return out;
}

/// One-replicate importance-weighted bound log((1/k) sum_l w_l), computed
/// with log-sum-exp.
template <typename Latent>
double iwae_bound(const LatentModel<Latent>& model, const ParamVector& theta,
                  double y, std::size_t k, RngStream& stream) {
    if (k < 1) throw std::domain_error("iwae_bound: k must be >= 1");
    std::vector<double> log_w(k);
    double max_lw = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < k; ++l) {
        const Latent z = model.sample_q(y, stream);
        log_w[l] = model.log_joint(theta, y, z) - model.log_q(y, z);
        max_lw = std::max(max_lw, log_w[l]);
    }
    if (!std::isfinite(max_lw)) {
        throw std::runtime_error("iwae_bound: all importance weights vanished");
    }
    double sum = 0.0;
    for (double lw : log_w) sum += std::exp(lw - max_lw);
    return max_lw + std::log(sum) - std::log(static_cast<double>(k));
}

// ---------------------------------------------------------------------------
// Linear-Gaussian fixture: z ~ N(0,1), y | z ~ N(theta + z, 1).
// Marginally y ~ N(theta, 2) and the exact gradient of log p_theta(y) is
// (y - theta)/2; the posterior of z is N((y - theta)/2, 1/2). The default
// proposal N(0, 1.5^2) is deliberately mismatched so the SNIS bias is
// nonzero and measurable.
// ---------------------------------------------------------------------------

inline double gaussian_log_pdf(double x, double mean, double var) {
    const double r = x - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * var) + r * r / var);
}

/// Gradient of log N(y; theta, 2), the fixture's marginal score.
inline double exact_marginal_grad_linear_gaussian(double theta, double y) {
    return (y - theta) / 2.0;
}

/// Fixture with Gaussian proposal N(q_mean, q_sd^2).
inline LatentModel<double> linear_gaussian_model(double q_mean = 0.0,
                                                 double q_sd = 1.5) {
    if (!(q_sd > 0.0)) {
        throw std::invalid_argument("linear_gaussian_model: q_sd must be > 0");
    }
    LatentModel<double> m;
    m.log_joint = [](const ParamVector& theta, double y, const double& z) {
        return gaussian_log_pdf(z, 0.0, 1.0) +
               gaussian_log_pdf(y, theta[0] + z, 1.0);
    };
    m.grad_theta_log_joint = [](const ParamVector& theta, double y,
                                const double& z) {
        return Vec{y - theta[0] - z};
    };
    m.sample_q = [q_mean, q_sd](double, RngStream& s) {
        return q_mean + q_sd * s.normal();
    };
    m.log_q = [q_mean, q_sd](double, const double& z) {
        return gaussian_log_pdf(z, q_mean, q_sd * q_sd);
    };
    m.exact_marginal_grad = [](const ParamVector& theta, double y) {
        return Vec{exact_marginal_grad_linear_gaussian(theta[0], y)};
    };
    return m;
}

/// Fixture whose proposal is the exact posterior at a fixed theta; the
/// importance weights are then constant and equal to p_theta(y).
inline LatentModel<double> linear_gaussian_posterior_model(double theta,
                                                           double y) {
    const double post_mean = (y - theta) / 2.0;
    const double post_sd = std::sqrt(0.5);
    LatentModel<double> m = linear_gaussian_model(post_mean, post_sd);
    m.sample_q = [post_mean, post_sd](double, RngStream& s) {
        return post_mean + post_sd * s.normal();
    };
    m.log_q = [post_mean, post_sd](double, const double& z) {
        return gaussian_log_pdf(z, post_mean, post_sd * post_sd);
    };
    return m;
}

/// log p_theta(y) for the fixture, for checking the bound's tightness.
inline double linear_gaussian_log_marginal(double theta, double y) {
    return gaussian_log_pdf(y, theta, 2.0);
}

}  // namespace mlmcopt
