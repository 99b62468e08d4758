// Statistical measurement of estimator bias and moments, log-log slope
// fitting, the case-defined rate functions, and the theoretical AMSGrad
// bound constants.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlmcopt/core.hpp"
#include "mlmcopt/rng.hpp"

namespace mlmcopt {

/// Estimator sampler: replicate i draws from a dedicated stream.
using EstimateSampler = std::function<Vec(RngStream&)>;

struct BiasEstimate {
    double bias_norm = 0.0;
    double std_error = 0.0;
};

/// Norm of (replicate mean - oracle), with a jackknife standard error.
/// Replicate i uses stream (base.seed, base.stream_id + i), so the result is
/// a pure function of the base stream and the replicate count.
inline BiasEstimate estimate_bias(const EstimateSampler& make_estimate,
                                  const Vec& oracle_grad,
                                  std::size_t replicates,
                                  const RngStream& base) {
    if (replicates < 2) {
        throw std::domain_error("estimate_bias: need at least 2 replicates");
    }
    std::vector<Vec> draws(replicates);
    for (std::size_t i = 0; i < replicates; ++i) {
        RngStream s = make_stream(base.seed(), base.stream_id() + i);
        draws[i] = make_estimate(s);
        check_same_dim(draws[i], oracle_grad, "estimate_bias");
    }
    const std::size_t d = oracle_grad.size();
    const double r = static_cast<double>(replicates);

    // Per-coordinate pairwise totals keep the reduction order-independent.
    Vec total(d, 0.0);
    std::vector<double> column(replicates);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < replicates; ++i) column[i] = draws[i][j];
        total[j] = pairwise_sum(column);
    }

    Vec diff(d);
    for (std::size_t j = 0; j < d; ++j) {
        diff[j] = total[j] / r - oracle_grad[j];
    }
    const double bias = norm(diff);

    // Jackknife over leave-one-out bias norms.
    std::vector<double> loo(replicates);
    Vec loo_diff(d);
    for (std::size_t i = 0; i < replicates; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            loo_diff[j] = (total[j] - draws[i][j]) / (r - 1.0) - oracle_grad[j];
        }
        loo[i] = norm(loo_diff);
    }
    const double loo_mean = pairwise_sum(loo) / r;
    double ss = 0.0;
    for (double v : loo) ss += (v - loo_mean) * (v - loo_mean);
    return BiasEstimate{bias, std::sqrt((r - 1.0) / r * ss)};
}

struct MomentEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Empirical mean of ||estimate||^p over independent replicates, with the
/// standard error of that mean. Same stream policy as estimate_bias.
inline MomentEstimate estimate_moment(const EstimateSampler& make_estimate,
                                      int p, std::size_t replicates,
                                      const RngStream& base) {
    if (p != 2 && p != 3) {
        throw std::domain_error("estimate_moment: p must be 2 or 3");
    }
    if (replicates < 2) {
        throw std::domain_error("estimate_moment: need at least 2 replicates");
    }
    std::vector<double> vals(replicates);
    for (std::size_t i = 0; i < replicates; ++i) {
        RngStream s = make_stream(base.seed(), base.stream_id() + i);
        const double nrm = norm(make_estimate(s));
        vals[i] = p == 2 ? nrm * nrm : nrm * nrm * nrm;
    }
    const double r = static_cast<double>(replicates);
    const double mean = pairwise_sum(vals) / r;
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    return MomentEstimate{mean, std::sqrt(ss / (r - 1.0) / r)};
}

/// Empirical bias/moment profile of an estimator across a truncation grid.
struct MomentReport {
    std::vector<std::uint64_t> T_grid;
    std::vector<double> bias_norm;
    std::vector<double> bias_se;
    std::vector<double> m2;
    std::vector<double> m2_se;
    std::vector<double> m3;
    std::vector<double> m3_se;
    std::size_t replicates = 0;
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Ordinary least squares on the given coordinates.
inline SlopeFit fit_linear(std::span<const double> xs,
                           std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 3) {
        throw std::domain_error("fit_linear: need >= 3 paired points");
    }
    const double n = static_cast<double>(xs.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) throw std::domain_error("fit_linear: degenerate xs");
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return f;
}

/// Least squares on (log x, log y); inputs must be strictly positive.
inline SlopeFit fit_loglog(std::span<const double> xs,
                           std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 3) {
        throw std::domain_error("fit_loglog: need >= 3 paired points");
    }
    std::vector<double> lx(xs.size()), ly(ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) {
            throw std::domain_error("fit_loglog: inputs must be positive");
        }
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
    }
    return fit_linear(lx, ly);
}

/// Case-defined rate function: N^{1-eta} below 1, log N at 1, constant above.
inline double psi(double N, double eta) {
    if (N < 2.0) throw std::domain_error("psi: N must be >= 2");
    if (eta < 1.0) return std::pow(N, 1.0 - eta);
    if (eta == 1.0) return std::log(N);
    return 1.0;
}

/// Companion rate with an extra logarithm: N^{1-eta} log N, (log N)^2, or 1.
inline double phi(double N, double eta) {
    if (N < 2.0) throw std::domain_error("phi: N must be >= 2");
    if (eta < 1.0) return std::pow(N, 1.0 - eta) * std::log(N);
    if (eta == 1.0) {
        const double l = std::log(N);
        return l * l;
    }
    return 1.0;
}

/// The five closed-form constants of the AMSGrad convergence bound, for
/// documentation and bound plotting only. No runtime behavior depends on
/// them.
inline std::array<double, 5> amsgrad_constants(double c1, double c2, double G,
                                               double L, double delta,
                                               double rho1, double d,
                                               double gamma1, double T1,
                                               double eps0) {
    if (!(delta > 0.0) || !(G > 0.0) || !(T1 > 0.0)) {
        throw std::domain_error("amsgrad_constants: inputs must be positive");
    }
    if (!(rho1 >= 0.0 && rho1 < 1.0)) {
        throw std::domain_error("amsgrad_constants: rho1 must be in [0,1)");
    }
    const double one_m = 1.0 - rho1;
    const double log_t1 = std::log(T1);
    const double b0_head =
        d * G / (2.0 * delta * one_m) +
        gamma1 * std::sqrt(d / delta) * (1.0 + 2.0 * log_t1 / std::log(2.0)) *
            G * G +
        c2 * (L / delta) * G * G * gamma1 * gamma1 * log_t1;
    const double b0 = b0_head + eps0 * gamma1 * G * G;
    const double b1 = c1 * G * G / std::sqrt(delta);
    const double b2 = c2 / (2.0 * delta) * (1.0 + 2.0 * L + 2.0 * delta * G) *
                      G * G;
    // rho1^2 (L^2 + 2L) + rho1 delta (1 - rho1) G, expanded so rho1 = 0 is
    // exact rather than 0/0.
    const double b3 = c2 / (2.0 * delta * one_m) *
                      (rho1 * rho1 * (L * L + 2.0 * L) +
                       rho1 * delta * one_m * G) *
                      G * G;
    const double b4 = d * rho1 * G / (2.0 * delta * one_m);
    return {b0, b1, b2, b3, b4};
}

/// Reference decay (log N)^2 / sqrt(N) for overlay on convergence plots.
inline std::vector<double> rate_reference(std::span<const double> N_grid) {
    std::vector<double> out(N_grid.size());
    for (std::size_t i = 0; i < N_grid.size(); ++i) {
        if (N_grid[i] < 2.0) {
            throw std::domain_error("rate_reference: entries must be >= 2");
        }
        const double l = std::log(N_grid[i]);
        out[i] = l * l / std::sqrt(N_grid[i]);
    }
    return out;
}

}  // namespace mlmcopt
