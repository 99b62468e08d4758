// Experiment orchestration: problem fixtures, replicate execution, and the
// CSV/SVG outputs for the moments, optimize, iwae, and report experiments.
//
// Replicate r always draws from stream_id = r; selector draws use
// stream_id = replicates + r so trajectory noise and iterate selection never
// share a stream. Aggregation is keyed by replicate index, so results do not
// depend on thread scheduling.

#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mlmcopt/config.hpp"
#include "mlmcopt/core.hpp"
#include "mlmcopt/diagnostics.hpp"
#include "mlmcopt/iwae.hpp"
#include "mlmcopt/kernels.hpp"
#include "mlmcopt/mlmc.hpp"
#include "mlmcopt/optim.hpp"
#include "mlmcopt/rng.hpp"
#include "mlmcopt/svg.hpp"
#include "mlmcopt/table.hpp"

namespace mlmcopt {

/// Index-sharded parallel loop with deterministic result slots. Exceptions
/// from workers are rethrown on the caller thread.
template <typename Fn>
void parallel_for_index(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1u, threads);
    if (threads == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                std::scoped_lock lock(error_mu);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned use = static_cast<unsigned>(
        std::min<std::size_t>(threads, n));
    pool.reserve(use);
    for (unsigned t = 0; t < use; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Problem fixtures
// ---------------------------------------------------------------------------

/// AR(1) chain x' = rho x + noise_sd * xi with bounded update H = clip(x).
/// Stationary law N(0, noise_sd^2/(1-rho^2)); with the defaults that is
/// N(0,1), so the stationary mean of H is 0 (clipping at 10 is negligible).
struct Ar1Fixture {
    double rho = 0.5;
    double noise_sd = std::sqrt(0.75);
    double x0 = 2.0;
    double clip = 10.0;

    StepFn step() const {
        const double r = rho, sd = noise_sd;
        return [r, sd](const Vec& x, RngStream& s) {
            return StepResult{Vec{r * x[0] + sd * s.normal()}, true};
        };
    }

    GradFn<Vec> update_fn() const {
        return GradFn<Vec>{
            [](const ParamVector&, const Vec& x) { return Vec{x[0]}; }, clip};
    }

    /// Level draw -> lazy chain prefix -> multilevel estimate.
    EstimateSampler mlmc_sampler(LevelDistribution dist, double T) const {
        const StepFn kernel = step();
        const GradFn<Vec> h = update_fn();
        const Vec start{x0};
        return [dist = std::move(dist), T, kernel, h, start](RngStream& s) {
            const LevelDraw draw = sample_level(dist, s);
            const Trajectory traj =
                simulate_chain(kernel, start, draw.states_needed(T), s);
            return mlmc_estimate<Vec>(h, {}, traj.states, draw, T).estimate;
        };
    }
};

inline Ar1Fixture make_ar1(const ProblemConfig& p) {
    return Ar1Fixture{p.rho, p.noise_sd, p.x0, p.clip};
}

/// Quadratic objective V(theta) = ||theta||^2 / 2 with pi_theta = N(theta, I)
/// and H = clip(x). The mean field equals grad V up to clipping mass, which
/// is negligible for |theta| well inside the clip bound.
struct GaussianMeanFixture {
    std::size_t dim = 10;
    double clip = 10.0;
    bool use_mala = false;
    double kernel_scale = 0.0;  // 0 => default per kernel kind
    double theta0_value = 2.0;
    bool start_at_mode = true;

    double scale() const {
        if (kernel_scale > 0.0) return kernel_scale;
        const double d = static_cast<double>(dim);
        return use_mala ? 0.5 / d : 2.4 / std::sqrt(d);
    }

    TargetDensity target_at(const ParamVector& theta) const {
        TargetDensity t;
        t.dim = static_cast<int>(dim);
        t.log_pdf = [theta](const Vec& x) {
            double s = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j) {
                const double r = x[j] - theta[j];
                s += r * r;
            }
            return -0.5 * s;
        };
        t.grad_log_pdf = [theta](const Vec& x) {
            Vec g(x.size());
            for (std::size_t j = 0; j < x.size(); ++j) g[j] = theta[j] - x[j];
            return g;
        };
        return t;
    }

    Problem problem() const {
        Problem prob;
        prob.theta0.assign(dim, theta0_value);
        const double sc = scale();
        const bool mala = use_mala;
        prob.kernel_for = [fix = *this, sc, mala](const ParamVector& theta) {
            const TargetDensity t = fix.target_at(theta);
            if (mala) {
                return StepFn([t, sc](const Vec& x, RngStream& s) {
                    return mala_step(x, t, sc, s);
                });
            }
            return StepFn([t, sc](const Vec& x, RngStream& s) {
                return rwmh_step(x, t, sc, s);
            });
        };
        if (start_at_mode) {
            prob.chain_init = [](const ParamVector& theta) { return theta; };
        } else {
            const std::size_t d = dim;
            prob.chain_init = [d](const ParamVector&) {
                return Vec(d, 0.0);
            };
        }
        prob.update_fn = GradFn<Vec>{
            [](const ParamVector&, const Vec& x) { return x; }, clip};
        prob.exact_grad = [](const ParamVector& theta) { return theta; };
        return prob;
    }
};

inline GaussianMeanFixture make_gaussian_mean(const ProblemConfig& p) {
    GaussianMeanFixture f;
    f.dim = p.dim;
    f.clip = p.clip;
    f.use_mala = p.kernel == "mala";
    f.kernel_scale = p.kernel_scale;
    f.theta0_value = p.theta0;
    f.start_at_mode = p.chain_start == "mode";
    return f;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ExperimentOutput {
    ResultTable table;
    std::vector<std::pair<std::string, ResultTable>> per_replicate;
    std::vector<std::pair<std::string, PlotKind>> plots;  // table plots
};

inline ExperimentOutput run_moments_experiment(const ExperimentConfig& cfg) {
    if (cfg.problem.id != "ar1") {
        throw ConfigError("moments experiment supports problem.id = ar1");
    }
    const Ar1Fixture fixture = make_ar1(cfg.problem);
    const auto dist = LevelDistribution::geometric(cfg.mlmc_q);
    const Vec oracle{0.0};

    MomentReport report;
    report.replicates = cfg.replicates;
    report.T_grid = cfg.T_grid;
    report.bias_norm.resize(cfg.T_grid.size());
    report.bias_se.resize(cfg.T_grid.size());
    report.m2.resize(cfg.T_grid.size());
    report.m2_se.resize(cfg.T_grid.size());
    report.m3.resize(cfg.T_grid.size());
    report.m3_se.resize(cfg.T_grid.size());

    parallel_for_index(cfg.T_grid.size(), cfg.threads, [&](std::size_t i) {
        const double T = static_cast<double>(cfg.T_grid[i]);
        const auto sampler = fixture.mlmc_sampler(dist, T);
        const RngStream base = make_stream(cfg.seed, 0);
        const BiasEstimate bias =
            estimate_bias(sampler, oracle, cfg.replicates, base);
        const MomentEstimate m2 =
            estimate_moment(sampler, 2, cfg.replicates, base);
        const MomentEstimate m3 =
            estimate_moment(sampler, 3, cfg.replicates, base);
        report.bias_norm[i] = bias.bias_norm;
        report.bias_se[i] = bias.std_error;
        report.m2[i] = m2.value;
        report.m2_se[i] = m2.std_error;
        report.m3[i] = m3.value;
        report.m3_se[i] = m3.std_error;
    });

    ExperimentOutput out;
    out.table.header = {"T",  "bias_norm", "bias_se", "m2",
                        "m2_se", "m3",       "m3_se"};
    out.table.meta = make_meta(cfg.config_hash, cfg.seed);
    for (std::size_t i = 0; i < cfg.T_grid.size(); ++i) {
        out.table.add_row({static_cast<double>(cfg.T_grid[i]),
                           report.bias_norm[i], report.bias_se[i],
                           report.m2[i], report.m2_se[i], report.m3[i],
                           report.m3_se[i]});
    }
    out.table.trailing_comments.push_back(
        "replicates: " + std::to_string(cfg.replicates));
    out.plots.emplace_back("bias_vs_T", PlotKind::bias_vs_T);
    return out;
}

inline ExperimentOutput run_optimize_experiment(const ExperimentConfig& cfg) {
    if (cfg.problem.id != "gaussian_mean") {
        throw ConfigError(
            "optimize experiment supports problem.id = gaussian_mean");
    }
    const Problem problem = make_gaussian_mean(cfg.problem).problem();
    const std::uint64_t N = cfg.iterations;
    const std::size_t reps = std::max<std::size_t>(1, cfg.replicates);

    std::vector<std::vector<RunRecord>> runs(reps);
    std::vector<std::uint64_t> selected(reps);
    const IterateSelector selector =
        make_selector(cfg.schedule, cfg.optimizer.kind, N,
                      cfg.optimizer.delta, cfg.optimizer.rho2);

    parallel_for_index(reps, cfg.threads, [&](std::size_t r) {
        RngStream run_stream = make_stream(cfg.seed, r);
        runs[r] = run_optimizer(problem, cfg.optimizer, cfg.schedule, N,
                                run_stream);
        RngStream pick = make_stream(cfg.seed, reps + r);
        selected[r] = select_random_iterate(selector, pick);
    });

    ExperimentOutput out;
    out.table.header = {"n", "cumulative_cost", "grad_sq_norm", "r_hits"};
    out.table.meta = make_meta(cfg.config_hash, cfg.seed);
    const double inv_reps = 1.0 / static_cast<double>(reps);
    double mean_grad_at_r = 0.0;
    for (std::uint64_t n = 1; n <= N; ++n) {
        double cost = 0.0, gsq = 0.0, hits = 0.0;
        for (std::size_t r = 0; r < reps; ++r) {
            const RunRecord& rec = runs[r][n];
            cost += static_cast<double>(rec.cumulative_cost);
            gsq += rec.true_grad_sq_norm.value_or(
                squared_norm(rec.grad_estimate));
            if (selected[r] == n) hits += 1.0;
        }
        out.table.add_row({static_cast<double>(n), cost * inv_reps,
                           gsq * inv_reps, hits});
    }
    for (std::size_t r = 0; r < reps; ++r) {
        const RunRecord& rec = runs[r][selected[r]];
        mean_grad_at_r += rec.true_grad_sq_norm.value_or(
            squared_norm(rec.grad_estimate));
    }
    mean_grad_at_r *= inv_reps;
    out.table.trailing_comments.push_back(
        "summary: replicates=" + std::to_string(reps) +
        " mean_grad_sq_norm_at_R=" + format_double(mean_grad_at_r));

    for (std::size_t r = 0; r < reps; ++r) {
        ResultTable t;
        t.header = {"n", "cumulative_cost", "grad_sq_norm", "selected"};
        t.meta = make_meta(cfg.config_hash, cfg.seed);
        for (std::uint64_t n = 0; n <= N; ++n) {
            const RunRecord& rec = runs[r][n];
            t.add_row({static_cast<double>(n),
                       static_cast<double>(rec.cumulative_cost),
                       rec.true_grad_sq_norm.value_or(
                           squared_norm(rec.grad_estimate)),
                       selected[r] == n ? 1.0 : 0.0});
        }
        out.per_replicate.emplace_back("replicate_" + std::to_string(r), t);
    }
    out.plots.emplace_back("gradnorm_loglog", PlotKind::loglog_gradnorm);
    out.plots.emplace_back("gradnorm_cost", PlotKind::cost_axis);
    return out;
}

inline ExperimentOutput run_iwae_experiment(const ExperimentConfig& cfg) {
    const ProblemConfig& p = cfg.problem;
    const LatentModel<double> model =
        linear_gaussian_model(p.proposal_mean, p.proposal_sd);
    const ParamVector theta{p.theta};
    const Vec oracle{
        exact_marginal_grad_linear_gaussian(p.theta, p.y)};
    const std::size_t k = p.particles;
    const double y = p.y;

    struct Row {
        double is_mlmc, T, bias, se, cost;
    };
    std::vector<Row> rows(cfg.T_grid.size() + 1);

    // plain SNIS gradient with k fresh proposal draws
    {
        const auto sampler = [&model, &theta, y, k](RngStream& s) {
            std::vector<double> particles(k);
            for (auto& z : particles) z = model.sample_q(y, s);
            return snis_gradient(model, theta, y, std::move(particles));
        };
        const BiasEstimate b = estimate_bias(sampler, oracle, cfg.replicates,
                                             make_stream(cfg.seed, 0));
        rows[0] = Row{0.0, 1.0, b.bias_norm, b.std_error,
                      static_cast<double>(k)};
    }

    parallel_for_index(cfg.T_grid.size(), cfg.threads, [&](std::size_t i) {
        const double T = static_cast<double>(cfg.T_grid[i]);
        std::atomic<std::uint64_t> cost_total{0};
        const auto sampler = [&model, &theta, y, k, T,
                              &cost_total](RngStream& s) {
            IwaeGradient g = mlmc_iwae_gradient(model, theta, y, k, T, s);
            cost_total.fetch_add(g.cost, std::memory_order_relaxed);
            return g.estimate;
        };
        const BiasEstimate b = estimate_bias(sampler, oracle, cfg.replicates,
                                             make_stream(cfg.seed, 0));
        rows[i + 1] = Row{1.0, T, b.bias_norm, b.std_error,
                          static_cast<double>(cost_total.load()) /
                              static_cast<double>(cfg.replicates)};
    });

    ExperimentOutput out;
    out.table.header = {"is_mlmc", "T", "bias_norm", "bias_se", "cost_mean"};
    out.table.meta = make_meta(cfg.config_hash, cfg.seed);
    for (const Row& r : rows) {
        out.table.add_row({r.is_mlmc, r.T, r.bias, r.se, r.cost});
    }
    out.table.trailing_comments.push_back(
        "replicates: " + std::to_string(cfg.replicates) +
        " particles: " + std::to_string(k));
    return out;
}

inline ExperimentOutput run_report_experiment(const ExperimentConfig& cfg) {
    ExperimentOutput out;
    out.table = read_csv(cfg.report_input);
    out.plots.emplace_back("report", plot_kind_from_string(cfg.report_kind));
    return out;
}

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
    if (cfg.experiment == "moments") return run_moments_experiment(cfg);
    if (cfg.experiment == "optimize") return run_optimize_experiment(cfg);
    if (cfg.experiment == "iwae") return run_iwae_experiment(cfg);
    if (cfg.experiment == "report") return run_report_experiment(cfg);
    throw ConfigError("unknown experiment: " + cfg.experiment);
}

/// Post-run consistency checks; failures are returned as data for the CLI's
/// machine-readable failure list.
inline std::vector<std::string> check_output_invariants(
    const ExperimentOutput& out) {
    std::vector<std::string> failures;
    for (const auto& row : out.table.rows) {
        if (!all_finite(row)) {
            failures.push_back("non-finite value in result table");
            break;
        }
    }
    if (out.table.has_column("cumulative_cost")) {
        const auto cost = out.table.column_values("cumulative_cost");
        for (std::size_t i = 1; i < cost.size(); ++i) {
            if (cost[i] < cost[i - 1]) {
                failures.push_back("cumulative_cost decreased at row " +
                                   std::to_string(i));
                break;
            }
        }
    }
    return failures;
}

/// Write the experiment's CSV and SVG artifacts under out_dir; returns the
/// paths written, in a fixed order.
inline std::vector<std::filesystem::path> write_experiment_outputs(
    const ExperimentConfig& cfg, const ExperimentOutput& out,
    const std::filesystem::path& out_dir) {
    std::vector<std::filesystem::path> written;
    const auto main_csv = out_dir / (cfg.experiment + ".csv");
    write_csv(out.table, main_csv);
    written.push_back(main_csv);
    for (const auto& [name, table] : out.per_replicate) {
        const auto path = out_dir / (name + ".csv");
        write_csv(table, path);
        written.push_back(path);
    }
    for (const auto& [name, kind] : out.plots) {
        const auto path = out_dir / (name + ".svg");
        emit_plot(out.table, kind, path);
        written.push_back(path);
    }
    return written;
}

}  // namespace mlmcopt
