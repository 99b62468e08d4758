// Experiment configuration: JSON ingestion with strict validation.
//
// Unknown keys are rejected with their full path, missing required keys are
// reported the same way, duplicate keys are parse errors, and schedule
// exponents are checked against the optimizer's rate condition unless
// explicitly overridden.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlmcopt/optim.hpp"
#include "mlmcopt/table.hpp"

namespace mlmcopt {

using nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProblemConfig {
    std::string id;  // "ar1" | "gaussian_mean" | "linear_gaussian"

    // ar1
    double rho = 0.5;
    double noise_sd = std::sqrt(0.75);
    double x0 = 2.0;
    double clip = 10.0;

    // gaussian_mean
    std::size_t dim = 10;
    std::string kernel = "rwmh";
    double kernel_scale = 0.0;  // 0 => default 2.4/sqrt(dim) or 0.5/dim
    double theta0 = 2.0;        // broadcast initial parameter value
    std::string chain_start = "mode";  // "mode" | "zero"

    // linear_gaussian
    double theta = 0.0;
    double y = 1.0;
    double proposal_mean = 0.0;
    double proposal_sd = 1.5;
    std::size_t particles = 5;
};

struct ExperimentConfig {
    std::string experiment;  // moments | optimize | iwae | report
    std::uint64_t seed = 0;
    std::size_t replicates = 1000;
    std::string out = "out";
    unsigned threads = 1;

    ProblemConfig problem;
    ScheduleSpec schedule;
    OptimizerConfig optimizer;
    double mlmc_q = 0.5;
    std::vector<std::uint64_t> T_grid;
    std::uint64_t iterations = 1000;
    bool allow_invalid_schedule = false;

    std::string report_input;
    std::string report_kind = "loglog_gradnorm";

    std::uint64_t config_hash = 0;  // of the canonical parsed document
};

namespace cfgdetail {

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text,
                                                       std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

inline json parse_strict(const std::string& text) {
    std::vector<std::set<std::string>> object_keys;
    json::parser_callback_t cb = [&](int /*depth*/, json::parse_event_t event,
                                     json& parsed) {
        switch (event) {
            case json::parse_event_t::object_start:
                object_keys.emplace_back();
                break;
            case json::parse_event_t::object_end:
                object_keys.pop_back();
                break;
            case json::parse_event_t::key: {
                const auto key = parsed.get<std::string>();
                if (!object_keys.back().insert(key).second) {
                    throw ConfigError("parse error: duplicate key \"" + key +
                                      "\"");
                }
                break;
            }
            default:
                break;
        }
        return true;
    };
    try {
        return json::parse(text, cb);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ConfigError("parse error at line " + std::to_string(line) +
                          ", column " + std::to_string(col) + ": " + e.what());
    }
}

/// Tracks which keys of a JSON object were consumed; anything left over is an
/// unknown key reported with its full path.
class Section {
public:
    Section(const json& obj, std::string path)
        : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) {
            throw ConfigError(path_ + " must be a JSON object");
        }
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const json& require(const std::string& key) {
        if (!obj_.contains(key)) {
            throw ConfigError("missing required key: " + full(key));
        }
        consumed_.insert(key);
        return obj_.at(key);
    }

    const json* optional(const std::string& key) {
        if (!obj_.contains(key)) return nullptr;
        consumed_.insert(key);
        return &obj_.at(key);
    }

    double number(const std::string& key, double fallback) {
        const json* v = optional(key);
        if (!v) return fallback;
        if (!v->is_number()) throw ConfigError(full(key) + " must be a number");
        return v->get<double>();
    }

    double require_number(const std::string& key) {
        const json& v = require(key);
        if (!v.is_number()) throw ConfigError(full(key) + " must be a number");
        return v.get<double>();
    }

    std::uint64_t integer(const std::string& key, std::uint64_t fallback) {
        const json* v = optional(key);
        if (!v) return fallback;
        if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
            throw ConfigError(full(key) + " must be a non-negative integer");
        }
        return v->get<std::uint64_t>();
    }

    std::string text(const std::string& key, std::string fallback) {
        const json* v = optional(key);
        if (!v) return fallback;
        if (!v->is_string()) throw ConfigError(full(key) + " must be a string");
        return v->get<std::string>();
    }

    std::string require_text(const std::string& key) {
        const json& v = require(key);
        if (!v.is_string()) throw ConfigError(full(key) + " must be a string");
        return v.get<std::string>();
    }

    bool boolean(const std::string& key, bool fallback) {
        const json* v = optional(key);
        if (!v) return fallback;
        if (!v->is_boolean()) {
            throw ConfigError(full(key) + " must be a boolean");
        }
        return v->get<bool>();
    }

    std::vector<std::uint64_t> integer_array(const std::string& key) {
        const json& v = require(key);
        if (!v.is_array() || v.empty()) {
            throw ConfigError(full(key) + " must be a non-empty array");
        }
        std::vector<std::uint64_t> out;
        for (const auto& e : v) {
            if (!e.is_number_integer() || e.get<std::int64_t>() < 1) {
                throw ConfigError(full(key) +
                                  " entries must be positive integers");
            }
            out.push_back(e.get<std::uint64_t>());
        }
        return out;
    }

    /// Every key must have been consumed by now.
    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!consumed_.contains(it.key())) {
                throw ConfigError("unknown key: " + full(it.key()));
            }
        }
    }

    std::string full(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }
    const std::string& path() const { return path_; }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> consumed_;
};

inline ScheduleSpec read_schedule(Section& root) {
    ScheduleSpec s;
    const json* block = root.optional("schedule");
    if (!block) return s;
    Section sec(*block, root.full("schedule"));
    s.c_gamma = sec.number("c_gamma", s.c_gamma);
    s.gamma_exp = sec.number("gamma_exp", s.gamma_exp);
    s.c_T = sec.number("c_T", s.c_T);
    s.alpha_exp = sec.number("alpha_exp", s.alpha_exp);
    s.c_eps = sec.number("c_eps", s.c_eps);
    s.eps_exp = sec.number("eps_exp", s.eps_exp);
    s.c_M = sec.number("c_M", s.c_M);
    s.M_exp = sec.number("M_exp", s.M_exp);
    sec.finish();
    return s;
}

inline OptimizerConfig read_optimizer(Section& root) {
    OptimizerConfig o;
    const json* block = root.optional("optimizer");
    if (!block) return o;
    Section sec(*block, root.full("optimizer"));
    const std::string kind = sec.text("kind", "amsgrad");
    if (kind == "identity") {
        o.kind = OptimizerKind::identity;
    } else if (kind == "adagrad") {
        o.kind = OptimizerKind::adagrad;
    } else if (kind == "amsgrad") {
        o.kind = OptimizerKind::amsgrad;
    } else {
        throw ConfigError(sec.full("kind") +
                          " must be identity, adagrad, or amsgrad");
    }
    o.rho1 = sec.number("rho1", o.rho1);
    o.rho2 = sec.number("rho2", o.rho2);
    o.delta = sec.number("delta", o.delta);
    if (!(o.rho1 >= 0.0 && o.rho1 < 1.0) || !(o.rho2 >= 0.0 && o.rho2 < 1.0)) {
        throw ConfigError(sec.path() + ": rho1 and rho2 must be in [0,1)");
    }
    if (!(o.delta > 0.0)) {
        throw ConfigError(sec.full("delta") + " must be > 0");
    }
    sec.finish();
    return o;
}

inline ProblemConfig read_problem(Section& root, bool required) {
    ProblemConfig p;
    const json* block =
        required ? &root.require("problem") : root.optional("problem");
    if (!block) return p;
    Section sec(*block, root.full("problem"));
    p.id = sec.require_text("id");
    if (p.id == "ar1") {
        p.rho = sec.number("rho", p.rho);
        p.noise_sd = sec.number("noise_sd", p.noise_sd);
        p.x0 = sec.number("x0", p.x0);
        p.clip = sec.number("clip", p.clip);
        if (!(std::abs(p.rho) < 1.0)) {
            throw ConfigError(sec.full("rho") + " must satisfy |rho| < 1");
        }
    } else if (p.id == "gaussian_mean") {
        p.dim = static_cast<std::size_t>(sec.integer("dim", p.dim));
        p.clip = sec.number("clip", p.clip);
        p.kernel = sec.text("kernel", p.kernel);
        p.kernel_scale = sec.number("kernel_scale", 0.0);
        p.theta0 = sec.number("theta0", p.theta0);
        p.chain_start = sec.text("chain_start", p.chain_start);
        if (p.kernel != "rwmh" && p.kernel != "mala") {
            throw ConfigError(sec.full("kernel") + " must be rwmh or mala");
        }
        if (p.chain_start != "mode" && p.chain_start != "zero") {
            throw ConfigError(sec.full("chain_start") +
                              " must be mode or zero");
        }
        if (p.dim < 1) throw ConfigError(sec.full("dim") + " must be >= 1");
    } else if (p.id == "linear_gaussian") {
        p.theta = sec.number("theta", p.theta);
        p.y = sec.number("y", p.y);
        p.proposal_mean = sec.number("proposal_mean", p.proposal_mean);
        p.proposal_sd = sec.number("proposal_sd", p.proposal_sd);
        p.particles = static_cast<std::size_t>(
            sec.integer("particles", p.particles));
        if (p.particles < 1) {
            throw ConfigError(sec.full("particles") + " must be >= 1");
        }
    } else {
        throw ConfigError(sec.full("id") +
                          " must be ar1, gaussian_mean, or linear_gaussian");
    }
    sec.finish();
    return p;
}

}  // namespace cfgdetail

/// Validity check only; the renderer maps the string to its enum.
inline void plot_kind_from_string_check(const std::string& s) {
    if (s != "loglog_gradnorm" && s != "bias_vs_T" && s != "cost_axis") {
        throw ConfigError("report.kind must be loglog_gradnorm, bias_vs_T, "
                          "or cost_axis");
    }
}

inline ExperimentConfig parse_config(const std::string& text) {
    using namespace cfgdetail;
    const json doc = parse_strict(text);
    Section root(doc, "");

    ExperimentConfig cfg;
    cfg.experiment = root.require_text("experiment");
    if (cfg.experiment != "moments" && cfg.experiment != "optimize" &&
        cfg.experiment != "iwae" && cfg.experiment != "report") {
        throw ConfigError(
            "experiment must be moments, optimize, iwae, or report");
    }
    cfg.seed = root.integer("seed", 0);
    cfg.out = root.text("out", cfg.out);
    cfg.threads = static_cast<unsigned>(root.integer("threads", 1));
    cfg.allow_invalid_schedule =
        root.boolean("allow_invalid_schedule", false);

    if (cfg.experiment == "moments") {
        cfg.problem = read_problem(root, true);
        cfg.replicates =
            static_cast<std::size_t>(root.integer("replicates", 10000));
        Section mlmc(root.require("mlmc"), "mlmc");
        cfg.mlmc_q = mlmc.number("q", 0.5);
        cfg.T_grid = mlmc.integer_array("T_grid");
        mlmc.finish();
    } else if (cfg.experiment == "optimize") {
        cfg.problem = read_problem(root, true);
        cfg.replicates =
            static_cast<std::size_t>(root.integer("replicates", 5));
        cfg.iterations = root.integer("iterations", 1000);
        cfg.schedule = read_schedule(root);
        cfg.optimizer = read_optimizer(root);
        cfg.optimizer.allow_invalid_schedule = cfg.allow_invalid_schedule;
        if (!cfg.allow_invalid_schedule) {
            const auto violations =
                validate_schedule(cfg.schedule, cfg.optimizer.kind);
            if (!violations.empty()) {
                std::string msg = "invalid schedule:";
                for (const auto& v : violations) msg += "\n  " + v;
                throw ConfigError(msg);
            }
        }
    } else if (cfg.experiment == "iwae") {
        cfg.problem = read_problem(root, true);
        if (cfg.problem.id != "linear_gaussian") {
            throw ConfigError(
                "problem.id must be linear_gaussian for iwae experiments");
        }
        cfg.replicates =
            static_cast<std::size_t>(root.integer("replicates", 10000));
        Section mlmc(root.require("mlmc"), "mlmc");
        cfg.mlmc_q = mlmc.number("q", 0.5);
        cfg.T_grid = mlmc.integer_array("T_grid");
        mlmc.finish();
    } else {  // report
        Section rep(root.require("report"), "report");
        cfg.report_input = rep.require_text("input");
        cfg.report_kind = rep.text("kind", cfg.report_kind);
        plot_kind_from_string_check(cfg.report_kind);
        rep.finish();
    }
    root.finish();

    cfg.config_hash = fnv1a_hash(doc.dump());
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw ConfigError("cannot open config file: " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

}  // namespace mlmcopt
