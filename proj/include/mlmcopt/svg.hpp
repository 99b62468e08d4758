// Self-contained SVG plots for result tables: no renderer dependency, byte
// deterministic for a given table. Data series are the only <path> elements;
// axes, ticks and frames use <line> and <text>.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmcopt/diagnostics.hpp"
#include "mlmcopt/table.hpp"

namespace mlmcopt {

enum class PlotKind { loglog_gradnorm, bias_vs_T, cost_axis };

inline PlotKind plot_kind_from_string(const std::string& s) {
    if (s == "loglog_gradnorm") return PlotKind::loglog_gradnorm;
    if (s == "bias_vs_T") return PlotKind::bias_vs_T;
    if (s == "cost_axis") return PlotKind::cost_axis;
    throw std::invalid_argument("unknown plot kind: " + s);
}

namespace svgdetail {

inline std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

inline std::string label(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

struct Panel {
    double x0, y0, w, h;  // drawing area in svg coordinates
    double xmin, xmax, ymin, ymax;
    bool logx = false, logy = false;

    double sx(double x) const {
        const double t = logx ? std::log10(x) : x;
        const double a = logx ? std::log10(xmin) : xmin;
        const double b = logx ? std::log10(xmax) : xmax;
        return x0 + (b == a ? 0.5 : (t - a) / (b - a)) * w;
    }
    double sy(double y) const {
        const double t = logy ? std::log10(y) : y;
        const double a = logy ? std::log10(ymin) : ymin;
        const double b = logy ? std::log10(ymax) : ymax;
        return y0 + h - (b == a ? 0.5 : (t - a) / (b - a)) * h;
    }
};

inline void frame(std::string& svg, const Panel& p, const std::string& xlabel,
                  const std::string& ylabel) {
    auto line = [&](double x1, double y1, double x2, double y2) {
        svg += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" +
               num(x2) + "\" y2=\"" + num(y2) +
               "\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    };
    line(p.x0, p.y0 + p.h, p.x0 + p.w, p.y0 + p.h);
    line(p.x0, p.y0, p.x0, p.y0 + p.h);
    svg += "<text x=\"" + num(p.x0 + p.w / 2) + "\" y=\"" +
           num(p.y0 + p.h + 32) +
           "\" text-anchor=\"middle\" font-size=\"11\">" + xlabel +
           "</text>\n";
    svg += "<text x=\"" + num(p.x0 - 40) + "\" y=\"" + num(p.y0 + p.h / 2) +
           "\" text-anchor=\"middle\" font-size=\"11\" transform=\"rotate(-90 " +
           num(p.x0 - 40) + " " + num(p.y0 + p.h / 2) + ")\">" + ylabel +
           "</text>\n";
    // corner tick labels are enough to read off the scale
    svg += "<text x=\"" + num(p.x0) + "\" y=\"" + num(p.y0 + p.h + 16) +
           "\" text-anchor=\"middle\" font-size=\"9\">" + label(p.xmin) +
           "</text>\n";
    svg += "<text x=\"" + num(p.x0 + p.w) + "\" y=\"" +
           num(p.y0 + p.h + 16) + "\" text-anchor=\"middle\" font-size=\"9\">" +
           label(p.xmax) + "</text>\n";
    svg += "<text x=\"" + num(p.x0 - 6) + "\" y=\"" + num(p.y0 + p.h) +
           "\" text-anchor=\"end\" font-size=\"9\">" + label(p.ymin) +
           "</text>\n";
    svg += "<text x=\"" + num(p.x0 - 6) + "\" y=\"" + num(p.y0 + 8) +
           "\" text-anchor=\"end\" font-size=\"9\">" + label(p.ymax) +
           "</text>\n";
}

inline void path(std::string& svg, const Panel& p,
                 const std::vector<double>& xs, const std::vector<double>& ys,
                 const std::string& color, bool dashed) {
    std::string d;
    bool started = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (p.logx && !(xs[i] > 0.0)) continue;
        if (p.logy && !(ys[i] > 0.0)) continue;
        d += started ? "L" : "M";
        d += num(p.sx(xs[i])) + " " + num(p.sy(ys[i])) + " ";
        started = true;
    }
    svg += "<path d=\"" + d + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"";
    if (dashed) svg += " stroke-dasharray=\"6,4\"";
    svg += "/>\n";
}

inline void bounds(const std::vector<double>& v, bool positive_only,
                   double& lo, double& hi) {
    lo = std::numeric_limits<double>::infinity();
    hi = -std::numeric_limits<double>::infinity();
    for (double x : v) {
        if (positive_only && !(x > 0.0)) continue;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (!(lo <= hi)) {
        throw std::invalid_argument("emit_plot: no plottable points");
    }
    if (lo == hi) {
        lo *= 0.5;
        hi *= 2.0;
        if (lo == hi) {  // all zero on a linear axis
            lo = -1.0;
            hi = 1.0;
        }
    }
}

}  // namespace svgdetail

/// Render a plot for the table. loglog_gradnorm draws the gradient-norm
/// series plus a dashed (log N)^2 / sqrt(N) reference anchored at the first
/// plotted point; cost_axis draws the same series against iteration (left)
/// and cumulative cost (right); bias_vs_T is a log-log bias curve.
inline std::string render_plot(const ResultTable& table, PlotKind kind) {
    if (table.rows.empty()) {
        throw std::invalid_argument("emit_plot: empty table");
    }
    using namespace svgdetail;
    const double W = kind == PlotKind::cost_axis ? 760.0 : 420.0;
    const double H = 320.0;
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) +
           "\" height=\"" + num(H) + "\" viewBox=\"0 0 " + num(W) + " " +
           num(H) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

    if (kind == PlotKind::loglog_gradnorm) {
        const auto xs = table.column_values("n");
        const auto ys = table.column_values("grad_sq_norm");
        Panel p{70, 24, W - 100, H - 84, 0, 0, 0, 0, true, true};
        bounds(xs, true, p.xmin, p.xmax);
        bounds(ys, true, p.ymin, p.ymax);

        // dashed reference anchored at the first positive data point
        std::vector<double> rx, ry;
        double anchor_x = 0.0, anchor_y = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (xs[i] >= 2.0 && ys[i] > 0.0) {
                anchor_x = xs[i];
                anchor_y = ys[i];
                break;
            }
        }
        if (anchor_x > 0.0) {
            const double l0 = std::log(anchor_x);
            const double scale =
                anchor_y / (l0 * l0 / std::sqrt(anchor_x));
            for (std::size_t i = 0; i < xs.size(); ++i) {
                if (xs[i] < 2.0) continue;
                const double l = std::log(xs[i]);
                rx.push_back(xs[i]);
                ry.push_back(scale * l * l / std::sqrt(xs[i]));
            }
            for (double v : ry) {
                p.ymin = std::min(p.ymin, v);
                p.ymax = std::max(p.ymax, v);
            }
        }
        frame(svg, p, "iteration", "squared gradient norm");
        path(svg, p, xs, ys, "#1f77b4", false);
        path(svg, p, rx, ry, "#888888", true);
    } else if (kind == PlotKind::bias_vs_T) {
        const auto xs = table.column_values("T");
        const auto ys = table.column_values("bias_norm");
        Panel p{70, 24, W - 100, H - 84, 0, 0, 0, 0, true, true};
        bounds(xs, true, p.xmin, p.xmax);
        bounds(ys, true, p.ymin, p.ymax);
        frame(svg, p, "truncation bound T", "bias norm");
        path(svg, p, xs, ys, "#d62728", false);
    } else {  // cost_axis
        const auto ns = table.column_values("n");
        const auto cost = table.column_values("cumulative_cost");
        const auto ys = table.column_values("grad_sq_norm");
        Panel left{60, 24, (W - 160) / 2, H - 84, 0, 0, 0, 0, true, true};
        Panel right{W / 2 + 40, 24, (W - 160) / 2, H - 84, 0, 0, 0, 0, true,
                    true};
        bounds(ns, true, left.xmin, left.xmax);
        bounds(ys, true, left.ymin, left.ymax);
        bounds(cost, true, right.xmin, right.xmax);
        right.ymin = left.ymin;
        right.ymax = left.ymax;
        frame(svg, left, "iteration", "squared gradient norm");
        frame(svg, right, "cumulative cost", "squared gradient norm");
        path(svg, left, ns, ys, "#1f77b4", false);
        path(svg, right, cost, ys, "#1f77b4", false);
    }
    svg += "</svg>\n";
    return svg;
}

inline void emit_plot(const ResultTable& table, PlotKind kind,
                      const std::filesystem::path& path) {
    const std::string svg = render_plot(table, kind);  // may throw; no file
    if (!path.parent_path().empty()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("emit_plot: cannot open " + path.string());
    }
    f << svg;
}

}  // namespace mlmcopt
