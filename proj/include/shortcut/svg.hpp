#pragma once

// Self-contained SVG charts. Every number goes through a fixed "%.6g" format,
// so identical inputs give identical bytes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "shortcut/error.hpp"

namespace shortcut::svg {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline const char* palette(std::size_t i) {
    static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colours[i % 10];
}

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct LineChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool markers = false;  ///< draw a dot at every point (time order on the information plane)
    std::vector<Series> series;
};

namespace detail {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 55;

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    bool empty() const { return !(lo <= hi); }
    void widen() {
        if (empty()) {
            lo = 0.0;
            hi = 1.0;
        } else if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
            const double pad = std::max(1e-6, 0.05 * std::abs(hi));
            lo -= pad;
            hi += pad;
        }
    }
};

inline std::string header(const std::string& title) {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
           "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           num(kWidth) + "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) +
           "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"" + num(kWidth / 2) +
           "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" + escape(title) +
           "</text>\n";
}

inline std::vector<double> ticks(double lo, double hi) {
    std::vector<double> out;
    for (int i = 0; i <= 4; ++i) out.push_back(lo + (hi - lo) * i / 4.0);
    return out;
}

} // namespace detail

/// Line chart. On a log x-axis, points with x <= 0 are skipped; if nothing
/// positive remains the axis falls back to linear.
inline std::string render(const LineChart& chart) {
    using namespace detail;
    bool log_x = chart.log_x;
    if (log_x) {
        bool any_positive = false;
        for (const auto& s : chart.series)
            for (double x : s.x) any_positive |= x > 0.0;
        log_x = any_positive;
    }
    const auto tx = [&](double x) { return log_x ? std::log10(x) : x; };
    const auto keep = [&](double x, double y) { return std::isfinite(y) && std::isfinite(x) && (!log_x || x > 0.0); };

    Range xr, yr;
    for (const auto& s : chart.series)
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            if (keep(s.x[i], s.y[i])) {
                xr.add(tx(s.x[i]));
                yr.add(s.y[i]);
            }
    xr.widen();
    yr.widen();
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    const auto px = [&](double x) { return kLeft + (tx(x) - xr.lo) / (xr.hi - xr.lo) * pw; };
    const auto py = [&](double y) { return kTop + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::string out = header(chart.title);
    out += "<g id=\"axes\" stroke=\"black\" fill=\"none\">\n<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) +
           "\" width=\"" + num(pw) + "\" height=\"" + num(ph) + "\"/>\n</g>\n";
    out += "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">\n";
    for (double v : ticks(xr.lo, xr.hi)) {
        const double x = kLeft + (v - xr.lo) / (xr.hi - xr.lo) * pw;
        const std::string label = log_x ? "1e" + num(std::round(v * 100.0) / 100.0) : num(v);
        out += "<line x1=\"" + num(x) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(x) + "\" y2=\"" +
               num(kTop + ph + 5) + "\" stroke=\"black\"/>\n<text x=\"" + num(x) + "\" y=\"" + num(kTop + ph + 18) +
               "\" text-anchor=\"middle\">" + escape(label) + "</text>\n";
    }
    for (double v : ticks(yr.lo, yr.hi)) {
        const double y = kTop + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph;
        out += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(y) +
               "\" stroke=\"black\"/>\n<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(y + 4) +
               "\" text-anchor=\"end\">" + num(v) + "</text>\n";
    }
    out += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 12) + "\" text-anchor=\"middle\">" +
           escape(chart.x_label + (log_x ? " (log scale)" : "")) + "</text>\n";
    out += "<text transform=\"translate(16 " + num(kTop + ph / 2) +
           ") rotate(-90)\" text-anchor=\"middle\">" + escape(chart.y_label) + "</text>\n</g>\n";

    for (std::size_t k = 0; k < chart.series.size(); ++k) {
        const auto& s = chart.series[k];
        const std::string id = "series-" + std::to_string(k);
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            if (keep(s.x[i], s.y[i])) pts.emplace_back(px(s.x[i]), py(s.y[i]));
        out += "<g id=\"" + id + "\" class=\"" + id + "\" stroke=\"" + palette(k) + "\" fill=\"" + palette(k) + "\">\n";
        if (pts.size() >= 2) {
            out += "<polyline id=\"" + id + "-line\" class=\"" + id + "\" fill=\"none\" stroke-width=\"1.8\" points=\"";
            for (std::size_t i = 0; i < pts.size(); ++i)
                out += (i ? " " : "") + num(pts[i].first) + "," + num(pts[i].second);
            out += "\"/>\n";
        }
        if (chart.markers || pts.size() == 1)
            for (const auto& [x, y] : pts) out += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"2.5\"/>\n";
        out += "</g>\n";
        const double ly = kTop + 12 + 18.0 * static_cast<double>(k);
        out += "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"11\">\n<line x1=\"" + num(kWidth - kRight + 12) +
               "\" y1=\"" + num(ly) + "\" x2=\"" + num(kWidth - kRight + 32) + "\" y2=\"" + num(ly) + "\" stroke=\"" +
               palette(k) + "\" stroke-width=\"2\"/>\n<text x=\"" + num(kWidth - kRight + 38) + "\" y=\"" +
               num(ly + 4) + "\">" + escape(s.name) + "</text>\n</g>\n";
    }
    out += "</svg>\n";
    return out;
}

/// Grayscale heatmap: one rectangle per cell, darker for larger values.
inline std::string render_heatmap(const std::string& title, int rows, int cols, const std::vector<double>& values) {
    if (rows < 1 || cols < 1 || values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
        throw DataError("heatmap: expected " + std::to_string(rows) + " x " + std::to_string(cols) + " values, got " +
                        std::to_string(values.size()));
    constexpr double cell = 12, margin = 40;
    double hi = 0.0;
    for (double v : values) hi = std::max(hi, std::abs(v));
    const double w = 2 * margin + cell * cols, h = 2 * margin + cell * rows;
    std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      num(w) + "\" height=\"" + num(h) + "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n" +
                      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"" + num(w / 2) +
                      "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
                      escape(title) + "</text>\n<g id=\"cells\" shape-rendering=\"crispEdges\">\n";
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double v = values[static_cast<std::size_t>(r * cols + c)];
            const int level = hi > 0.0 ? static_cast<int>(std::lround(255.0 * (1.0 - std::abs(v) / hi))) : 255;
            char fill[8];
            std::snprintf(fill, sizeof fill, "#%02x%02x%02x", level, level, level);
            out += "<rect x=\"" + num(margin + cell * c) + "\" y=\"" + num(margin + cell * r) + "\" width=\"" +
                   num(cell) + "\" height=\"" + num(cell) + "\" fill=\"" + fill + "\"/>\n";
        }
    out += "</g>\n</svg>\n";
    return out;
}

struct PolarSeries {
    std::string name;
    std::vector<double> r;
    std::vector<double> phi;  ///< NaN where undefined; such points sit at the origin
};

/// Trajectory in the (r cos phi, r sin phi) plane.
inline std::string render_polar(const std::string& title, const std::vector<PolarSeries>& series) {
    LineChart chart;
    chart.title = title;
    chart.x_label = "r cos(phi)";
    chart.y_label = "r sin(phi)";
    chart.markers = true;
    for (const auto& s : series) {
        Series out{s.name, {}, {}};
        for (std::size_t i = 0; i < s.r.size(); ++i) {
            const double phi = std::isnan(s.phi[i]) ? 0.0 : s.phi[i];
            out.x.push_back(s.r[i] * std::cos(phi));
            out.y.push_back(s.r[i] * std::sin(phi));
        }
        chart.series.push_back(std::move(out));
    }
    return render(chart);
}

} // namespace shortcut::svg
