#pragma once

// Minimal static SVG line charts: axes, optional log scales, a legend.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "specclip/harness/config.hpp"
#include "specclip/harness/records.hpp"

namespace specclip {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotOptions {
    bool log_x = false;
    bool log_y = false;
    std::string title;
    std::string x_label = "x";
    std::string y_label = "y";
    int width = 640;
    int height = 420;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    [[nodiscard]] bool empty() const { return !(lo <= hi); }
    void pad() {
        if (empty()) { lo = 0.0; hi = 1.0; }
        if (hi == lo) { lo -= 0.5; hi += 0.5; }
    }
};

}  // namespace detail

/// Points that are non-finite, or nonpositive on a log axis, are dropped.
inline std::string render_svg_lineplot(const std::vector<Series>& series, const PlotOptions& opt = {}) {
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw std::invalid_argument("series '" + s.label + "': x and y lengths differ");
    }
    const auto tx = [&](double v) { return opt.log_x ? std::log10(v) : v; };
    const auto ty = [&](double v) { return opt.log_y ? std::log10(v) : v; };
    const auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!opt.log_x || x > 0) && (!opt.log_y || y > 0);
    };

    detail::Range rx, ry;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (usable(s.x[i], s.y[i])) {
                rx.add(tx(s.x[i]));
                ry.add(ty(s.y[i]));
            }
    rx.pad();
    ry.pad();

    const double left = 70, right = 150, top = 40, bottom = 50;
    const double pw = opt.width - left - right;
    const double ph = opt.height - top - bottom;
    const auto px = [&](double v) { return left + (tx(v) - rx.lo) / (rx.hi - rx.lo) * pw; };
    const auto py = [&](double v) { return top + ph - (ty(v) - ry.lo) / (ry.hi - ry.lo) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect x=\"0\" y=\"0\" width=\"" << opt.width << "\" height=\"" << opt.height << "\" fill=\"white\"/>\n";
    if (!opt.title.empty())
        o << "<text x=\"" << opt.width / 2 << "\" y=\"22\" text-anchor=\"middle\">" << detail::xml_escape(opt.title)
          << "</text>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";

    const auto tick_label = [](double v, bool log) { return format_double(log ? std::pow(10.0, v) : v); };
    for (int t = 0; t <= 4; ++t) {
        const double fx = rx.lo + (rx.hi - rx.lo) * t / 4.0;
        const double fy = ry.lo + (ry.hi - ry.lo) * t / 4.0;
        const double sx = left + pw * t / 4.0;
        const double sy = top + ph - ph * t / 4.0;
        o << "<text x=\"" << sx << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
          << detail::xml_escape(tick_label(fx, opt.log_x)) << "</text>\n";
        o << "<text x=\"" << left - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">"
          << detail::xml_escape(tick_label(fy, opt.log_y)) << "</text>\n";
    }
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << opt.height - 10 << "\" text-anchor=\"middle\">"
      << detail::xml_escape(opt.x_label + (opt.log_x ? " (log)" : "")) << "</text>\n";
    o << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << top + ph / 2
      << ")\">" << detail::xml_escape(opt.y_label + (opt.log_y ? " (log)" : "")) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* colour = detail::kPalette[k % std::size(detail::kPalette)];
        o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!usable(s.x[i], s.y[i])) continue;
            o << (first ? "" : " ") << px(s.x[i]) << ',' << py(s.y[i]);
            first = false;
        }
        o << "\"/>\n";
        const double ly = top + 14 + 18.0 * static_cast<double>(k);
        o << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly
          << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << detail::xml_escape(s.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

inline void emit_svg_lineplot(const std::vector<Series>& series, const std::string& path, const PlotOptions& opt = {}) {
    write_text_file(path, render_svg_lineplot(series, opt));
}

}  // namespace specclip
