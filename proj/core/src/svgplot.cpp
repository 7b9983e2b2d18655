#include "perfdro/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "perfdro/numerics.hpp"

namespace perfdro {

namespace {

constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 16;
constexpr int kMarginTop = 36;
constexpr int kMarginBottom = 48;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr int kPaletteSize = 10;

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void include(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!(lo < hi)) {
            const double c = std::isfinite(lo) ? lo : 0.0;
            lo = c - 1.0;
            hi = c + 1.0;
        } else {
            const double m = 0.05 * (hi - lo);
            lo -= m;
            hi += m;
        }
    }
};

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

// Tick label: fixed precision trimmed of trailing zeros.
std::string tick_label(double v) {
    std::string s = format_fixed(v, 4);
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    if (s == "-0") s = "0";
    return s;
}

}  // namespace

void write_svg(std::ostream& out, const LineChart& chart) {
    Range xr, yr;
    for (const ChartSeries& s : chart.series) {
        if (s.x.size() != s.y.size())
            throw std::invalid_argument("write_svg: x/y length mismatch in series " + s.label);
        if (!s.band_lo.empty() &&
            (s.band_lo.size() != s.x.size() || s.band_hi.size() != s.x.size()))
            throw std::invalid_argument("write_svg: band length mismatch in series " + s.label);
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xr.include(s.x[i]);
            yr.include(s.y[i]);
            if (!s.band_lo.empty()) {
                yr.include(s.band_lo[i]);
                yr.include(s.band_hi[i]);
            }
        }
    }
    xr.pad();
    yr.pad();

    const double plot_w = chart.width - kMarginLeft - kMarginRight;
    const double plot_h = chart.height - kMarginTop - kMarginBottom;
    auto px = [&](double x) {
        return kMarginLeft + (x - xr.lo) / (xr.hi - xr.lo) * plot_w;
    };
    auto py = [&](double y) {
        return kMarginTop + (yr.hi - y) / (yr.hi - yr.lo) * plot_h;
    };
    auto fmt = [](double v) { return format_fixed(v, 2); };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << chart.width
        << "\" height=\"" << chart.height << "\" viewBox=\"0 0 " << chart.width << ' '
        << chart.height << "\">\n";
    out << "<rect width=\"" << chart.width << "\" height=\"" << chart.height
        << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << chart.width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << esc(chart.title) << "</text>\n";

    // Axes and ticks.
    out << "<g stroke=\"#333333\" stroke-width=\"1\">\n";
    out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\""
        << kMarginLeft + plot_w << "\" y2=\"" << kMarginTop + plot_h << "\"/>\n";
    out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\""
        << kMarginLeft << "\" y2=\"" << kMarginTop + plot_h << "\"/>\n";
    out << "</g>\n";
    constexpr int kTicks = 5;
    out << "<g font-family=\"sans-serif\" font-size=\"10\" fill=\"#333333\">\n";
    for (int t = 0; t <= kTicks; ++t) {
        const double fx = xr.lo + (xr.hi - xr.lo) * t / kTicks;
        const double fy = yr.lo + (yr.hi - yr.lo) * t / kTicks;
        out << "<line x1=\"" << fmt(px(fx)) << "\" y1=\"" << fmt(kMarginTop + plot_h)
            << "\" x2=\"" << fmt(px(fx)) << "\" y2=\"" << fmt(kMarginTop + plot_h + 4)
            << "\" stroke=\"#333333\"/>\n";
        out << "<text x=\"" << fmt(px(fx)) << "\" y=\"" << fmt(kMarginTop + plot_h + 16)
            << "\" text-anchor=\"middle\">" << tick_label(fx) << "</text>\n";
        out << "<line x1=\"" << fmt(kMarginLeft - 4) << "\" y1=\"" << fmt(py(fy))
            << "\" x2=\"" << fmt(kMarginLeft) << "\" y2=\"" << fmt(py(fy))
            << "\" stroke=\"#333333\"/>\n";
        out << "<text x=\"" << fmt(kMarginLeft - 7) << "\" y=\"" << fmt(py(fy) + 3)
            << "\" text-anchor=\"end\">" << tick_label(fy) << "</text>\n";
    }
    out << "</g>\n";
    out << "<text x=\"" << kMarginLeft + plot_w / 2 << "\" y=\"" << chart.height - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << esc(chart.x_label) << "</text>\n";
    out << "<text x=\"14\" y=\"" << kMarginTop + plot_h / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        << "transform=\"rotate(-90 14 " << kMarginTop + plot_h / 2 << ")\">"
        << esc(chart.y_label) << "</text>\n";

    // Bands first so lines draw on top.
    for (std::size_t si = 0; si < chart.series.size(); ++si) {
        const ChartSeries& s = chart.series[si];
        if (s.band_lo.empty() || s.x.empty()) continue;
        const char* color = kPalette[si % kPaletteSize];
        out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            out << fmt(px(s.x[i])) << ',' << fmt(py(s.band_hi[i])) << ' ';
        for (std::size_t i = s.x.size(); i-- > 0;)
            out << fmt(px(s.x[i])) << ',' << fmt(py(s.band_lo[i])) << ' ';
        out << "\"/>\n";
    }
    for (std::size_t si = 0; si < chart.series.size(); ++si) {
        const ChartSeries& s = chart.series[si];
        if (s.x.empty()) continue;
        const char* color = kPalette[si % kPaletteSize];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            out << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i])) << ' ';
        out << "\"/>\n";
    }

    // Legend.
    out << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for (std::size_t si = 0; si < chart.series.size(); ++si) {
        const double ly = kMarginTop + 8 + 14.0 * static_cast<double>(si);
        const char* color = kPalette[si % kPaletteSize];
        out << "<line x1=\"" << fmt(kMarginLeft + plot_w - 110) << "\" y1=\"" << fmt(ly)
            << "\" x2=\"" << fmt(kMarginLeft + plot_w - 92) << "\" y2=\"" << fmt(ly)
            << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << fmt(kMarginLeft + plot_w - 88) << "\" y=\"" << fmt(ly + 4)
            << "\">" << esc(chart.series[si].label) << "</text>\n";
    }
    out << "</g>\n</svg>\n";
}

}  // namespace perfdro
