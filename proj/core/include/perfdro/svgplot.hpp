#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace perfdro {

// One polyline with an optional shaded band (typically mean +/- standard
// error). Band vectors are either empty or the same length as x.
struct ChartSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> band_lo;
    std::vector<double> band_hi;
};

struct LineChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<ChartSeries> series;
    int width = 640;
    int height = 420;
};

// Minimal static SVG line chart: axes, ticks, legend, shaded bands. Output
// is deterministic for identical input.
void write_svg(std::ostream& out, const LineChart& chart);

}  // namespace perfdro
