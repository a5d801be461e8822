#include "deltarad/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace deltarad {

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& labels,
                         const std::vector<double>& values, const std::string& comment) {
    if (labels.size() != values.size())
        throw std::invalid_argument("svg: label/value count mismatch");
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write SVG: " + path);

    const int n = static_cast<int>(values.size());
    const int bar_h = 22, gap = 6, left = 220, top = 40;
    const int width = 640, chart_w = width - left - 30;
    const int height = top + n * (bar_h + gap) + 20;
    double vmax = 0.0;
    for (double v : values) vmax = std::max(vmax, v);
    if (vmax <= 0.0) vmax = 1.0;

    char buf[512];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\">\n";
    if (!comment.empty()) os << "<!-- " << comment << " -->\n";
    os << "<style>text{font-family:monospace;font-size:12px;}</style>\n";
    os << "<text x=\"10\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
    for (int i = 0; i < n; ++i) {
        const int y = top + i * (bar_h + gap);
        const int w = static_cast<int>(chart_w * values[i] / vmax + 0.5);
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"10\" y=\"%d\">%s</text>"
                      "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"#4477aa\"/>"
                      "<text x=\"%d\" y=\"%d\">%.6g</text>\n",
                      y + bar_h - 7, labels[i].c_str(), left, y, std::max(w, 1), bar_h,
                      left + std::max(w, 1) + 6, y + bar_h - 7, values[i]);
        os << buf;
    }
    os << "</svg>\n";
}

}  // namespace deltarad
