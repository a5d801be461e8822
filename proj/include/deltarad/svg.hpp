#pragma once

#include <string>
#include <vector>

namespace deltarad {

/// Minimal deterministic SVG bar chart: fixed layout, fixed number
/// formatting, no timestamps. `comment` is embedded as an XML comment so
/// artifacts can carry the config hash.
void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& labels,
                         const std::vector<double>& values, const std::string& comment = "");

}  // namespace deltarad
