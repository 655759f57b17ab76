#pragma once

#include <string>
#include <utility>
#include <vector>

namespace nhop::cli {

struct Series {
  std::string label;
  std::vector<double> y;
};

/// Minimal line chart; all series share x.
std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::vector<double>& x,
                          const std::vector<Series>& series, bool log_x = false);

}  // namespace nhop::cli
