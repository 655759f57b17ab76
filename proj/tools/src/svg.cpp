#include "nhop_cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nhop::cli {

std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::vector<double>& x,
                          const std::vector<Series>& series, bool log_x) {
  constexpr double W = 640, H = 400, L = 60, R = 140, T = 40, B = 50;
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  auto fx = [&](double v) { return log_x ? std::log10(std::max(v, 1e-300)) : v; };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (double v : x) {
    x0 = std::min(x0, fx(v));
    x1 = std::max(x1, fx(v));
  }
  for (const auto& s : series)
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  auto px = [&](double v) { return L + (fx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << x_label << (log_x ? " (log)" : "") << "</text>\n";
  os << "<text x=\"" << L - 6 << "\" y=\"" << py(y1) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << y1 << "</text>\n";
  os << "<text x=\"" << L - 6 << "\" y=\"" << py(y0) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << y0 << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* c = colors[k % 10];
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    const std::size_t n = std::min(x.size(), series[k].y.size());
    // thin long series to roughly one point per pixel
    const std::size_t step = std::max<std::size_t>(1, n / 1000);
    for (std::size_t i = 0; i < n; i += step)
      if (std::isfinite(series[k].y[i])) os << px(x[i]) << ',' << py(series[k].y[i]) << ' ';
    os << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(k);
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
       << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << series[k].label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace nhop::cli
