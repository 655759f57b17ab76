#include "nhop/metrics.hpp"

#include "nhop/tensor_io.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

namespace nhop {

double ape(const Policy& pi_star, const Policy& pi_hat, const QTable& q_star, double tol, ApeMode mode) {
  if (pi_star.size() != pi_hat.size() || pi_hat.size() != q_star.num_states())
    throw std::invalid_argument("ape: policies and Q* cover different state spaces");
  if (pi_hat.size() == 0) return 0.0;
  std::size_t wrong = 0;
  for (Index s = 0; s < pi_hat.size(); ++s) {
    if (mode == ApeMode::kStrict)
      wrong += pi_hat[s] != pi_star[s];
    else
      wrong += q_star(s, pi_hat[s]) > q_star.min_value(s) + tol;
  }
  return static_cast<double>(wrong) / static_cast<double>(pi_hat.size());
}

namespace {

struct Moments {
  double mean;
  double var;
};

Moments clipped_moments(const std::vector<double>& x, std::size_t i, std::size_t half) {
  const std::size_t lo = i >= half ? i - half : 0;
  const std::size_t hi = std::min(x.size() - 1, i + half);
  double s = 0.0;
  double s2 = 0.0;
  for (std::size_t j = lo; j <= hi; ++j) {
    s += x[j];
    s2 += x[j] * x[j];
  }
  const double n = static_cast<double>(hi - lo + 1);
  const double mean = s / n;
  return {mean, std::max(0.0, s2 / n - mean * mean)};
}

}  // namespace

void MetricsLog::write_csv(std::ostream& os, std::size_t window_half_width) const {
  os << "# " << kMetricsCsvVersion << '\n';
  for (const auto& [k, v] : metadata) os << "# " << k << '=' << v << '\n';

  const bool has_ape = !rows.empty() && rows.front().ape_ensemble.has_value();
  os << "t,u";
  for (const auto& l : labels) os << ",w_" << l;
  if (has_ape) {
    os << ",ape_it";
    for (const auto& l : labels) os << ",ape_" << l;
  }
  const bool has_trace = trace.length() == rows.size() && !trace.probes.empty();
  if (has_trace) {
    for (const auto& p : trace.probes) {
      const std::string tag = "_s" + std::to_string(p.state) + "_a" + std::to_string(p.action);
      os << ",err_it" << tag << ",mean_it" << tag << ",var_it" << tag;
    }
  }
  os << '\n';

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << r.t << ',' << format_double(r.u);
    for (double w : r.weights) os << ',' << format_double(w);
    if (has_ape) {
      os << ',' << format_double(r.ape_ensemble.value_or(0.0));
      for (double a : r.ape_learners) os << ',' << format_double(a);
    }
    if (has_trace) {
      for (const auto& series : trace.ensemble) {
        const auto m = clipped_moments(series, i, window_half_width);
        os << ',' << format_double(series[i]) << ',' << format_double(m.mean) << ',' << format_double(m.var);
      }
    }
    os << '\n';
  }
}

}  // namespace nhop
