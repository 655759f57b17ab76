#include "nhop/analysis.hpp"

#include "nhop/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace nhop {

WindowMoments window_moments(const std::vector<double>& x, std::size_t begin, std::size_t end) {
  if (begin >= end || end > x.size()) throw std::out_of_range("window outside the series");
  double s = 0.0;
  double s2 = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    s += x[i];
    s2 += x[i] * x[i];
  }
  const double n = static_cast<double>(end - begin);
  const double mean = s / n;
  return {mean, std::max(0.0, s2 / n - mean * mean)};
}

WindowMoments error_moments(const std::vector<double>& series, std::size_t t, std::size_t delta) {
  if (t < delta || t + delta >= series.size()) throw std::out_of_range("error_moments: window outside the trace");
  return window_moments(series, t - delta, t + delta + 1);
}

double prop1_bound(const BoundParams& p) { return (1.0 - p.u) / (1.0 + p.u) * p.lambda * p.lambda; }

double cor2_bound(const BoundParams& p) {
  return 2.0 * p.lambda * p.lambda / ((1.0 + p.u) * (1.0 + p.u)) + prop1_bound(p);
}

double prop3_bound(const BoundParams& p) {
  if (p.n <= 1) throw std::invalid_argument("prop3_bound needs n > 1");
  if (!(p.gamma > 0.0 && p.gamma < 1.0)) throw std::invalid_argument("prop3_bound needs gamma in (0, 1)");
  const double n = static_cast<double>(p.n);
  return p.gamma / (1.0 - std::pow(p.gamma, n)) * (1.0 - std::pow(p.gamma, n - 1.0)) / (1.0 - p.gamma) * p.cost_norm;
}

bool Report::passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return !r.asserted || r.pass; });
}

void Report::write_csv(std::ostream& os) const {
  os << "# " << kReportCsvVersion << '\n';
  os << "check,instance,statistic,value,threshold,pass,asserted\n";
  for (const auto& r : rows) {
    os << r.check << ',' << r.instance << ',' << r.statistic << ',' << format_double(r.value) << ','
       << format_double(r.threshold) << ',' << (r.pass ? "pass" : "fail") << ','
       << (r.asserted ? "asserted" : "informational") << '\n';
  }
}

namespace {

Vector flatten(const QTable& q) { return Eigen::Map<const Vector>(q.values().data(), q.values().size()); }

}  // namespace

Report check_prop3(const std::vector<TabularEnvironment>& envs, const Policy& pi_hat, DiscountFactor gamma,
                   const std::string& instance) {
  if (envs.empty() || envs.front().order() != 1) throw std::invalid_argument("check_prop3: first environment must have order 1");
  Report report;
  const auto& base = envs.front();
  const QTable q1 = policy_q_evaluation(base.ptt(), base.costs(), gamma, pi_hat);
  const double cost_norm = policy_cost_vector(base.costs(), pi_hat).norm();

  std::vector<double> gaps;
  for (std::size_t i = 1; i < envs.size(); ++i) {
    const auto& env = envs[i];
    const QTable qn = policy_q_evaluation(env.ptt(), env.costs(), gamma, pi_hat);
    const double gap = (flatten(q1) - flatten(qn)).norm();
    BoundParams p;
    p.gamma = gamma.value();
    p.n = env.order();
    p.cost_norm = cost_norm;
    const double bound = prop3_bound(p);
    report.add({"prop3", instance, "q_gap_n" + std::to_string(env.order()), gap, bound, gap < bound, true});
    gaps.push_back(gap);
  }
  bool monotone_up = true;
  bool monotone_down = true;
  for (std::size_t i = 1; i < gaps.size(); ++i) {
    monotone_up = monotone_up && gaps[i] >= gaps[i - 1];
    monotone_down = monotone_down && gaps[i] <= gaps[i - 1];
  }
  report.add({"prop3", instance, "gap_monotone_in_n", (monotone_up || monotone_down) ? 1.0 : 0.0, 0.0, true, false});
  return report;
}

Report check_prop4_ordering(const std::vector<TabularEnvironment>& envs, const Policy& pi_hat, DiscountFactor gamma,
                            const std::vector<std::vector<unsigned>>& chains, double rel_tol,
                            const std::string& instance) {
  PolicyEvaluationOptions eval;
  eval.tolerance = 1e-6;
  std::map<unsigned, QTable> q;
  for (const auto& env : envs) q.emplace(env.order(), policy_q_evaluation(env.ptt(), env.costs(), gamma, pi_hat, eval));

  // largest relative shortfall of lhs below rhs; <= rel_tol means lhs >= rhs holds
  auto shortfall = [](const QTable& lhs, const QTable& rhs) {
    const Matrix scale = lhs.values().cwiseAbs().cwiseMax(rhs.values().cwiseAbs()).cwiseMax(1e-300);
    return ((rhs.values() - lhs.values()).array() / scale.array()).maxCoeff();
  };

  Report report;
  for (const auto& chain : chains) {
    for (std::size_t i = 1; i < chain.size(); ++i) {
      const auto hi = q.find(chain[i - 1]);
      const auto lo = q.find(chain[i]);
      if (hi == q.end() || lo == q.end())
        throw std::invalid_argument("check_prop4_ordering: chain order without an environment");
      const double gap = shortfall(hi->second, lo->second);
      report.add({"prop4", instance, "Q" + std::to_string(chain[i - 1]) + ">=Q" + std::to_string(chain[i]), gap,
                  rel_tol, gap <= rel_tol, true});
    }
  }
  if (const auto first = q.find(1); first != q.end()) {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& [n, qn] : q)
      if (n != 1) worst = std::max(worst, shortfall(first->second, qn));
    if (q.size() > 1) report.add({"prop4", instance, "Q1_largest", worst, rel_tol, worst <= rel_tol, true});
  }
  return report;
}

double median(std::vector<double> x) {
  if (x.empty()) return 0.0;
  std::sort(x.begin(), x.end());
  const std::size_t m = x.size() / 2;
  return x.size() % 2 ? x[m] : 0.5 * (x[m - 1] + x[m]);
}

namespace {

double standard_error(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1)) / std::sqrt(static_cast<double>(x.size()));
}

}  // namespace

VarianceVsKResult check_variance_vs_k(const TabularEnvironment& env, const Reference& reference,
                                      const VarianceVsKConfig& cfg, const std::string& instance) {
  if (cfg.K_list.empty() || cfg.seeds.empty() || cfg.probes.empty())
    throw std::invalid_argument("check_variance_vs_k needs K values, seeds and probe cells");
  VarianceVsKResult result;
  for (unsigned K : cfg.K_list) {
    VarianceVsKEntry entry;
    entry.K = K;
    entry.orders = select_orders(K, 4 * K);
    SamplingConfig sampling = cfg.sampling;
    sampling.num_environments = K;
    sampling.orders = entry.orders;
    ScheduleSet schedules = cfg.schedules;
    schedules.c2 = default_epsilon_bases(K);
    RunOptions options;
    options.reference = reference;
    options.probes = cfg.probes;
    options.fixed_iterations = cfg.iterations;
    for (auto seed : cfg.seeds) {
      const auto run = run_neql(env, sampling, schedules, DiscountFactor(cfg.gamma), seed, options);
      const auto& tr = run.log.trace;
      const std::size_t T = tr.length();
      const auto late = static_cast<std::size_t>(std::ceil(cfg.late_fraction * static_cast<double>(T)));
      double var = 0.0;
      for (const auto& series : tr.ensemble) var += window_moments(series, T - std::max<std::size_t>(late, 1), T).variance;
      entry.variances.push_back(var / static_cast<double>(tr.ensemble.size()));
    }
    entry.median = median(entry.variances);
    entry.standard_error = standard_error(entry.variances);
    result.report.add({"variance_vs_k", instance, "median_var_K" + std::to_string(K), entry.median,
                       entry.standard_error, true, false});
    result.entries.push_back(std::move(entry));
  }

  int inversions = 0;
  bool within_tolerance = true;
  const auto& e = result.entries;
  for (std::size_t i = 1; i < e.size(); ++i) {
    const double gap = e[i - 1].median - e[i].median;
    result.report.add({"variance_vs_k", instance,
                       "gap_K" + std::to_string(e[i - 1].K) + "_K" + std::to_string(e[i].K), gap, 0.0, true, false});
    if (gap < 0.0) {
      ++inversions;
      within_tolerance = within_tolerance && -gap <= e[i].standard_error;
    }
  }
  const bool pass = inversions == 0 || (inversions == 1 && within_tolerance);
  result.report.add({"variance_vs_k", instance, "inversions", static_cast<double>(inversions), 1.0, pass, true});
  return result;
}

Report check_prop1_behavior(const std::vector<ErrorTrace>& traces, const std::vector<double>& final_u,
                            const std::vector<std::string>& run_labels, double late_fraction,
                            const std::string& instance) {
  if (traces.empty() || traces.size() != final_u.size() || traces.size() != run_labels.size())
    throw std::invalid_argument("check_prop1_behavior: one trace, u value and label per run");
  const auto& probes = traces.front().probes;
  Report report;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const std::string cell = "_s" + std::to_string(probes[p].state) + "_a" + std::to_string(probes[p].action);
    std::vector<double> late_means;
    for (std::size_t r = 0; r < traces.size(); ++r) {
      const auto& tr = traces[r];
      if (tr.probes != probes) throw std::invalid_argument("check_prop1_behavior: runs use different probes");
      const std::size_t T = tr.length();
      const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(late_fraction * static_cast<double>(T)));
      if (2 * w > T) throw std::invalid_argument("check_prop1_behavior: trace too short");
      const auto early = window_moments(tr.ensemble[p], 0, w);
      const auto late = window_moments(tr.ensemble[p], T - w, T);
      late_means.push_back(late.mean);

      const std::string label = instance.empty() ? run_labels[r] : instance + "/" + run_labels[r];
      const double ratio = early.variance > 0.0 ? late.variance / early.variance : (late.variance > 0.0 ? 1.0 : 0.0);
      report.add({"prop1", label, "late_early_var_ratio" + cell, ratio, 0.1, ratio <= 0.1, true});
      BoundParams bp;
      bp.u = final_u[r];
      bp.lambda = estimate_lambda(tr, 0, w);
      const double bound = cor2_bound(bp);
      report.add({"prop1", label, "late_var_vs_cor2" + cell, late.variance, bound, late.variance <= bound, true});
    }
    const double m = std::accumulate(late_means.begin(), late_means.end(), 0.0) / static_cast<double>(late_means.size());
    const double se = standard_error(late_means);
    const double z = se > 0.0 ? std::abs(m) / se : (m == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    report.add({"prop1", instance, "late_mean" + cell, m, se, true, false});
    report.add({"prop1", instance, "late_mean_over_se" + cell, z, 3.0, z <= 3.0, true});
  }
  return report;
}

double distance_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("distance_correlation: lengths differ");
  if (x.size() < 2) throw std::invalid_argument("distance_correlation needs at least two samples");
  const std::size_t n = x.size();

  // row means of the pairwise distance matrices; the full matrices are never stored
  auto row_means = [n](const std::vector<double>& v, std::vector<double>& rows) {
    rows.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) rows[i] += std::abs(v[i] - v[j]);
    double grand = 0.0;
    for (auto& r : rows) {
      r /= static_cast<double>(n);
      grand += r;
    }
    return grand / static_cast<double>(n);
  };
  std::vector<double> ra;
  std::vector<double> rb;
  const double ga = row_means(x, ra);
  const double gb = row_means(y, rb);

  double vxy = 0.0;
  double vxx = 0.0;
  double vyy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = std::abs(x[i] - x[j]) - ra[i] - ra[j] + ga;
      const double b = std::abs(y[i] - y[j]) - rb[i] - rb[j] + gb;
      vxy += a * b;
      vxx += a * a;
      vyy += b * b;
    }
  }
  if (vxx <= 0.0 || vyy <= 0.0) return 0.0;
  const double r2 = vxy / std::sqrt(vxx * vyy);
  return std::sqrt(std::clamp(r2, 0.0, 1.0));
}

namespace {

double lagged_adc(const std::vector<std::vector<double>>& per_probe, const std::vector<std::size_t>& lags) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& series : per_probe) {
    for (std::size_t lag : lags) {
      if (lag == 0 || lag + 2 > series.size()) continue;
      const std::vector<double> a(series.begin(), series.end() - static_cast<std::ptrdiff_t>(lag));
      const std::vector<double> b(series.begin() + static_cast<std::ptrdiff_t>(lag), series.end());
      total += distance_correlation(a, b);
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

Report adc_error_independence(const ErrorTrace& trace, const std::vector<unsigned>& orders,
                              const std::vector<std::size_t>& lags, const std::string& instance) {
  Report report;
  for (std::size_t n = 0; n < trace.learners.size(); ++n) {
    const std::string label = n < orders.size() ? std::to_string(orders[n]) : std::to_string(n);
    report.add({"adc", instance, "adc_n" + label, lagged_adc(trace.learners[n], lags), 0.0, true, false});
  }
  if (!trace.ensemble.empty())
    report.add({"adc", instance, "adc_it", lagged_adc(trace.ensemble, lags), 0.0, true, false});
  return report;
}

WeightConvergence weight_convergence(const MetricsLog& log, double window_frac, double tol) {
  WeightConvergence out;
  const auto& rows = log.rows;
  if (rows.empty()) return out;
  out.final_weights = rows.back().weights;
  out.ordering.resize(out.final_weights.size());
  std::iota(out.ordering.begin(), out.ordering.end(), std::size_t{0});
  std::stable_sort(out.ordering.begin(), out.ordering.end(),
                   [&](std::size_t a, std::size_t b) { return out.final_weights[a] > out.final_weights[b]; });

  const std::size_t N = rows.size();
  const std::size_t window =
      std::max<std::size_t>(1, static_cast<std::size_t>(window_frac * static_cast<double>(N)));
  auto change = [&](std::size_t i) {
    double m = 0.0;
    for (std::size_t k = 0; k < rows[i].weights.size(); ++k)
      m = std::max(m, std::abs(rows[i].weights[k] - rows[i - window].weights[k]));
    return m;
  };

  std::size_t last_moving = 0;
  bool moved = false;
  for (std::size_t i = window; i < N; ++i) {
    if (change(i) >= tol) {
      last_moving = i;
      moved = true;
    }
  }
  if (!moved) {
    out.converged_at = rows.front().t;
    out.converged = true;
  } else if (last_moving + 1 < N) {
    out.converged_at = rows[last_moving + 1].t;
    out.converged = true;
  } else {
    out.converged_at = N;
  }

  const std::size_t tail_begin = std::max(window, N - std::min(N, window));
  for (std::size_t i = tail_begin; i < N; ++i) out.final_window_change = std::max(out.final_window_change, change(i));
  return out;
}

double estimate_lambda(const ErrorTrace& trace, std::size_t begin, std::size_t end) {
  double lambda = 0.0;
  for (const auto& learner : trace.learners) {
    if (learner.empty()) continue;
    double var = 0.0;
    for (const auto& series : learner) var += window_moments(series, begin, end).variance;
    lambda = std::max(lambda, std::sqrt(3.0 * var / static_cast<double>(learner.size())));
  }
  return lambda;
}

}  // namespace nhop
