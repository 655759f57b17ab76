// One pass/fail line per acceptance criterion. `--only N` runs a single one.

#include "nhop/analysis.hpp"
#include "nhop/divergence.hpp"
#include "nhop/ensemble.hpp"
#include "nhop/estimation.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

using namespace nhop;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets, fixed here so every run checks the same thing.
constexpr double kWorkedExampleTol = 0.005;
constexpr double kEvalResidualTol = 1e-8;
constexpr double kValueMatchTol = 1e-8;
constexpr double kApeThreshold = 0.1;
constexpr int kApeSeedsRequired = 8;
constexpr double kWeightSumTol = 1e-9;
constexpr double kProp4Gamma = 1.0 - 1e-5;
constexpr double kProp4RelTol = 1e-6;
constexpr double kLateFraction = 0.1;
constexpr double kVarianceRatio = 0.1;
constexpr double kMeanZ = 3.0;
constexpr std::size_t kProp1Iterations = 100'000;
constexpr std::size_t kVarianceIterations = 50'000;
constexpr double kEstimationFinal = 0.1;
constexpr int kJsdPairs = 1000;
constexpr double kJsdTol = 1e-12;

const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
const std::vector<ProbeCell> kProbes = {{6, 1}, {20, 0}};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << x;
  return os.str();
}

SamplingConfig neql_sampling(std::vector<unsigned> orders) {
  SamplingConfig cfg;
  cfg.trajectory_length = 10;
  cfg.min_transition_visits = 40;
  cfg.num_environments = orders.size();
  cfg.orders = std::move(orders);
  return cfg;
}

ScheduleSet schedules(double c1, double c4) {
  ScheduleSet s;
  s.c1 = c1;
  s.c4 = c4;
  s.c2 = default_epsilon_bases(4);
  s.c3 = 0.01;
  s.u_form = UpdateRatioForm::kExponential;
  return s;
}

Reference reference_for(const TabularEnvironment& env, double gamma) {
  return Reference::from(value_iteration(env.ptt(), env.costs(), DiscountFactor(gamma)));
}

Outcome c1_worked_example() {
  Vector q(4);
  q << 1, 1.4, 0.8, 2;
  const Vector p = q_to_probabilities(q);
  const double expected[] = {0.31, 0.21, 0.37, 0.11};
  double worst = 0.0;
  for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(p(i) - expected[i]));
  return {worst <= kWorkedExampleTol, "probabilities [" + fmt(p(0), 3) + ", " + fmt(p(1), 3) + ", " + fmt(p(2), 3) +
                                          ", " + fmt(p(3), 3) + "], max deviation " + fmt(worst, 3)};
}

Outcome c2_oracle_equivalence() {
  const std::pair<Index, Index> sizes[] = {{4, 3}, {5, 3}, {6, 3}, {7, 3}, {8, 3},
                                           {8, 2}, {10, 2}, {12, 2}, {13, 2}, {14, 2}};
  int matched = 0;
  double worst_residual = 0.0;
  double worst_value_gap = 0.0;
  std::uint64_t seed = 500;
  for (const auto& [S, A] : sizes) {
    const auto mdp = testing::random_mdp(S, A, seed++, 0.3);
    const auto C = CostModel::from_expected(mdp.costs);
    const double gamma = 0.9;
    const auto vi = value_iteration(mdp.P, C, DiscountFactor(gamma));
    const auto bf = testing::brute_force_optimum(mdp.P, mdp.costs, gamma);
    const auto v_vi = testing::evaluate_policy(mdp.P, mdp.costs, gamma, vi.policy.action_of);
    double gap = 0.0;
    for (Index s = 0; s < S; ++s) gap = std::max(gap, std::abs(v_vi[s] - bf.values[s]));
    worst_value_gap = std::max(worst_value_gap, gap);
    if (vi.policy.action_of == bf.policy) ++matched;

    RngStream rng(seed);
    Policy random{std::vector<Index>(S)};
    for (auto& a : random.action_of) a = rng.uniform_index(A);
    for (const auto& pi : {vi.policy, random}) {
      const auto q = policy_q_evaluation(mdp.P, C, DiscountFactor(gamma), pi);
      worst_residual = std::max(worst_residual, policy_bellman_residual(mdp.P, C, DiscountFactor(gamma), pi, q));
    }
  }
  const bool pass = matched == 10 && worst_value_gap < kValueMatchTol && worst_residual < kEvalResidualTol;
  return {pass, std::to_string(matched) + "/10 policies equal to enumeration, value gap " + fmt(worst_value_gap, 3) +
                    ", max evaluation residual " + fmt(worst_residual, 3)};
}

struct ConvergenceRuns {
  std::vector<double> ape_neql;
  std::vector<double> ape_simple;
  WeightStats weights;
  std::size_t logged_rows = 0;
  Index K = 0;
};

const ConvergenceRuns& convergence_runs() {
  static const ConvergenceRuns runs = [] {
    ConvergenceRuns out;
    const auto env = build_er_env({30, 2, 0.2, 2024});
    const double gamma = 0.95;
    const auto ref = reference_for(env, gamma);
    const auto cfg = neql_sampling({1, 2, 3, 5});
    const auto sched = schedules(100, 1000);
    out.K = 4;
    for (auto seed : kSeeds) {
      RunOptions opt;
      opt.reference = ref;
      opt.probes = kProbes;
      const auto r = run_neql(env, cfg, sched, DiscountFactor(gamma), seed, opt);
      out.ape_neql.push_back(ape(ref.pi_star, r.policy, ref.q_star));
      out.logged_rows += r.log.rows.size();
      out.weights.min_weight = std::min(out.weights.min_weight, r.weight_stats.min_weight);
      out.weights.max_weight = std::max(out.weights.max_weight, r.weight_stats.max_weight);
      out.weights.max_sum_deviation = std::max(out.weights.max_sum_deviation, r.weight_stats.max_sum_deviation);

      RunOptions simple = opt;
      simple.fixed_iterations = r.iterations;
      const auto s = run_simple_q(env, sched, DiscountFactor(gamma), cfg.min_transition_visits,
                                  cfg.trajectory_length, seed, simple);
      out.ape_simple.push_back(ape(ref.pi_star, s.policy, ref.q_star));
    }
    return out;
  }();
  return runs;
}

Outcome c3_convergence() {
  const auto& runs = convergence_runs();
  const int good = static_cast<int>(
      std::count_if(runs.ape_neql.begin(), runs.ape_neql.end(), [](double a) { return a <= kApeThreshold; }));
  const double m_neql = median(runs.ape_neql);
  const double m_simple = median(runs.ape_simple);
  return {good >= kApeSeedsRequired && m_neql <= m_simple,
          std::to_string(good) + "/10 seeds with APE <= " + fmt(kApeThreshold) + ", median APE " + fmt(m_neql) +
              " vs simple Q " + fmt(m_simple)};
}

Outcome c4_weight_invariants() {
  const auto& runs = convergence_runs();
  const double lo = weight_lower_bound(runs.K);
  const double hi = weight_upper_bound(runs.K);
  const auto& w = runs.weights;
  const bool pass = w.max_sum_deviation <= kWeightSumTol && w.min_weight >= lo && w.max_weight <= hi;
  return {pass, std::to_string(runs.logged_rows) + " logged iterations, max |sum-1| " + fmt(w.max_sum_deviation, 3) +
                    ", weights in [" + fmt(w.min_weight) + ", " + fmt(w.max_weight) + "] within [" + fmt(lo) + ", " +
                    fmt(hi) + "]"};
}

struct TwentyStateInstance {
  std::vector<TabularEnvironment> envs;
  Policy pi_hat;
};

// nEQL policy on a 20-state graph plus the n-hop environments of its estimated model.
const TwentyStateInstance& twenty_state_instance() {
  static const TwentyStateInstance inst = [] {
    const auto env = build_er_env({20, 2, 0.2, 2024});
    const auto r = run_neql(env, neql_sampling({1, 2, 3, 5}), schedules(100, 1000), DiscountFactor(0.95), 1);
    TwentyStateInstance out;
    out.pi_hat = r.policy;
    out.envs = build_multiscale_envs(r.model->p_hat, r.model->c_hat, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12});
    return out;
  }();
  return inst;
}

Outcome c5_prop3() {
  const auto& inst = twenty_state_instance();
  std::vector<TabularEnvironment> envs(inst.envs.begin(), inst.envs.begin() + 10);
  const auto report = check_prop3(envs, inst.pi_hat, DiscountFactor(0.95), "er20");
  double worst_ratio = 0.0;
  for (const auto& row : report.rows)
    if (row.asserted) worst_ratio = std::max(worst_ratio, row.value / row.threshold);
  return {report.passed(), "n = 2..10, largest gap/bound ratio " + fmt(worst_ratio)};
}

Outcome c6_prop4() {
  const auto& inst = twenty_state_instance();
  const auto report =
      check_prop4_ordering(inst.envs, inst.pi_hat, DiscountFactor(kProp4Gamma), {{1, 2, 4, 8}, {3, 6, 12}}, kProp4RelTol);
  std::string detail;
  for (const auto& row : report.rows)
    detail += (detail.empty() ? "" : ", ") + row.statistic + " shortfall " + fmt(row.value, 3);
  return {report.passed(), detail};
}

Outcome c7_prop1() {
  const auto env = build_er_env({30, 2, 0.2, 2024});
  const double gamma = 0.95;
  const auto ref = reference_for(env, gamma);
  const auto sched = schedules(1000, 10000);
  std::vector<ErrorTrace> traces;
  std::vector<double> final_u;
  std::vector<std::string> labels;
  for (auto seed : kSeeds) {
    RunOptions opt;
    opt.reference = ref;
    opt.probes = kProbes;
    opt.fixed_iterations = kProp1Iterations;
    auto r = run_neql(env, neql_sampling({1, 2, 3, 5}), sched, DiscountFactor(gamma), seed, opt);
    traces.push_back(std::move(r.log.trace));
    final_u.push_back(sched.update_ratio(kProp1Iterations - 1));
    labels.push_back("seed" + std::to_string(seed));
  }
  const auto report = check_prop1_behavior(traces, final_u, labels, kLateFraction);
  bool pass = true;
  double worst_ratio = 0.0;
  std::string means;
  for (const auto& row : report.rows) {
    if (row.statistic.rfind("late_early_var_ratio", 0) == 0) {
      worst_ratio = std::max(worst_ratio, row.value);
      pass = pass && row.value <= kVarianceRatio;
    } else if (row.statistic.rfind("late_mean_over_se", 0) == 0) {
      pass = pass && row.value <= kMeanZ;
      means += " z=" + fmt(row.value, 3) + ";";
    } else if (row.statistic.rfind("late_mean_", 0) == 0) {
      means += " " + row.statistic.substr(std::string("late_mean_").size()) + " mean=" + fmt(row.value, 3) +
               " se=" + fmt(row.threshold, 3);
    }
  }
  return {pass, "worst late/early variance ratio " + fmt(worst_ratio, 3) + ";" + means};
}

Outcome c8_variance_vs_k() {
  const auto env = build_er_env({100, 2, 0.2, 2024});
  VarianceVsKConfig cfg;
  cfg.K_list = {2, 4, 6};
  cfg.seeds = kSeeds;
  cfg.iterations = kVarianceIterations;
  cfg.sampling = neql_sampling({1, 2});
  cfg.schedules = schedules(1000, 10000);
  cfg.gamma = 0.95;
  cfg.probes = kProbes;
  cfg.late_fraction = kLateFraction;
  const auto result = check_variance_vs_k(env, reference_for(env, cfg.gamma), cfg);
  std::string detail;
  for (const auto& e : result.entries)
    detail += (detail.empty() ? "" : ", ") + ("K=" + std::to_string(e.K)) + " median " + fmt(e.median, 3) + " (se " +
              fmt(e.standard_error, 2) + ")";
  return {result.report.passed(), detail};
}

Outcome c9_estimation() {
  const auto env = build_er_env({100, 2, 0.2, 2024});
  const std::size_t S = env.num_states();
  const std::size_t final_samples = 50 * S;
  std::vector<std::size_t> milestones;
  for (std::size_t m = S; m < final_samples; m *= 2) milestones.push_back(m);
  milestones.push_back(final_samples);

  std::vector<std::vector<double>> errors(milestones.size());
  for (auto seed : kSeeds) {
    SamplingConfig cfg = neql_sampling({1, 2});
    cfg.min_transition_visits = 1'000'000;
    cfg.max_total_samples = final_samples;
    EstimationOptions options;
    options.milestones = milestones;
    std::size_t next = 0;
    options.observer = [&](std::size_t samples, const TransitionTensor& p_hat) {
      const double e = estimation_error(env.ptt(), p_hat);
      while (next < milestones.size() && milestones[next] <= samples) errors[next++].push_back(e);
    };
    RngStream rng(derive_seed(seed, 0xE5));
    estimate_model(env, cfg, rng, options);
  }
  bool decreasing = true;
  std::string detail = "median error";
  double prev = 0.0;
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    const double m = median(errors[i]);
    if (i > 0 && !(m < prev)) decreasing = false;
    detail += " " + std::to_string(milestones[i]) + ":" + fmt(m, 3);
    prev = m;
  }
  return {decreasing && prev < kEstimationFinal, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome c10_determinism() {
  const fs::path root = fs::temp_directory_path() / ("nhop_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path config = root / "config.json";
  std::ofstream(config) << R"({
  "environment": {"family": "er", "num_states": 30, "seed": 2024},
  "sampling": {"l": 10, "v": 40, "K": 4, "orders": [1, 2, 3, 5]},
  "schedules": {"c1": 100, "c4": 1000},
  "seeds": [1, 2, 3, 4, 5, 6, 7, 8],
  "probes": [[6, 1], [20, 0]],
  "log_every": 10,
  "verify": {"variance_iterations": 5000, "variance_K": [2, 4]}
})";
  std::size_t compared = 0;
  std::vector<std::string> mismatches;
  for (const std::string command : {"estimate", "train", "verify"}) {
    std::vector<fs::path> dirs;
    for (const auto& [threads, tag] : {std::pair{1, "t1"}, std::pair{8, "t8"}, std::pair{8, "t8b"}}) {
      const fs::path out = root / (command + "_" + tag);
      std::string cmd = std::string(NHOP_EQL_BINARY) + " " + command + " --config " + config.string() + " --out " +
                        out.string() + " --threads " + std::to_string(threads);
      if (command == "train") cmd += " --baseline simple";
      cmd += " >/dev/null 2>&1";
      if (std::system(cmd.c_str()) == -1) mismatches.push_back(command + ": could not launch");
      dirs.push_back(out);
    }
    if (!fs::exists(dirs[0]) || fs::is_empty(dirs[0])) mismatches.push_back(command + ": no output");
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
      const auto name = entry.path().filename();
      if (name == "run_info.json") continue;
      const std::string ref = slurp(entry.path());
      for (std::size_t k = 1; k < dirs.size(); ++k) {
        ++compared;
        if (!fs::exists(dirs[k] / name) || slurp(dirs[k] / name) != ref)
          mismatches.push_back(command + "/" + name.string());
      }
    }
  }
  fs::remove_all(root);
  std::string detail = std::to_string(compared) + " file comparisons across 1 and 8 threads and a rerun";
  if (!mismatches.empty()) detail += ", mismatched: " + mismatches.front() + " (+" + std::to_string(mismatches.size() - 1) + ")";
  return {mismatches.empty() && compared > 0, detail};
}

Outcome c11_jsd_properties() {
  Vector p(2), q(2);
  p << 1, 0;
  q << 0, 1;
  bool pass = std::abs(jsd(p, p)) <= kJsdTol && std::abs(jsd(p, q) - 1.0) <= kJsdTol;
  RngStream rng(2024);
  double worst_asym = 0.0;
  double lo = 1.0, hi = 0.0;
  for (int k = 0; k < kJsdPairs; ++k) {
    const Index n = 2 + rng.uniform_index(7);
    Vector a(n), b(n);
    for (Index i = 0; i < n; ++i) {
      a(i) = rng.uniform01() < 0.2 ? 0.0 : rng.uniform01();
      b(i) = rng.uniform01() < 0.2 ? 0.0 : rng.uniform01();
    }
    if (a.sum() == 0) a(0) = 1;
    if (b.sum() == 0) b(n - 1) = 1;
    a /= a.sum();
    b /= b.sum();
    const double d = jsd(a, b);
    worst_asym = std::max(worst_asym, std::abs(d - jsd(b, a)));
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    pass = pass && d >= 0.0 && d <= 1.0 && std::abs(jsd(a, a)) <= kJsdTol;
  }
  pass = pass && worst_asym <= kJsdTol;
  return {pass, std::to_string(kJsdPairs) + " random pairs, range [" + fmt(lo, 3) + ", " + fmt(hi, 3) +
                    "], max asymmetry " + fmt(worst_asym, 3)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  const std::vector<Criterion> criteria = {
      {1, "worked example probabilities", c1_worked_example},
      {2, "value iteration matches exhaustive enumeration", c2_oracle_equivalence},
      {3, "ensemble convergence on 30-state graph", c3_convergence},
      {4, "weight simplex and extremes", c4_weight_invariants},
      {5, "n-hop evaluation gap below bound", c5_prop3},
      {6, "n-hop partial ordering near gamma = 1", c6_prop4},
      {7, "iterate error unbiased with shrinking variance", c7_prop1},
      {8, "late variance nonincreasing in K", c8_variance_vs_k},
      {9, "estimation error consistency", c9_estimation},
      {10, "byte-identical outputs across thread counts", c10_determinism},
      {11, "divergence properties", c11_jsd_properties},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (only && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << c.id << " " << (o.pass ? "PASS" : "FAIL") << " " << c.name << " (" << fmt(secs, 3)
              << " s): " << o.detail << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
