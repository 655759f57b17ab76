#include "nhop_cli/commands.hpp"

#include "nhop/analysis.hpp"
#include "nhop/divergence.hpp"
#include "nhop/ensemble.hpp"
#include "nhop/estimation.hpp"
#include "nhop/log.hpp"
#include "nhop/tensor_io.hpp"
#include "nhop_cli/svg.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace nhop::cli {

namespace fs = std::filesystem;

std::string resolve_out_dir(const ExperimentConfig& cfg, const CommandOptions& options) {
  if (!options.out_dir.empty()) return options.out_dir;
  if (const char* env = std::getenv("NHOP_EQL_OUT"); env && *env) return env;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  return "nhop-out";
}

unsigned resolve_threads(const ExperimentConfig& cfg, const CommandOptions& options) {
  if (options.threads > 0) return options.threads;
  if (const char* env = std::getenv("NHOP_EQL_THREADS"); env && *env) {
    char* end = nullptr;
    const unsigned long n = std::strtoul(env, &end, 10);
    if (end && *end == '\0' && n > 0) return static_cast<unsigned>(n);
    throw ConfigError("NHOP_EQL_THREADS", "must be a positive integer");
  }
  return cfg.threads;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
}

namespace {

template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned used = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (used <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < used; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Files produced for one seed, kept in memory until every seed is done so
// the write order never depends on scheduling.
using FileSet = std::map<std::string, std::string>;

struct Context {
  const ExperimentConfig& cfg;
  const CommandOptions& options;
  std::ostream& msg;
  std::string out_dir;
  unsigned threads;
  TabularEnvironment env;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  Context(const ExperimentConfig& c, const CommandOptions& o)
      : cfg(c),
        options(o),
        msg(o.messages ? *o.messages : std::cerr),
        out_dir(resolve_out_dir(c, o)),
        threads(resolve_threads(c, o)),
        env(c.environment.build()) {
    for (const auto& w : cfg.warnings) msg << "warning: " << w << '\n';
  }

  std::string path(const std::string& name) const { return (fs::path(out_dir) / name).string(); }

  std::string header(const std::string& version, std::uint64_t seed, bool with_seed = true) const {
    std::string h = "# " + version + "\n# config_hash=" + cfg.hash + "\n";
    if (with_seed) h += "# seed=" + std::to_string(seed) + "\n";
    return h;
  }

  void write(const FileSet& files) const {
    for (const auto& [name, content] : files) write_file_atomic(path(name), content);
  }

  void write_run_info(const std::string& command, int exit_code, const std::vector<std::string>& outputs) const {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    nlohmann::json info = {{"command", command},
                           {"config_hash", cfg.hash},
                           {"seeds", cfg.seeds},
                           {"threads", threads},
                           {"wall_seconds", wall},
                           {"exit_code", exit_code},
                           {"warnings", cfg.warnings},
                           {"outputs", outputs},
                           {"config", nlohmann::json::parse(cfg.canonical)}};
    write_file_atomic(path("run_info.json"), info.dump(2) + "\n");
  }
};

std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

std::vector<std::size_t> default_milestones(Index S, std::size_t cap) {
  std::vector<std::size_t> out;
  for (std::size_t m = std::max<Index>(S, 1); m < cap; m *= 2) out.push_back(m);
  out.push_back(cap);
  return out;
}

std::string policy_text(const Policy& pi, const std::string& header) {
  std::ostringstream os;
  os << header << "state,action\n";
  for (Index s = 0; s < pi.size(); ++s) os << s << ',' << pi[s] << '\n';
  return os.str();
}

std::string errors_csv(const ErrorTrace& tr, const std::vector<std::string>& labels, const std::string& header) {
  std::ostringstream os;
  os << header << "t";
  for (const auto& p : tr.probes) {
    const std::string cell = "_s" + std::to_string(p.state) + "_a" + std::to_string(p.action);
    os << ",err_it" << cell;
    for (const auto& l : labels) os << ",err_" << l << cell;
  }
  os << '\n';
  for (std::size_t i = 0; i < tr.length(); ++i) {
    os << tr.t[i];
    for (std::size_t p = 0; p < tr.probes.size(); ++p) {
      os << ',' << format_double(tr.ensemble[p][i]);
      for (std::size_t n = 0; n < tr.learners.size(); ++n) os << ',' << format_double(tr.learners[n][p][i]);
    }
    os << '\n';
  }
  return os.str();
}

std::string metrics_text(const MetricsLog& log) {
  std::ostringstream os;
  log.write_csv(os);
  return os.str();
}

std::vector<std::string> names_of(const std::vector<FileSet>& sets) {
  std::vector<std::string> out;
  for (const auto& s : sets)
    for (const auto& [name, _] : s) out.push_back(name);
  return out;
}

RunOptions run_options(const ExperimentConfig& cfg, const Reference& ref) {
  RunOptions opt;
  opt.reference = ref;
  opt.probes = cfg.probes;
  opt.max_iterations = cfg.max_iterations;
  opt.fixed_iterations = cfg.iterations;
  opt.log_every = cfg.log_every;
  return opt;
}

std::map<std::string, std::string> model_metadata(const EstimatedModel& m, const ExperimentConfig& cfg,
                                                  std::uint64_t seed) {
  return {{"samples_used", std::to_string(m.samples_used)},
          {"v", std::to_string(cfg.sampling.min_transition_visits)},
          {"cap", std::to_string(cfg.sampling.max_total_samples)},
          {"complete", m.complete ? "true" : "false"},
          {"seed", std::to_string(seed)},
          {"config_hash", cfg.hash}};
}

std::string model_text(const EstimatedModel& m, const ExperimentConfig& cfg, std::uint64_t seed) {
  std::ostringstream os;
  write_model(os, m.p_hat, &m.c_hat, model_metadata(m, cfg, seed));
  return os.str();
}

}  // namespace

int cmd_estimate(const ExperimentConfig& cfg, const CommandOptions& options) {
  Context ctx(cfg, options);
  const auto& env = ctx.env;
  const auto milestones =
      cfg.milestones.empty() ? default_milestones(env.num_states(), cfg.sampling.max_total_samples) : cfg.milestones;

  struct SeedResult {
    FileSet files;
    std::vector<double> errors;  // per milestone reached
    bool complete = false;
    std::size_t samples = 0;
    double final_error = 0.0;
  };
  std::vector<SeedResult> results(cfg.seeds.size());

  parallel_for(cfg.seeds.size(), ctx.threads, [&](std::size_t i) {
    const auto seed = cfg.seeds[i];
    auto& res = results[i];
    RngStream rng(derive_seed(seed, 0xE5));
    EstimationOptions eo;
    eo.milestones = milestones;
    std::ostringstream csv;
    csv << ctx.header("nhop-eql estimation v1", seed) << "milestone,samples,error\n";
    eo.observer = [&](std::size_t samples, const TransitionTensor& p_hat) {
      const double err = estimation_error(env.ptt(), p_hat, cfg.estimation_norm);
      while (res.errors.size() < milestones.size() && milestones[res.errors.size()] <= samples) {
        csv << milestones[res.errors.size()] << ',' << samples << ',' << format_double(err) << '\n';
        res.errors.push_back(err);
      }
    };
    const auto model = estimate_model(env, cfg.sampling, rng, eo);
    res.complete = model.complete;
    res.samples = model.samples_used;
    res.final_error = estimation_error(env.ptt(), model.p_hat, cfg.estimation_norm);
    res.files["estimation_error_" + seed_tag(seed) + ".csv"] = csv.str();
    res.files["model_" + seed_tag(seed) + ".txt"] = model_text(model, cfg, seed);
  });

  std::vector<FileSet> sets;
  for (const auto& r : results) sets.push_back(r.files);

  FileSet summary;
  {
    std::ostringstream os;
    os << ctx.header("nhop-eql estimation summary v1", 0, false) << "seed,samples_used,complete,final_error\n";
    for (std::size_t i = 0; i < results.size(); ++i)
      os << cfg.seeds[i] << ',' << results[i].samples << ',' << (results[i].complete ? 1 : 0) << ','
         << format_double(results[i].final_error) << '\n';
    summary["estimation_summary.csv"] = os.str();

    std::ostringstream agg;
    agg << ctx.header("nhop-eql estimation v1", 0, false) << "milestone,median_error,runs\n";
    std::vector<double> xs;
    std::vector<double> med;
    for (std::size_t m = 0; m < milestones.size(); ++m) {
      std::vector<double> e;
      for (const auto& r : results)
        if (m < r.errors.size()) e.push_back(r.errors[m]);
      if (e.empty()) break;
      agg << milestones[m] << ',' << format_double(median(e)) << ',' << e.size() << '\n';
      xs.push_back(static_cast<double>(milestones[m]));
      med.push_back(median(e));
    }
    summary["estimation_error.csv"] = agg.str();
    if (options.plots && !xs.empty())
      summary["estimation_error.svg"] =
          line_plot_svg("Estimation error (median over seeds)", "samples", xs, {{"error", med}}, true);
  }
  sets.push_back(summary);

  bool complete = true;
  for (const auto& r : results) complete = complete && r.complete;
  const int code = complete ? kExitOk : kExitIncomplete;
  if (!complete) ctx.msg << "estimation hit the sample cap before the visit rule was met\n";
  for (const auto& s : sets) ctx.write(s);
  ctx.write_run_info("estimate", code, names_of(sets));
  return code;
}

namespace {

struct TrainOutcome {
  NeqlResult neql;
  FileSet files;
  std::optional<double> baseline_ape;
};

TrainOutcome train_seed(const Context& ctx, const Reference& ref, std::uint64_t seed, Baseline baseline,
                        bool write_outputs) {
  const auto& cfg = ctx.cfg;
  const auto& env = ctx.env;
  const DiscountFactor gamma(cfg.gamma);
  TrainOutcome out;
  out.neql = run_neql(env, cfg.sampling, cfg.schedules, gamma, seed, run_options(cfg, ref));
  auto& r = out.neql;
  r.log.metadata["config_hash"] = cfg.hash;
  if (!write_outputs) return out;

  const std::string tag = seed_tag(seed);
  out.files["metrics_" + tag + ".csv"] = metrics_text(r.log);
  out.files["errors_" + tag + ".csv"] =
      errors_csv(r.log.trace, r.log.labels, ctx.header("nhop-eql errors v1", seed));
  out.files["policy_" + tag + ".csv"] = policy_text(r.policy, ctx.header("nhop-eql policy v1", seed));
  if (!ctx.options.estimation_out.empty() && r.model)
    out.files[(fs::path(ctx.options.estimation_out) / ("model_" + tag + ".txt")).string()] =
        model_text(*r.model, cfg, seed);

  MetricsLog baseline_log;
  if (baseline == Baseline::kSimple) {
    auto opt = run_options(cfg, ref);
    opt.fixed_iterations = r.iterations;
    auto s = run_simple_q(env, cfg.schedules, gamma, cfg.sampling.min_transition_visits,
                          cfg.sampling.trajectory_length, seed, opt);
    s.log.metadata["config_hash"] = cfg.hash;
    out.baseline_ape = ape(ref.pi_star, s.policy, ref.q_star);
    out.files["baseline_simple_" + tag + ".csv"] = metrics_text(s.log);
    baseline_log = std::move(s.log);
  } else if (baseline == Baseline::kValueIteration) {
    ViEnsembleOptions vo;
    vo.reference = ref;
    const auto l = cfg.sampling.trajectory_length;
    vo.iterations = std::max<std::size_t>(1, (r.iterations + l - 1) / l);
    auto v = run_vi_ensemble(env, cfg.sampling, cfg.schedules, gamma, seed, vo);
    v.log.metadata["config_hash"] = cfg.hash;
    out.baseline_ape = ape(ref.pi_star, v.policy, ref.q_star);
    out.files["baseline_vi_" + tag + ".csv"] = metrics_text(v.log);
    baseline_log = std::move(v.log);
  }

  if (ctx.options.plots) {
    std::vector<double> x;
    std::vector<Series> series(1 + r.log.labels.size());
    series[0].label = "Q_it";
    for (std::size_t n = 0; n < r.log.labels.size(); ++n) series[n + 1].label = "Q_" + r.log.labels[n];
    for (const auto& row : r.log.rows) {
      x.push_back(static_cast<double>(row.t));
      series[0].y.push_back(row.ape_ensemble.value_or(0.0));
      for (std::size_t n = 0; n < row.ape_learners.size(); ++n) series[n + 1].y.push_back(row.ape_learners[n]);
    }
    if (!baseline_log.rows.empty() && baseline == Baseline::kSimple) {
      Series b{"simple Q", {}};
      for (const auto& row : baseline_log.rows) b.y.push_back(row.ape_ensemble.value_or(0.0));
      series.push_back(std::move(b));
    }
    out.files["ape_" + tag + ".svg"] = line_plot_svg("APE, seed " + std::to_string(seed), "iteration", x, series);
  }
  return out;
}

Reference reference_for(const Context& ctx) {
  return Reference::from(value_iteration(ctx.env.ptt(), ctx.env.costs(), DiscountFactor(ctx.cfg.gamma)));
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg, const CommandOptions& options) {
  Context ctx(cfg, options);
  const Reference ref = reference_for(ctx);
  std::vector<TrainOutcome> results(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), ctx.threads, [&](std::size_t i) {
    results[i] = train_seed(ctx, ref, cfg.seeds[i], options.baseline, true);
  });

  std::vector<FileSet> sets;
  bool complete = true;
  std::ostringstream summary;
  summary << ctx.header("nhop-eql train summary v1", 0, false) << "seed,iterations,complete,ape_it";
  for (const auto& l : results.front().neql.log.labels) summary << ",ape_" << l;
  if (options.baseline == Baseline::kSimple) summary << ",ape_simple";
  if (options.baseline == Baseline::kValueIteration) summary << ",ape_vi";
  summary << '\n';
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i].neql;
    complete = complete && r.complete;
    summary << cfg.seeds[i] << ',' << r.iterations << ',' << (r.complete ? 1 : 0) << ','
            << format_double(ape(ref.pi_star, r.policy, ref.q_star));
    for (const auto& q : r.learner_q)
      summary << ',' << format_double(ape(ref.pi_star, greedy_policy_from_q(q), ref.q_star));
    if (results[i].baseline_ape) summary << ',' << format_double(*results[i].baseline_ape);
    summary << '\n';
    sets.push_back(std::move(results[i].files));
  }
  sets.push_back({{"train_summary.csv", summary.str()}});

  const int code = complete ? kExitOk : kExitIncomplete;
  if (!complete) ctx.msg << "training hit the iteration cap before every state-action pair had v visits\n";
  for (const auto& s : sets) ctx.write(s);
  ctx.write_run_info("train", code, names_of(sets));
  return code;
}

int cmd_verify(const ExperimentConfig& cfg, const CommandOptions& options) {
  Context ctx(cfg, options);
  const Reference ref = reference_for(ctx);
  const auto& vc = cfg.verify;
  const std::set<std::string> checks(vc.checks.begin(), vc.checks.end());
  const DiscountFactor gamma(cfg.gamma);

  std::vector<Report> per_seed(cfg.seeds.size());
  std::vector<ErrorTrace> traces(cfg.seeds.size());
  std::vector<double> final_u(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), ctx.threads, [&](std::size_t i) {
    const auto seed = cfg.seeds[i];
    const std::string inst = seed_tag(seed);
    auto outcome = train_seed(ctx, ref, seed, Baseline::kNone, false);
    auto& r = outcome.neql;
    auto& report = per_seed[i];
    final_u[i] = cfg.schedules.update_ratio(r.iterations == 0 ? 0 : r.iterations - 1);

    if (checks.count("prop3")) {
      std::vector<unsigned> orders = {1};
      orders.insert(orders.end(), vc.prop3_orders.begin(), vc.prop3_orders.end());
      const auto envs = build_multiscale_envs(r.model->p_hat, r.model->c_hat, orders);
      report.append(check_prop3(envs, r.policy, gamma, inst));
    }
    if (checks.count("prop4")) {
      std::set<unsigned> orders = {1};
      for (const auto& chain : vc.prop4_chains) orders.insert(chain.begin(), chain.end());
      const auto envs =
          build_multiscale_envs(r.model->p_hat, r.model->c_hat, std::vector<unsigned>(orders.begin(), orders.end()));
      report.append(check_prop4_ordering(envs, r.policy, DiscountFactor(vc.prop4_gamma), vc.prop4_chains,
                                         vc.prop4_rel_tol, inst));
    }
    if (checks.count("adc")) report.append(adc_error_independence(r.log.trace, r.orders, vc.adc_lags, inst));
    if (checks.count("weights")) {
      const auto K = r.orders.size();
      const auto& ws = r.weight_stats;
      report.add({"weights", inst, "sum_deviation", ws.max_sum_deviation, 1e-9, ws.max_sum_deviation <= 1e-9, true});
      report.add({"weights", inst, "min_weight", ws.min_weight, weight_lower_bound(K),
                  ws.min_weight >= weight_lower_bound(K), true});
      report.add({"weights", inst, "max_weight", ws.max_weight, weight_upper_bound(K),
                  ws.max_weight <= weight_upper_bound(K), true});
      const auto wc = weight_convergence(r.log, vc.weight_window_frac, vc.weight_tol);
      report.add({"weights", inst, "final_window_change", wc.final_window_change, vc.weight_tol,
                  wc.final_window_change < vc.weight_tol, false});
      report.add({"weights", inst, "converged_at", static_cast<double>(wc.converged_at), 0.0, wc.converged, false});
      std::string order = "final_order";
      for (std::size_t k = 0; k < wc.ordering.size(); ++k)
        order += (k ? ">" : "=") + r.log.labels[wc.ordering[k]];
      report.add({"weights", inst, order, 0.0, 0.0, true, false});
    }
    traces[i] = std::move(r.log.trace);
  });

  Report report;
  for (const auto& r : per_seed) report.append(r);
  if (checks.count("prop1")) {
    std::vector<std::string> labels;
    for (auto s : cfg.seeds) labels.push_back(seed_tag(s));
    report.append(check_prop1_behavior(traces, final_u, labels, vc.late_fraction, "all"));
  }
  if (checks.count("variance_vs_k")) {
    VarianceVsKConfig vk;
    vk.K_list = vc.variance_K;
    vk.seeds = cfg.seeds;
    vk.iterations = vc.variance_iterations;
    vk.sampling = cfg.sampling;
    vk.schedules = cfg.schedules;
    vk.gamma = cfg.gamma;
    vk.probes = cfg.probes;
    vk.late_fraction = vc.late_fraction;
    report.append(check_variance_vs_k(ctx.env, ref, vk, "all").report);
  }

  std::ostringstream body;
  report.write_csv(body);
  std::string text = body.str();
  text.insert(text.find('\n') + 1, "# config_hash=" + cfg.hash + "\n");
  const int code = report.passed() ? kExitOk : kExitVerifyFailed;
  for (const auto& row : report.rows)
    if (row.asserted && !row.pass) ctx.msg << "FAIL " << row.check << ' ' << row.instance << ' ' << row.statistic << '\n';
  ctx.write({{"report.csv", text}});
  ctx.write_run_info("verify", code, {"report.csv"});
  return code;
}

int run_command(const std::string& command, const std::string& config_path, const CommandOptions& options) {
  std::ostream& msg = options.messages ? *options.messages : std::cerr;
  try {
    const auto cfg = parse_config(config_path);
    if (command == "estimate") return cmd_estimate(cfg, options);
    if (command == "train") return cmd_train(cfg, options);
    if (command == "verify") return cmd_verify(cfg, options);
    msg << "unknown command '" << command << "'\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    msg << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    msg << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace nhop::cli
