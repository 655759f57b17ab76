#include "nhop_cli/config.hpp"

#include "nhop/log.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace nhop::cli {

using nlohmann::json;

Index EnvironmentConfig::num_states() const {
  switch (family) {
    case EnvFamily::kErdosRenyi: return er.num_states;
    case EnvFamily::kCliffWalk: return cliff.rows * cliff.cols;
    case EnvFamily::kSiso: return siso.buffer_size + 1;
  }
  return 0;
}

TabularEnvironment EnvironmentConfig::build() const {
  switch (family) {
    case EnvFamily::kErdosRenyi: return build_er_env(er);
    case EnvFamily::kCliffWalk: return build_cliffwalk_env(cliff);
    case EnvFamily::kSiso: return build_siso_env(siso);
  }
  throw std::logic_error("unknown environment family");
}

SizeBand band_for(Index num_states) {
  if (num_states < 1000) return SizeBand::kSmall;
  if (num_states <= 10000) return SizeBand::kModest;
  return SizeBand::kLarge;
}

const char* to_string(SizeBand band) {
  switch (band) {
    case SizeBand::kSmall: return "small";
    case SizeBand::kModest: return "modest";
    case SizeBand::kLarge: return "large";
  }
  return "unknown";
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

struct Band {
  Index l_lo, l_hi, l_default;
  std::vector<unsigned> K;
  unsigned K_default;
  double c1_lo, c1_hi;
  double c2_lo, c2_hi;
  double c3_lo, c3_hi;
  double c4_lo, c4_hi;
};

const Band& band_table(SizeBand b) {
  static const Band small{1, 5, 5, {2, 3}, 3, 100, 500, 0.9, 0.95, 0.01, 0.1, 100, 500};
  static const Band modest{5, 10, 10, {3, 4, 5}, 4, 100, 1000, 0.95, 0.99, 0.01, 0.05, 100, 1000};
  static const Band large{10, 20, 20, {5, 6, 7, 8}, 6, 1000, 10000, 0.99, 0.999, 0.005, 0.01, 5000, 10000};
  switch (b) {
    case SizeBand::kSmall: return small;
    case SizeBand::kModest: return modest;
    case SizeBand::kLarge: return large;
  }
  return modest;
}

// First learner decays fastest, the last slowest, the rest in between.
std::vector<double> band_epsilon_bases(const Band& b, std::size_t K) {
  std::vector<double> out(K, 0.5 * (b.c2_lo + b.c2_hi));
  if (K > 0) out.front() = b.c2_lo;
  if (K > 1) out.back() = K == 2 ? 0.5 * (b.c2_lo + b.c2_hi) : b.c2_hi;
  return out;
}

// Typed field access that reports the dotted key on failure.
class Section {
 public:
  Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(prefix_.empty() ? "config" : prefix_, "expected an object");
  }

  std::string key(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }
  bool has(const std::string& name) const { return j_.contains(name); }
  const json& raw(const std::string& name) const { return j_.at(name); }

  template <typename T>
  T get(const std::string& name, T fallback) const {
    seen_.insert(name);
    if (!j_.contains(name)) return fallback;
    try {
      return j_.at(name).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(key(name), "has the wrong type");
    }
  }

  Section sub(const std::string& name) const {
    seen_.insert(name);
    static const json empty = json::object();
    return Section(j_.contains(name) ? j_.at(name) : empty, key(name));
  }

  void warn_unknown(std::vector<std::string>& warnings) const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) warnings.push_back("unknown key '" + key(it.key()) + "' ignored");
  }

 private:
  const json& j_;
  std::string prefix_;
  mutable std::set<std::string> seen_;
};

template <typename T>
void require(bool ok, const std::string& field, const T& message) {
  if (!ok) throw ConfigError(field, message);
}

void warn_range(std::vector<std::string>& w, const std::string& field, double value, double lo, double hi,
                SizeBand band) {
  if (value < lo || value > hi) {
    std::ostringstream os;
    os << field << " = " << value << " is outside the " << to_string(band) << "-network range [" << lo << ", " << hi
       << "]";
    w.push_back(os.str());
  }
}

EnvironmentConfig parse_environment(const Section& s) {
  EnvironmentConfig env;
  const auto family = s.get<std::string>("family", "er");
  if (family == "er") {
    env.family = EnvFamily::kErdosRenyi;
    env.er.num_states = s.get<Index>("num_states", env.er.num_states);
    env.er.num_actions = s.get<Index>("num_actions", env.er.num_actions);
    env.er.edge_probability = s.get<double>("edge_probability", env.er.edge_probability);
    env.er.seed = s.get<std::uint64_t>("seed", env.er.seed);
    require(env.er.num_states >= 2, s.key("num_states"), "must be at least 2");
    require(env.er.num_actions >= 1, s.key("num_actions"), "must be at least 1");
    require(env.er.edge_probability > 0.0 && env.er.edge_probability <= 1.0, s.key("edge_probability"),
            "must lie in (0, 1]");
  } else if (family == "cliffwalk") {
    env.family = EnvFamily::kCliffWalk;
    const auto rows = s.get<Index>("rows", 4);
    const auto cols = s.get<Index>("cols", 3 * rows);
    require(rows >= 2, s.key("rows"), "must be at least 2");
    require(cols >= 2, s.key("cols"), "must be at least 2");
    env.cliff = CliffWalkSpec::standard(rows, cols);
  } else if (family == "siso") {
    env.family = EnvFamily::kSiso;
    env.siso.buffer_size = s.get<Index>("buffer_size", env.siso.buffer_size);
    env.siso.arrival_prob = s.get<double>("arrival_prob", env.siso.arrival_prob);
    env.siso.success_prob = s.get<double>("success_prob", env.siso.success_prob);
    env.siso.transmit_cost = s.get<double>("transmit_cost", env.siso.transmit_cost);
    env.siso.drop_cost = s.get<double>("drop_cost", env.siso.drop_cost);
    require(env.siso.arrival_prob >= 0.0 && env.siso.arrival_prob <= 1.0, s.key("arrival_prob"), "must lie in [0, 1]");
    require(env.siso.success_prob >= 0.0 && env.siso.success_prob <= 1.0, s.key("success_prob"), "must lie in [0, 1]");
  } else {
    throw ConfigError(s.key("family"), "unknown environment family '" + family + "' (er, cliffwalk, siso)");
  }
  return env;
}

json environment_json(const EnvironmentConfig& env) {
  switch (env.family) {
    case EnvFamily::kErdosRenyi:
      return {{"family", "er"},
              {"num_states", env.er.num_states},
              {"num_actions", env.er.num_actions},
              {"edge_probability", env.er.edge_probability},
              {"seed", env.er.seed}};
    case EnvFamily::kCliffWalk:
      return {{"family", "cliffwalk"}, {"rows", env.cliff.rows}, {"cols", env.cliff.cols}};
    case EnvFamily::kSiso:
      return {{"family", "siso"},
              {"buffer_size", env.siso.buffer_size},
              {"arrival_prob", env.siso.arrival_prob},
              {"success_prob", env.siso.success_prob},
              {"transmit_cost", env.siso.transmit_cost},
              {"drop_cost", env.siso.drop_cost}};
  }
  return {};
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed config: ") + e.what());
  }
  const Section top(root, "");
  ExperimentConfig cfg;

  const auto env_section = top.sub("environment");
  cfg.environment = parse_environment(env_section);
  const Index S = cfg.environment.num_states();
  const Index A = cfg.environment.family == EnvFamily::kErdosRenyi ? cfg.environment.er.num_actions
                  : cfg.environment.family == EnvFamily::kCliffWalk ? 4
                                                                    : 2;
  cfg.band = band_for(S);
  const Band& band = band_table(cfg.band);
  auto& w = cfg.warnings;

  cfg.gamma = top.get<double>("gamma", 0.95);
  require(cfg.gamma > 0.0 && cfg.gamma < 1.0, "gamma", "must lie strictly between 0 and 1");

  const auto sampling = top.sub("sampling");
  auto& sc = cfg.sampling;
  sc.trajectory_length = sampling.get<Index>("l", band.l_default);
  sc.min_transition_visits = sampling.get<Index>("v", 40);
  sc.num_environments = sampling.get<Index>("K", band.K_default);
  sc.orders = sampling.get<std::vector<unsigned>>("orders", {});
  sc.max_total_samples = sampling.get<std::size_t>("max_total_samples", sc.max_total_samples);
  const auto counting = sampling.get<std::string>("counting", "per_transition_action");
  if (counting == "per_transition_action")
    sc.counting = VisitCounting::kPerTransitionAction;
  else if (counting == "per_transition")
    sc.counting = VisitCounting::kPerTransition;
  else
    throw ConfigError("sampling.counting", "must be per_transition_action or per_transition");
  require(sc.trajectory_length >= 1, "sampling.l", "must be at least 1");
  require(sc.min_transition_visits >= 1, "sampling.v", "must be at least 1");
  require(sc.num_environments >= 2, "sampling.K", "must be at least 2");
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("sampling.orders", e.what());
  }
  warn_range(w, "sampling.l", static_cast<double>(sc.trajectory_length), static_cast<double>(band.l_lo),
             static_cast<double>(band.l_hi), cfg.band);
  if (std::find(band.K.begin(), band.K.end(), sc.num_environments) == band.K.end())
    warn_range(w, "sampling.K", static_cast<double>(sc.num_environments), band.K.front(), band.K.back(), cfg.band);

  const auto sched = top.sub("schedules");
  auto& sh = cfg.schedules;
  sh.c1 = sched.get<double>("c1", band.c1_lo);
  sh.c2 = sched.get<std::vector<double>>("c2", band_epsilon_bases(band, sc.num_environments));
  sh.c3 = sched.get<double>("c3", band.c3_lo);
  sh.c4 = sched.get<double>("c4", cfg.band == SizeBand::kSmall ? band.c4_lo : band.c4_hi);
  sh.u_constant = sched.get<double>("u", sh.u_constant);
  try {
    sh.u_form = parse_update_ratio_form(sched.get<std::string>("u_form", "exponential"));
    sh.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("schedules", e.what());
  }
  warn_range(w, "schedules.c1", sh.c1, band.c1_lo, band.c1_hi, cfg.band);
  for (double b : sh.c2) warn_range(w, "schedules.c2", b, band.c2_lo, band.c2_hi, cfg.band);
  warn_range(w, "schedules.c3", sh.c3, band.c3_lo, band.c3_hi, cfg.band);
  if (sh.u_form == UpdateRatioForm::kExponential || sh.u_form == UpdateRatioForm::kHyperbolic)
    warn_range(w, "schedules.c4", sh.c4, band.c4_lo, band.c4_hi, cfg.band);

  cfg.seeds = top.get<std::vector<std::uint64_t>>("seeds", cfg.seeds);
  require(!cfg.seeds.empty(), "seeds", "must list at least one seed");

  if (top.has("probes")) {
    const auto& probes = top.raw("probes");
    require(probes.is_array(), "probes", "must be a list of [state, action] pairs");
    for (const auto& p : probes) {
      require(p.is_array() && p.size() == 2 && p[0].is_number_unsigned() && p[1].is_number_unsigned(), "probes",
              "must be a list of [state, action] pairs");
      ProbeCell cell{p[0].get<Index>(), p[1].get<Index>()};
      require(cell.state < S && cell.action < A, "probes", "cell outside the state-action space");
      cfg.probes.push_back(cell);
    }
    top.get<json>("probes", json());
  } else {
    cfg.probes = {{0, 0}};
  }

  cfg.output_dir = top.get<std::string>("output_dir", "");
  cfg.max_iterations = top.get<std::size_t>("max_iterations", cfg.max_iterations);
  cfg.iterations = top.get<std::size_t>("iterations", 0);
  cfg.log_every = top.get<std::size_t>("log_every", 1);
  require(cfg.log_every >= 1, "log_every", "must be at least 1");
  cfg.threads = top.get<unsigned>("threads", 1);
  require(cfg.threads >= 1, "threads", "must be at least 1");

  const auto est = top.sub("estimation");
  cfg.milestones = est.get<std::vector<std::size_t>>("milestones", {});
  require(std::is_sorted(cfg.milestones.begin(), cfg.milestones.end()), "estimation.milestones", "must be ascending");
  const auto norm = est.get<std::string>("norm", "frobenius");
  if (norm == "frobenius")
    cfg.estimation_norm = MatrixNorm::kFrobenius;
  else if (norm == "spectral")
    cfg.estimation_norm = MatrixNorm::kSpectral;
  else
    throw ConfigError("estimation.norm", "must be frobenius or spectral");

  const auto ver = top.sub("verify");
  auto& vc = cfg.verify;
  vc.checks = ver.get<std::vector<std::string>>("checks", vc.checks);
  static const std::set<std::string> known = {"prop1", "prop3", "prop4", "variance_vs_k", "adc", "weights"};
  for (const auto& c : vc.checks) require(known.count(c) > 0, "verify.checks", "unknown check '" + c + "'");
  vc.prop3_orders = ver.get<std::vector<unsigned>>("prop3_orders", vc.prop3_orders);
  for (unsigned n : vc.prop3_orders) require(n > 1, "verify.prop3_orders", "orders must exceed 1");
  vc.prop4_gamma = ver.get<double>("prop4_gamma", vc.prop4_gamma);
  require(vc.prop4_gamma > 0.0 && vc.prop4_gamma < 1.0, "verify.prop4_gamma", "must lie strictly between 0 and 1");
  vc.prop4_chains = ver.get<std::vector<std::vector<unsigned>>>("prop4_chains", vc.prop4_chains);
  for (const auto& chain : vc.prop4_chains)
    for (unsigned n : chain) require(n >= 1, "verify.prop4_chains", "orders must be positive");
  vc.prop4_rel_tol = ver.get<double>("prop4_rel_tol", vc.prop4_rel_tol);
  vc.variance_K = ver.get<std::vector<unsigned>>("variance_K", vc.variance_K);
  for (unsigned K : vc.variance_K) require(K >= 2, "verify.variance_K", "entries must be at least 2");
  require(std::is_sorted(vc.variance_K.begin(), vc.variance_K.end()), "verify.variance_K", "must be increasing");
  vc.variance_iterations = ver.get<std::size_t>("variance_iterations", vc.variance_iterations);
  vc.adc_lags = ver.get<std::vector<std::size_t>>("adc_lags", vc.adc_lags);
  vc.late_fraction = ver.get<double>("late_fraction", vc.late_fraction);
  require(vc.late_fraction > 0.0 && vc.late_fraction <= 0.5, "verify.late_fraction", "must lie in (0, 0.5]");
  vc.weight_window_frac = ver.get<double>("weight_window_frac", vc.weight_window_frac);
  vc.weight_tol = ver.get<double>("weight_tol", vc.weight_tol);

  for (const auto* s : {&top, &env_section, &sampling, &sched, &est, &ver}) s->warn_unknown(w);

  json canon = {
      {"environment", environment_json(cfg.environment)},
      {"gamma", cfg.gamma},
      {"sampling",
       {{"l", sc.trajectory_length},
        {"v", sc.min_transition_visits},
        {"K", sc.num_environments},
        {"orders", sc.resolved_orders()},
        {"max_total_samples", sc.max_total_samples},
        {"counting", counting}}},
      {"schedules",
       {{"c1", sh.c1}, {"c2", sh.c2}, {"c3", sh.c3}, {"c4", sh.c4}, {"u", sh.u_constant},
        {"u_form", std::string(to_string(sh.u_form))}}},
      {"seeds", cfg.seeds},
      {"max_iterations", cfg.max_iterations},
      {"iterations", cfg.iterations},
      {"log_every", cfg.log_every},
      {"estimation", {{"milestones", cfg.milestones}, {"norm", norm}}},
      {"verify",
       {{"checks", vc.checks},
        {"prop3_orders", vc.prop3_orders},
        {"prop4_gamma", vc.prop4_gamma},
        {"prop4_chains", vc.prop4_chains},
        {"prop4_rel_tol", vc.prop4_rel_tol},
        {"variance_K", vc.variance_K},
        {"variance_iterations", vc.variance_iterations},
        {"adc_lags", vc.adc_lags},
        {"late_fraction", vc.late_fraction},
        {"weight_window_frac", vc.weight_window_frac},
        {"weight_tol", vc.weight_tol}}},
  };
  json probes = json::array();
  for (const auto& p : cfg.probes) probes.push_back({p.state, p.action});
  canon["probes"] = probes;
  cfg.canonical = canon.dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(cfg.canonical)));
  cfg.hash = buf;
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace nhop::cli
