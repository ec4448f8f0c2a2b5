#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "lbdp/lbdp.hpp"

namespace lbdp::cli {
namespace {

using json = nlohmann::ordered_json;

constexpr std::string_view result_schema = "lbdp.result/1";
constexpr std::string_view simulate_meta_schema = "lbdp.simulate-meta/1";
constexpr std::string_view pmf_schema = "lbdp.pmf/1";
constexpr std::string_view benchmark_schema = "lbdp.benchmark/1";

int exit_code(const std::exception& e) {
  if (dynamic_cast<const resource_cap_error*>(&e)) return exit_resource_cap;
  if (dynamic_cast<const convergence_error*>(&e)) return exit_nonconvergence;
  if (dynamic_cast<const lbdp::error*>(&e)) return exit_usage;
  return 1;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const resource_cap_error*>(&e)) return "resource_cap";
  if (dynamic_cast<const convergence_error*>(&e)) return "convergence";
  if (dynamic_cast<const precondition_error*>(&e)) return "precondition";
  if (dynamic_cast<const degenerate_data_error*>(&e)) return "degenerate_data";
  if (dynamic_cast<const domain_error*>(&e)) return "domain";
  if (dynamic_cast<const parse_error*>(&e)) return "parse";
  return "internal";
}

// Seed given on the command line, or a fresh one that gets recorded.
struct Seed {
  std::uint64_t value = 0;
  CLI::Option* option = nullptr;

  std::uint64_t resolve() {
    if (option->count() == 0) {
      std::random_device rd;
      value = (std::uint64_t{rd()} << 32) ^ rd();
    }
    return value;
  }
  [[nodiscard]] const char* source() const { return option->count() ? "given" : "auto"; }
};

void add_seed(CLI::App* app, Seed& seed) {
  seed.option = app->add_option("--seed", seed.value, "RNG seed (generated and recorded when omitted)");
}

// Writes the whole document at once so a failure never leaves half a file.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw parse_error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw parse_error("failed writing '" + path + "'");
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json header(std::string_view schema) {
  json j;
  j["schema"] = schema;
  j["artifact_version"] = artifact_version;
  return j;
}

void add_fit_options(CLI::App* app, FitOptions& fo, std::string& param, std::string& kappa, bool& no_se) {
  app->add_option("--tolerance", fo.tolerance, "Simplex size tolerance")->check(CLI::PositiveNumber);
  app->add_option("--restarts", fo.restarts, "Seeded optimizer restarts")->check(CLI::NonNegativeNumber);
  app->add_option("--max-iterations", fo.max_iterations)->check(CLI::PositiveNumber);
  app->add_option("--mle-count-cap", fo.mle_count_cap, "Largest count the exact likelihood accepts")
      ->check(CLI::PositiveNumber);
  app->add_option("--parametrization", param)->check(CLI::IsMember({"log-rates", "omega-log-xi"}));
  app->add_option("--kappa", kappa, "qg sandwich variance model")->check(CLI::IsMember({"gaussian", "cumulant"}));
  app->add_flag("--no-se", no_se, "Skip standard errors");
}

void finish_fit_options(FitOptions& fo, const std::string& param, const std::string& kappa, bool no_se) {
  fo.parametrization = param == "omega-log-xi" ? Parametrization::omega_log_xi : Parametrization::log_rates;
  fo.kappa = kappa == "cumulant" ? KappaMode::cumulant : KappaMode::gaussian;
  fo.standard_errors = !no_se;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  double lambda = 0, mu = 0;
  std::int64_t z0 = 1;
  double dt = 0;
  std::size_t n_obs = 0;
  std::vector<double> times;
  Seed seed;
  bool condition = false;
  std::size_t replicates = 1;
  std::string output = "-";
  std::string metadata;
  std::int64_t max_events = 1'000'000'000;
  std::int64_t max_pop = 10'000'000;
  std::int64_t max_attempts = 1'000'000;
  CLI::Option* dt_opt = nullptr;
  CLI::Option* times_opt = nullptr;
};

void setup_simulate(CLI::App& app, SimulateArgs& a) {
  auto* s = app.add_subcommand("simulate", "Simulate a panel of trajectories");
  s->add_option("--lambda", a.lambda, "Birth rate")->required()->check(CLI::NonNegativeNumber);
  s->add_option("--mu", a.mu, "Death rate")->required()->check(CLI::NonNegativeNumber);
  s->add_option("--z0", a.z0, "Initial population")->required()->check(CLI::PositiveNumber);
  a.dt_opt = s->add_option("--dt", a.dt, "Observation spacing")->check(CLI::PositiveNumber);
  auto* n = s->add_option("--n-obs", a.n_obs, "Number of transitions after the start")->check(CLI::PositiveNumber);
  a.times_opt = s->add_option("--times", a.times, "Observation times, first is the start")->delimiter(',');
  a.dt_opt->needs(n);
  n->needs(a.dt_opt);
  a.times_opt->excludes(a.dt_opt)->excludes(n);
  add_seed(s, a.seed);
  s->add_flag("--condition-nonextinct", a.condition, "Reject paths extinct at the last time");
  s->add_option("--replicates", a.replicates, "Trajectories in the panel")->check(CLI::PositiveNumber);
  s->add_option("-o,--output", a.output, "Panel CSV ('-' for stdout)");
  s->add_option("--metadata", a.metadata, "Metadata JSON (default <output>.meta.json)");
  s->add_option("--max-events", a.max_events)->check(CLI::PositiveNumber);
  s->add_option("--max-pop", a.max_pop)->check(CLI::PositiveNumber);
  s->add_option("--max-attempts", a.max_attempts)->check(CLI::PositiveNumber);
}

int run_simulate(SimulateArgs& a, std::ostream& out) {
  if (!a.dt_opt->count() && !a.times_opt->count()) throw parse_error("simulate: give --dt with --n-obs, or --times");
  SimConfig cfg{Rates(a.lambda, a.mu), a.z0, a.times_opt->count() ? a.times : regular_times(a.dt, a.n_obs),
                a.condition, a.seed.resolve()};
  cfg.max_events = a.max_events;
  cfg.max_pop = a.max_pop;
  cfg.max_attempts = a.max_attempts;

  std::vector<Trajectory> trajectories;
  json rejections = json::array(), events = json::array();
  std::int64_t total_rejections = 0;
  for (std::size_t i = 0; i < a.replicates; ++i) {
    SimConfig c = cfg;
    c.seed = derive_seed(cfg.seed, i);
    auto s = simulate_with_stats(c);
    total_rejections += s.rejections;
    rejections.push_back(s.rejections);
    events.push_back(s.events);
    trajectories.push_back(std::move(s.trajectory));
  }

  std::ostringstream csv;
  csv << "# seed: " << cfg.seed << '\n';
  write_panel_csv(csv, Panel(std::move(trajectories)));

  json meta = header(simulate_meta_schema);
  meta["seed"] = cfg.seed;
  meta["seed_source"] = a.seed.source();
  meta["config"] = {{"lambda", a.lambda},
                    {"mu", a.mu},
                    {"z0", a.z0},
                    {"obs_times", cfg.obs_times},
                    {"condition_nonextinct", a.condition},
                    {"replicates", a.replicates},
                    {"max_events", cfg.max_events},
                    {"max_pop", cfg.max_pop},
                    {"max_attempts", cfg.max_attempts}};
  meta["rejections"] = {{"total", total_rejections}, {"per_trajectory", rejections}};
  meta["events"] = events;

  emit(a.output, csv.str(), out);
  std::string meta_path = a.metadata;
  if (meta_path.empty() && a.output != "-") meta_path = a.output + ".meta.json";
  if (!meta_path.empty()) emit(meta_path, meta.dump(2) + "\n", out);
  return exit_ok;
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  std::string input;
  std::string method;
  std::string output = "-";
  Seed seed;
  FitOptions fit;
  std::string param = "log-rates", kappa = "gaussian";
  bool no_se = false;
};

void setup_estimate(CLI::App& app, EstimateArgs& a) {
  auto* s = app.add_subcommand("estimate", "Estimate (lambda, mu) from a panel CSV");
  s->add_option("-i,--input", a.input, "Panel CSV ('-' for stdin)")->required();
  s->add_option("-m,--method", a.method, "gw, qg, spmle, spmle-adjusted, mle, mv-spmle or all")->required();
  s->add_option("-o,--output", a.output, "Result JSON ('-' for stdout)");
  add_seed(s, a.seed);
  add_fit_options(s, a.fit, a.param, a.kappa, a.no_se);
}

json result_json(const EstimateResult& r, std::uint64_t seed, const char* seed_source) {
  json j = header(result_schema);
  j["method"] = method_name(r.method);
  j["lambda"] = r.rates.lambda();
  j["mu"] = r.rates.mu();
  j["omega"] = r.omega_hat;
  j["se_lambda"] = optional_number(r.se_lambda());
  j["se_mu"] = optional_number(r.se_mu());
  j["se_omega"] = optional_number(r.se_omega);
  if (r.cov) {
    const auto& c = *r.cov;
    j["cov"] = json::array({json::array({c(0, 0), c(0, 1)}), json::array({c(1, 0), c(1, 1)})});
  } else {
    j["cov"] = nullptr;
  }
  j["loglik"] = optional_number(r.loglik);
  j["converged"] = r.converged;
  j["n_obj_evals"] = r.n_obj_evals;
  j["diagnostics"] = r.diagnostics;
  j["seed"] = seed;
  j["seed_source"] = seed_source;
  return j;
}

json failure_json(Method m, const std::exception& e, std::uint64_t seed, const char* seed_source) {
  json j = header(result_schema);
  j["method"] = method_name(m);
  j["converged"] = false;
  j["error"] = e.what();
  j["error_kind"] = error_kind(e);
  j["seed"] = seed;
  j["seed_source"] = seed_source;
  return j;
}

Panel load_panel(const std::string& path) {
  if (path == "-") return read_panel_csv(std::cin);
  std::ifstream f(path);
  if (!f) throw parse_error("cannot open '" + path + "'");
  return read_panel_csv(f);
}

int run_estimate(EstimateArgs& a, std::ostream& out, std::ostream& err) {
  const bool all = a.method == "all";
  const Method single = all ? Method::gw : parse_method(a.method);
  finish_fit_options(a.fit, a.param, a.kappa, a.no_se);
  const Panel panel = load_panel(a.input);
  a.fit.seed = a.seed.resolve();
  const char* src = a.seed.source();

  if (!all) {
    const auto r = fit(panel, single, a.fit);
    emit(a.output, result_json(r, a.fit.seed, src).dump(2) + "\n", out);
    if (!r.converged) {
      err << "warning: " << method_name(single) << " did not converge\n";
      return exit_nonconvergence;
    }
    return exit_ok;
  }

  json arr = json::array();
  int code = exit_ok;
  for (auto m : all_methods) {
    try {
      const auto r = fit(panel, m, a.fit);
      arr.push_back(result_json(r, a.fit.seed, src));
      if (!r.converged) code = exit_nonconvergence;
    } catch (const lbdp::error& e) {
      arr.push_back(failure_json(m, e, a.fit.seed, src));
      err << "warning: " << method_name(m) << ": " << e.what() << '\n';
      if (exit_code(e) == exit_nonconvergence) code = exit_nonconvergence;
    }
  }
  emit(a.output, arr.dump(2) + "\n", out);
  return code;
}

// ---------------------------------------------------------------- pmf

struct PmfArgs {
  double lambda = 0, mu = 0, t = 0;
  std::int64_t a = 1;
  std::int64_t k_min = 0;
  std::int64_t k_max = -1;
  double exact_cap = 1e8;
  std::string output = "-";
};

void setup_pmf(CLI::App& app, PmfArgs& a) {
  auto* s = app.add_subcommand("pmf", "Tabulate exact and saddlepoint transition probabilities");
  s->add_option("--lambda", a.lambda)->required()->check(CLI::NonNegativeNumber);
  s->add_option("--mu", a.mu)->required()->check(CLI::NonNegativeNumber);
  s->add_option("-t,--t", a.t, "Elapsed time")->required()->check(CLI::PositiveNumber);
  s->add_option("-a,--a", a.a, "Starting population")->required()->check(CLI::PositiveNumber);
  s->add_option("--k-min", a.k_min)->check(CLI::NonNegativeNumber);
  s->add_option("--k-max", a.k_max, "Last k (default: tail truncation point)")->check(CLI::NonNegativeNumber);
  s->add_option("--exact-cap", a.exact_cap, "Largest number of exact-sum terms before the exact column is dropped")
      ->check(CLI::NonNegativeNumber);
  s->add_option("-o,--output", a.output, "CSV ('-' for stdout)");
}

int run_pmf(const PmfArgs& a, std::ostream& out, std::ostream& err) {
  const Rates r(a.lambda, a.mu);
  const std::int64_t k_max = a.k_max >= 0 ? a.k_max : truncation_point(a.t, a.a, r);
  if (k_max < a.k_min) throw domain_error("pmf: --k-max is below --k-min");
  double cost = 0.0;
  for (std::int64_t k = a.k_min; k <= k_max; ++k) cost += static_cast<double>(std::min(a.a, k) + 1);
  const bool with_exact = cost <= a.exact_cap;
  const double log_norm = spa_log_normalizer(a.t, a.a, r);
  const double p0 = transition_prob(0, a.t, a.a, r);

  std::ostringstream csv;
  csv << "# schema: " << pmf_schema << '\n';
  csv << "# lambda=" << format_number(a.lambda) << " mu=" << format_number(a.mu) << " t=" << format_number(a.t)
      << " a=" << a.a << '\n';
  if (!with_exact) {
    csv << "# exact omitted: " << format_number(cost) << " terms exceeds --exact-cap " << format_number(a.exact_cap)
        << '\n';
  }
  csv << "k,exact,spa,spa_normalized,spa_conditional,ratio_spa,ratio_spa_normalized,ratio_spa_conditional\n";

  auto cell = [](std::optional<double> v) { return v ? format_number(*v) : std::string("NA"); };
  int failures = 0;
  auto guarded = [&](auto&& f) -> std::optional<double> {
    try {
      return f();
    } catch (const convergence_error&) {
      ++failures;
      return std::nullopt;
    }
  };
  for (std::int64_t k = a.k_min; k <= k_max; ++k) {
    std::optional<double> exact;
    if (with_exact) exact = transition_prob(k, a.t, a.a, r);
    const auto spa = guarded([&] { return spa_pmf(k, a.t, a.a, r); });
    const auto norm = guarded([&] { return spa_pmf_normalized(k, a.t, a.a, r, log_norm); });
    const auto cond = k == 0 ? std::optional(p0) : guarded([&] { return spa_pmf_conditional(k, a.t, a.a, r); });
    auto ratio = [&](const std::optional<double>& v) -> std::optional<double> {
      if (!v || !exact || *exact == 0.0) return std::nullopt;
      return *v / *exact;
    };
    csv << k << ',' << cell(exact) << ',' << cell(spa) << ',' << cell(norm) << ',' << cell(cond) << ','
        << cell(ratio(spa)) << ',' << cell(ratio(norm)) << ',' << cell(ratio(cond)) << '\n';
  }
  if (failures) err << "warning: " << failures << " saddlepoint evaluations failed and are reported as NA\n";
  emit(a.output, csv.str(), out);
  return exit_ok;
}

// ---------------------------------------------------------------- benchmark

struct BenchmarkArgs {
  double lambda = 0, mu = 0;
  std::vector<std::int64_t> z0{10};
  std::vector<std::size_t> n_transitions{10};
  std::vector<std::size_t> m{1};
  std::vector<double> dt{0.1};
  double gap_lo = 0, gap_hi = 0;
  CLI::Option* gap_opt = nullptr;
  std::vector<std::string> methods{"gw", "qg", "spmle"};
  std::int64_t replicates = 100;
  Seed seed;
  std::string output_prefix;
  FitOptions fit;
  std::string param = "log-rates", kappa = "gaussian";
  bool no_se = false;
};

void setup_benchmark(CLI::App& app, BenchmarkArgs& a) {
  auto* s = app.add_subcommand("benchmark", "Monte Carlo bias / SD / RMSE over a grid of designs");
  s->add_option("--lambda", a.lambda)->required()->check(CLI::NonNegativeNumber);
  s->add_option("--mu", a.mu)->required()->check(CLI::NonNegativeNumber);
  s->add_option("--z0", a.z0, "Initial populations (grid axis)")->delimiter(',')->check(CLI::PositiveNumber);
  s->add_option("--n-transitions", a.n_transitions, "Transitions per trajectory (grid axis)")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  s->add_option("--m", a.m, "Trajectories per panel (grid axis)")->delimiter(',')->check(CLI::PositiveNumber);
  auto* dt = s->add_option("--dt", a.dt, "Spacing (grid axis)")->delimiter(',')->check(CLI::PositiveNumber);
  auto* lo = s->add_option("--gap-lo", a.gap_lo, "Uniform random gaps: lower end")->check(CLI::PositiveNumber);
  a.gap_opt = s->add_option("--gap-hi", a.gap_hi, "Uniform random gaps: upper end")->check(CLI::PositiveNumber);
  lo->needs(a.gap_opt)->excludes(dt);
  a.gap_opt->needs(lo);
  s->add_option("--methods", a.methods)->delimiter(',');
  s->add_option("--replicates", a.replicates)->check(CLI::PositiveNumber);
  add_seed(s, a.seed);
  s->add_option("-o,--output-prefix", a.output_prefix, "Writes <prefix>.csv and <prefix>.json")->required();
  add_fit_options(s, a.fit, a.param, a.kappa, a.no_se);
}

json summary_json(const ErrorSummary& s) { return {{"bias", s.bias}, {"sd", s.sd}, {"rmse", s.rmse}}; }

int run_benchmark_cmd(BenchmarkArgs& a, std::ostream& out) {
  std::vector<Method> methods;
  for (const auto& name : a.methods) methods.push_back(parse_method(name));
  finish_fit_options(a.fit, a.param, a.kappa, a.no_se);
  if (a.gap_opt->count() && !(a.gap_lo <= a.gap_hi)) throw domain_error("benchmark: --gap-lo exceeds --gap-hi");
  const Rates rates(a.lambda, a.mu);
  const std::uint64_t seed = a.seed.resolve();
  const std::vector<double> dts = a.gap_opt->count() ? std::vector<double>{0.0} : a.dt;

  std::ostringstream csv;
  csv << "# schema: " << benchmark_schema << '\n' << "# seed: " << seed << " replicates: " << a.replicates << '\n';
  csv << "cell,lambda,mu,z0,n_transitions,m,dt,gap_lo,gap_hi,method,n_ok,n_failed,n_nonconverged,"
         "bias_lambda,sd_lambda,rmse_lambda,bias_mu,sd_mu,rmse_mu,bias_omega,sd_omega,rmse_omega,rejections\n";
  json doc = header(benchmark_schema);
  doc["seed"] = seed;
  doc["seed_source"] = a.seed.source();
  doc["replicates"] = a.replicates;
  doc["methods"] = a.methods;
  doc["cells"] = json::array();

  auto na = [](double v) { return std::isnan(v) ? std::string("NA") : format_number(v); };
  std::uint64_t index = 0;
  for (auto z0 : a.z0) {
    for (auto n : a.n_transitions) {
      for (auto m : a.m) {
        for (double dt : dts) {
          BenchmarkCell cell{rates, z0, n, m, dt, std::nullopt};
          if (a.gap_opt->count()) cell.gaps = GapLaw{a.gap_lo, a.gap_hi};
          const auto rep = run_benchmark(cell, methods, a.replicates, derive_seed(seed, index), a.fit);
          json jc = {{"cell", index},
                     {"lambda", a.lambda},
                     {"mu", a.mu},
                     {"z0", z0},
                     {"n_transitions", n},
                     {"m", m},
                     {"dt", cell.gaps ? json(nullptr) : json(dt)},
                     {"gap_lo", cell.gaps ? json(a.gap_lo) : json(nullptr)},
                     {"gap_hi", cell.gaps ? json(a.gap_hi) : json(nullptr)},
                     {"seed", rep.seed},
                     {"rejections", rep.rejections},
                     {"rows", json::array()}};
          for (const auto& row : rep.rows) {
            jc["rows"].push_back({{"method", method_name(row.method)},
                                  {"n_ok", row.n_ok},
                                  {"n_failed", row.n_failed},
                                  {"n_nonconverged", row.n_nonconverged},
                                  {"lambda", summary_json(row.lambda)},
                                  {"mu", summary_json(row.mu)},
                                  {"omega", summary_json(row.omega)},
                                  {"first_error", row.first_error}});
            csv << index << ',' << format_number(a.lambda) << ',' << format_number(a.mu) << ',' << z0 << ',' << n
                << ',' << m << ',' << (cell.gaps ? "NA" : format_number(dt)) << ','
                << (cell.gaps ? format_number(a.gap_lo) : "NA") << ','
                << (cell.gaps ? format_number(a.gap_hi) : "NA") << ',' << method_name(row.method) << ','
                << row.n_ok << ',' << row.n_failed << ',' << row.n_nonconverged;
            for (const auto* s : {&row.lambda, &row.mu, &row.omega}) {
              csv << ',' << na(s->bias) << ',' << na(s->sd) << ',' << na(s->rmse);
            }
            csv << ',' << rep.rejections << '\n';
          }
          doc["cells"].push_back(std::move(jc));
          ++index;
        }
      }
    }
  }
  emit(a.output_prefix + ".csv", csv.str(), out);
  emit(a.output_prefix + ".json", doc.dump(2) + "\n", out);
  return exit_ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linear birth-death process: simulation, transition probabilities and estimation", "lbdp"};
  app.set_version_flag("--version", std::string(artifact_version));
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file of option defaults; keys go under [simulate], [estimate], ...");
  SimulateArgs sim;
  EstimateArgs est;
  PmfArgs pmf;
  BenchmarkArgs bench;
  setup_simulate(app, sim);
  setup_estimate(app, est);
  setup_pmf(app, pmf);
  setup_benchmark(app, bench);

  // --config belongs to the top-level app but may be written after the subcommand.
  std::vector<std::string> front, rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      front.push_back(args[i]);
      front.push_back(args[++i]);
    } else if (args[i].starts_with("--config=")) {
      front.push_back(args[i]);
    } else {
      rest.push_back(args[i]);
    }
  }
  front.insert(front.end(), rest.begin(), rest.end());
  std::vector<std::string> reversed(front.rbegin(), front.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    if (app.got_subcommand("simulate")) return run_simulate(sim, out);
    if (app.got_subcommand("estimate")) return run_estimate(est, out, err);
    if (app.got_subcommand("pmf")) return run_pmf(pmf, out, err);
    return run_benchmark_cmd(bench, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e);
  }
}

}  // namespace lbdp::cli
