#pragma once

// Monte-Carlo benchmark: simulate conditioned panels for a grid cell, fit
// each method, aggregate bias / SD / RMSE in replicate order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lbdp/core.hpp"
#include "lbdp/estimate.hpp"
#include "lbdp/rng.hpp"
#include "lbdp/simulate.hpp"

namespace lbdp {

struct GapLaw {
  double lo;
  double hi;
};

struct BenchmarkCell {
  Rates rates;
  std::int64_t z0 = 1;
  std::size_t n_transitions = 30;  // N
  std::size_t m = 1;               // trajectories per panel
  double dt = 0.1;
  std::optional<GapLaw> gaps;  // uniform random gaps instead of dt
};

struct ErrorSummary {
  double bias = 0.0;
  double sd = 0.0;  // n - 1 denominator
  double rmse = 0.0;
};

struct BenchmarkRow {
  Method method;
  std::int64_t n_ok = 0;
  std::int64_t n_failed = 0;
  std::int64_t n_nonconverged = 0;
  ErrorSummary lambda;
  ErrorSummary mu;
  ErrorSummary omega;
  double mean_wall_time = 0.0;
  std::string first_error;
};

struct BenchmarkReport {
  BenchmarkCell cell;
  std::int64_t n_replicates;
  std::uint64_t seed;
  std::vector<BenchmarkRow> rows;
  std::int64_t rejections;  // extinct paths discarded while conditioning
};

/// Threads for replicate-level parallelism: LBDP_THREADS, else the hardware count.
inline unsigned benchmark_threads() {
  if (const char* env = std::getenv("LBDP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// (bias, sd, rmse) of estimates around a true value.
inline ErrorSummary summarize_errors(const std::vector<double>& est, double truth) {
  ErrorSummary s;
  const auto n = static_cast<double>(est.size());
  if (est.empty()) return {NAN, NAN, NAN};
  double sum = 0.0, sq = 0.0;
  for (double v : est) {
    sum += v - truth;
    sq += (v - truth) * (v - truth);
  }
  s.bias = sum / n;
  s.rmse = std::sqrt(sq / n);
  if (est.size() > 1) {
    const double mean = truth + s.bias;
    double ss = 0.0;
    for (double v : est) ss += (v - mean) * (v - mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  } else {
    s.sd = NAN;
  }
  return s;
}

/// The conditioned panel for replicate `rep` of a cell.
inline PanelOutcome benchmark_panel(const BenchmarkCell& cell, std::uint64_t seed, std::uint64_t rep) {
  const std::uint64_t rep_seed = derive_seed(seed, rep);
  if (!cell.gaps) {
    SimConfig cfg{cell.rates, cell.z0, regular_times(cell.dt, cell.n_transitions), true, rep_seed};
    return simulate_panel(cfg, cell.m);
  }
  std::vector<Trajectory> out;
  std::int64_t rejections = 0;
  for (std::size_t i = 0; i < cell.m; ++i) {
    std::mt19937_64 eng(derive_seed(rep_seed, 0x100000000ULL + i));
    std::vector<double> times{0.0};
    for (std::size_t j = 0; j < cell.n_transitions; ++j) {
      times.push_back(times.back() + cell.gaps->lo + (cell.gaps->hi - cell.gaps->lo) * uniform01(eng));
    }
    SimConfig cfg{cell.rates, cell.z0, std::move(times), true, derive_seed(rep_seed, i)};
    auto s = simulate_with_stats(cfg);
    rejections += s.rejections;
    out.push_back(std::move(s.trajectory));
  }
  return {Panel(std::move(out)), rejections};
}

inline BenchmarkReport run_benchmark(const BenchmarkCell& cell, const std::vector<Method>& methods,
                                     std::int64_t n_replicates, std::uint64_t seed, FitOptions fit_options = {},
                                     unsigned threads = benchmark_threads()) {
  if (n_replicates < 1) throw domain_error("benchmark: need at least one replicate");
  if (methods.empty()) throw domain_error("benchmark: no methods given");
  struct Outcome {
    std::optional<EstimateResult> res;
    std::string error;
  };
  const auto n = static_cast<std::size_t>(n_replicates);
  std::vector<std::vector<Outcome>> outcomes(n, std::vector<Outcome>(methods.size()));
  std::vector<std::int64_t> rejections(n, 0);
  std::vector<std::string> sim_error(n);

  auto work = [&](std::size_t r) {
    Panel panel = [&] {
      auto p = benchmark_panel(cell, seed, r);
      rejections[r] = p.rejections;
      return std::move(p.panel);
    }();
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      FitOptions fo = fit_options;
      fo.seed = derive_seed(seed ^ 0x5bd1e995ULL, r);
      try {
        outcomes[r][mi].res = fit(panel, methods[mi], fo);
      } catch (const std::exception& e) {
        outcomes[r][mi].error = e.what();
      }
    }
  };
  auto guarded = [&](std::size_t r) {
    try {
      work(r);
    } catch (const std::exception& e) {
      sim_error[r] = e.what();
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t r = 0; r < n; ++r) guarded(r);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t r = w; r < n; r += threads) guarded(r);
      });
    }
    for (auto& th : pool) th.join();
  }

  BenchmarkReport report{cell, n_replicates, seed, {}, 0};
  for (auto v : rejections) report.rejections += v;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    BenchmarkRow row;
    row.method = methods[mi];
    std::vector<double> l, m, w;
    double wall = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const auto& o = outcomes[r][mi];
      if (!sim_error[r].empty() || !o.res) {
        ++row.n_failed;
        if (row.first_error.empty()) row.first_error = sim_error[r].empty() ? o.error : sim_error[r];
        continue;
      }
      ++row.n_ok;
      if (!o.res->converged) ++row.n_nonconverged;
      l.push_back(o.res->rates.lambda());
      m.push_back(o.res->rates.mu());
      w.push_back(o.res->omega_hat);
      wall += o.res->wall_time;
    }
    row.lambda = summarize_errors(l, cell.rates.lambda());
    row.mu = summarize_errors(m, cell.rates.mu());
    row.omega = summarize_errors(w, cell.rates.omega());
    row.mean_wall_time = row.n_ok > 0 ? wall / static_cast<double>(row.n_ok) : NAN;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace lbdp
