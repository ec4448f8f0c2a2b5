#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "lbdp/benchmark.hpp"
#include "lbdp/simulate.hpp"

using namespace lbdp;

namespace {

std::map<std::int64_t, std::int64_t> histogram(SimConfig cfg, int n) {
  std::map<std::int64_t, std::int64_t> h;
  const auto base = cfg.seed;
  for (int i = 0; i < n; ++i) {
    cfg.seed = derive_seed(base, i);
    ++h[simulate_trajectory(cfg).counts().back()];
  }
  return h;
}

double total_variation(const std::map<std::int64_t, std::int64_t>& h, int n, double t, std::int64_t a,
                       const Rates& r, bool conditional = false) {
  const double p0 = transition_prob(0, t, a, r);
  const auto kmax = truncation_point(t, a, r);
  double tv = 0, mass = 0;
  for (std::int64_t k = conditional ? 1 : 0; k <= kmax; ++k) {
    double p = transition_prob(k, t, a, r);
    if (conditional) p /= 1.0 - p0;
    mass += p;
    const auto it = h.find(k);
    const double e = it == h.end() ? 0.0 : double(it->second) / n;
    tv += std::abs(e - p);
  }
  for (const auto& [k, c] : h) {
    if (k > kmax) tv += double(c) / n;
  }
  return 0.5 * (tv + (1.0 - mass));
}

}  // namespace

TEST(Simulate, PureBirthIsMonotone) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    SimConfig cfg{Rates(3, 0), 2, regular_times(0.1, 20), false, s};
    const auto tr = simulate_trajectory(cfg);
    for (std::size_t j = 1; j < tr.size(); ++j) EXPECT_GE(tr.counts()[j], tr.counts()[j - 1]);
  }
}

TEST(Simulate, SeedDeterminism) {
  SimConfig cfg{Rates(7, 5), 10, regular_times(0.1, 30), true, 42};
  const auto a = simulate_with_stats(cfg);
  const auto b = simulate_with_stats(cfg);
  EXPECT_TRUE(std::ranges::equal(a.trajectory.counts(), b.trajectory.counts()));
  EXPECT_EQ(a.events, b.events);
  cfg.seed = 43;
  const auto c = simulate_with_stats(cfg);
  EXPECT_FALSE(std::ranges::equal(a.trajectory.counts(), c.trajectory.counts()));
}

TEST(Simulate, PanelUsesDerivedSeeds) {
  SimConfig cfg{Rates(7, 5), 3, regular_times(0.2, 5), false, 9};
  const auto panel = simulate_panel(cfg, 4).panel;
  for (std::size_t i = 0; i < 4; ++i) {
    SimConfig one = cfg;
    one.seed = derive_seed(9, i);
    EXPECT_TRUE(std::ranges::equal(panel[i].counts(), simulate_trajectory(one).counts()));
  }
}

TEST(Simulate, StartsAtZ0AndKeepsTimes) {
  const std::vector<double> times{0.5, 0.7, 1.5, 1.6};
  SimConfig cfg{Rates(2, 1), 6, times, false, 1};
  const auto tr = simulate_trajectory(cfg);
  EXPECT_EQ(tr.counts()[0], 6);
  EXPECT_TRUE(std::ranges::equal(tr.times(), times));
}

TEST(Simulate, MarginalMatchesExactLaw) {
  const Rates r(7, 5);
  const int n = 200'000;
  const auto h = histogram({r, 1, {0.0, 1.0}, false, 5}, n);
  EXPECT_LE(total_variation(h, n, 1.0, 1, r), 0.01);
}

TEST(Simulate, ExtinctionFrequency) {
  const Rates r(7, 5);
  const int n = 200'000;
  const auto h = histogram({r, 3, {0.0, 1.0}, false, 6}, n);
  const double p = std::pow(offspring_law(1.0, r).alpha, 3);
  const double freq = double(h.count(0) ? h.at(0) : 0) / n;
  EXPECT_NEAR(freq, p, 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Simulate, MeanAndVarianceGrid) {
  const double rates[][2] = {{7, 5}, {2, 3}, {1, 1}, {4, 0.5}};
  const int n = 20'000;
  for (auto& rr : rates) {
    const Rates r(rr[0], rr[1]);
    for (double t : {0.3, 1.0}) {
      for (std::int64_t a : {1, 5}) {
        std::vector<double> z(n);
        SimConfig cfg{r, a, {0.0, t}, false, 0};
        for (int i = 0; i < n; ++i) {
          cfg.seed = derive_seed(100 + a, i);
          z[i] = double(simulate_trajectory(cfg).counts().back());
        }
        double em = 0;
        for (double v : z) em += v;
        em /= n;
        double m2 = 0, m4 = 0;
        for (double v : z) {
          const double d = (v - em) * (v - em);
          m2 += d, m4 += d * d;
        }
        m2 /= n, m4 /= n;
        const double m = mean(t, a, r), v = variance(t, a, r);
        EXPECT_NEAR(em, m, 3 * std::sqrt(v / n)) << rr[0] << "," << rr[1] << " t=" << t << " a=" << a;
        EXPECT_NEAR(m2, v, 3 * std::sqrt((m4 - m2 * m2) / n)) << rr[0] << "," << rr[1] << " t=" << t << " a=" << a;
      }
    }
  }
}

TEST(Simulate, ConditioningMatchesTruncatedLaw) {
  const Rates r(7, 5);
  const int n = 100'000;
  std::int64_t rejections = 0;
  std::map<std::int64_t, std::int64_t> h;
  SimConfig cfg{r, 1, {0.0, 1.0}, true, 0};
  for (int i = 0; i < n; ++i) {
    cfg.seed = derive_seed(7, i);
    const auto s = simulate_with_stats(cfg);
    rejections += s.rejections;
    ++h[s.trajectory.counts().back()];
  }
  EXPECT_EQ(h.count(0), 0u);
  EXPECT_LE(total_variation(h, n, 1.0, 1, r, true), 0.015);
  const double p_accept = 1.0 - transition_prob(0, 1.0, 1, r);
  const double attempts = double(n + rejections);
  EXPECT_NEAR(n / attempts, p_accept, 3.0 * std::sqrt(p_accept * (1 - p_accept) / attempts));
}

TEST(Simulate, ResourceCaps) {
  SimConfig cfg{Rates(10, 0), 5, {0.0, 3.0}, false, 1};
  cfg.max_pop = 1000;
  EXPECT_THROW(simulate_trajectory(cfg), resource_cap_error);
  cfg.max_pop = 10'000'000;
  cfg.max_events = 50;
  EXPECT_THROW(simulate_trajectory(cfg), resource_cap_error);
  SimConfig doomed{Rates(0, 5), 1, {0.0, 10.0}, true, 1};
  doomed.max_attempts = 20;
  EXPECT_THROW(simulate_trajectory(doomed), resource_cap_error);
}

TEST(Simulate, InvalidConfig) {
  EXPECT_THROW(simulate_trajectory({Rates(1, 1), 0, {0.0, 1.0}}), domain_error);
  EXPECT_THROW(simulate_trajectory({Rates(1, 1), 1, {0.0}}), domain_error);
  EXPECT_THROW(simulate_trajectory({Rates(1, 1), 1, {0.0, 1.0, 1.0}}), domain_error);
}

TEST(Benchmark, RmseDecomposition) {
  const std::vector<double> est{6.5, 7.25, 8.0, 6.0, 7.75};
  const auto s = summarize_errors(est, 7.0);
  const double n = double(est.size());
  EXPECT_NEAR(s.rmse * s.rmse, s.bias * s.bias + s.sd * s.sd * (n - 1) / n, 1e-14);
}

TEST(Benchmark, DeterministicAcrossThreadCounts) {
  BenchmarkCell cell{Rates(7, 5), 10, 10, 3, 0.1, std::nullopt};
  const std::vector<Method> methods{Method::gw, Method::qg, Method::spmle};
  const auto a = run_benchmark(cell, methods, 6, 123, {}, 1);
  const auto b = run_benchmark(cell, methods, 6, 123, {}, 3);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].lambda.bias, b.rows[i].lambda.bias);
    EXPECT_EQ(a.rows[i].mu.rmse, b.rows[i].mu.rmse);
    EXPECT_EQ(a.rows[i].omega.sd, b.rows[i].omega.sd);
    EXPECT_EQ(a.rows[i].n_failed, b.rows[i].n_failed);
  }
  EXPECT_EQ(a.rejections, b.rejections);
}

TEST(Benchmark, FailuresAreCountedNotFatal) {
  BenchmarkCell cell{Rates(7, 5), 10, 5, 2, 0.1, GapLaw{0.05, 0.2}};
  const auto rep = run_benchmark(cell, {Method::gw, Method::qg}, 4, 5, {}, 1);
  EXPECT_EQ(rep.rows[0].n_failed, 4);
  EXPECT_NE(rep.rows[0].first_error.find("qg"), std::string::npos);
  EXPECT_EQ(rep.rows[1].n_ok, 4);
  EXPECT_TRUE(std::isnan(rep.rows[0].lambda.bias));
}

TEST(Benchmark, ThreadsFromEnvironment) {
  setenv("LBDP_THREADS", "3", 1);
  EXPECT_EQ(benchmark_threads(), 3u);
  setenv("LBDP_THREADS", "zero", 1);
  EXPECT_GE(benchmark_threads(), 1u);
  unsetenv("LBDP_THREADS");
}
