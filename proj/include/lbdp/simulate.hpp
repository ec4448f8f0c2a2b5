#pragma once

// Exact event-driven (Gillespie) simulation of the LBDP observed at fixed
// times, with optional rejection of paths extinct at the last observation.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lbdp/core.hpp"
#include "lbdp/error.hpp"
#include "lbdp/rng.hpp"

namespace lbdp {

/// `obs_times[0]` is the start of the process, where Z = z0.
struct SimConfig {
  Rates rates;
  std::int64_t z0 = 1;
  std::vector<double> obs_times;
  bool condition_nonextinct = false;
  std::uint64_t seed = 0;
  std::int64_t max_events = 1'000'000'000;
  std::int64_t max_pop = 10'000'000;
  std::int64_t max_attempts = 1'000'000;  // rejection budget when conditioning
};

struct SimOutcome {
  Trajectory trajectory;
  std::int64_t rejections;
  std::int64_t events;
};

/// Evenly spaced observation times 0, dt, ..., n_obs * dt.
inline std::vector<double> regular_times(double dt, std::size_t n_transitions, double t0 = 0.0) {
  std::vector<double> t(n_transitions + 1);
  for (std::size_t j = 0; j <= n_transitions; ++j) t[j] = t0 + dt * static_cast<double>(j);
  return t;
}

namespace detail {

inline void validate(const SimConfig& c) {
  if (c.z0 < 1) throw domain_error("simulate: z0 must be at least 1");
  if (c.obs_times.size() < 2) throw domain_error("simulate: need at least two observation times");
  for (std::size_t j = 1; j < c.obs_times.size(); ++j) {
    if (!(c.obs_times[j] > c.obs_times[j - 1])) throw domain_error("simulate: observation times must increase");
  }
  if (c.max_events < 1 || c.max_pop < 1 || c.max_attempts < 1) throw domain_error("simulate: caps must be positive");
}

// One unconditioned path; returns counts at obs_times.
inline std::vector<std::int64_t> gillespie_path(const SimConfig& c, std::mt19937_64& eng, std::int64_t& events) {
  const double lambda = c.rates.lambda();
  const double xi = c.rates.xi();
  const double p_birth = lambda / xi;
  std::vector<std::int64_t> counts(c.obs_times.size());
  std::int64_t k = c.z0;
  double t = c.obs_times.front();
  counts[0] = k;
  for (std::size_t j = 1; j < c.obs_times.size(); ++j) {
    const double target = c.obs_times[j];
    while (k > 0) {
      const double wait = -std::log1p(-uniform01(eng)) / (static_cast<double>(k) * xi);
      if (t + wait > target) break;  // memoryless: restart the clock at the observation
      t += wait;
      k += uniform01(eng) < p_birth ? 1 : -1;
      if (++events > c.max_events) {
        throw resource_cap_error("simulate: event cap " + std::to_string(c.max_events) + " exceeded at t=" +
                                 std::to_string(t) + " with population " + std::to_string(k));
      }
      if (k > c.max_pop) {
        throw resource_cap_error("simulate: population cap " + std::to_string(c.max_pop) + " exceeded at t=" +
                                 std::to_string(t));
      }
    }
    t = target;
    counts[j] = k;
  }
  return counts;
}

}  // namespace detail

inline SimOutcome simulate_with_stats(const SimConfig& config) {
  detail::validate(config);
  std::mt19937_64 eng(config.seed);
  std::int64_t events = 0;
  for (std::int64_t attempt = 0; attempt < config.max_attempts; ++attempt) {
    auto counts = detail::gillespie_path(config, eng, events);
    if (!config.condition_nonextinct || counts.back() > 0) {
      return {Trajectory(config.obs_times, std::move(counts)), attempt, events};
    }
  }
  throw resource_cap_error("simulate: no non-extinct path within " + std::to_string(config.max_attempts) +
                           " attempts");
}

inline Trajectory simulate_trajectory(const SimConfig& config) { return simulate_with_stats(config).trajectory; }

struct PanelOutcome {
  Panel panel;
  std::int64_t rejections;
};

/// M trajectories; trajectory i uses the seed derive_seed(config.seed, i).
inline PanelOutcome simulate_panel(const SimConfig& config, std::size_t m) {
  if (m < 1) throw domain_error("simulate: need at least one replicate");
  std::vector<Trajectory> out;
  out.reserve(m);
  std::int64_t rejections = 0;
  for (std::size_t i = 0; i < m; ++i) {
    SimConfig c = config;
    c.seed = derive_seed(config.seed, i);
    auto s = simulate_with_stats(c);
    rejections += s.rejections;
    out.push_back(std::move(s.trajectory));
  }
  return {Panel(std::move(out)), rejections};
}

}  // namespace lbdp
