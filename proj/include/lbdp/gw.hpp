#pragma once

// Embedded Galton-Watson estimators for equally spaced panels.

#include <cmath>
#include <cstdint>
#include <string>

#include "lbdp/core.hpp"
#include "lbdp/error.hpp"

namespace lbdp {

// |m - 1| at or below this uses the critical inversion.
inline constexpr double gw_critical_tolerance = 1e-6;

/// Offspring mean and variance per interval of the embedded GW process.
struct GwMoments {
  double m_hat;
  double sigma2_hat;
  double delta_t;
  std::int64_t n_terms;  // transitions up to and including each path's first 0
  std::int64_t m_traj;
  double sum_parents;  // sum of Z_{j-1} over all transitions
};

enum class GwRegime { supercritical_ok, near_critical_warning };

struct GwEstimate {
  Rates rates;
  double omega_hat;
  double se_lambda;
  double se_mu;
  double se_omega;
  GwRegime regime;
  bool clamped;  // a negative rate estimate was set to 0
  GwMoments moments;
};

inline GwMoments gw_moments(const Panel& panel) {
  const auto dt = panel.common_spacing();
  if (!dt) {
    throw precondition_error("GW estimation needs equally spaced observations; use the quasi-Gaussian (qg) method");
  }
  double num = 0.0, den = 0.0;
  std::int64_t n_terms = 0;
  for (const auto& tr : panel.trajectories()) {
    const auto c = tr.counts();
    for (std::size_t j = 1; j < tr.size(); ++j) {
      num += static_cast<double>(c[j]);
      den += static_cast<double>(c[j - 1]);
    }
    n_terms += static_cast<std::int64_t>(tr.informative_transitions());
  }
  if (den <= 0.0) throw degenerate_data_error("GW estimation: no transition starts from a positive count");
  const double m = num / den;
  if (!(m > 0.0)) throw degenerate_data_error("GW estimation: every trajectory is extinct after one step");
  double ss = 0.0;
  for (const auto& tr : panel.trajectories()) {
    const auto c = tr.counts();
    for (std::size_t j = 1; j < tr.size(); ++j) {
      if (c[j - 1] == 0) continue;  // 0/0 := 1 kills the term
      const double zp = static_cast<double>(c[j - 1]);
      const double d = static_cast<double>(c[j]) / zp - m;
      ss += zp * d * d;
    }
  }
  return {m, ss / static_cast<double>(n_terms), *dt, n_terms, static_cast<std::int64_t>(panel.size()), den};
}

struct GwInversion {
  double lambda;
  double mu;
  bool clamped;
};

/// Rates from offspring moments, before clamping is turned into a Rates value.
inline GwInversion gw_invert_raw(double m, double sigma2, double dt) {
  if (!(m > 0.0)) throw domain_error("gw_invert: m_hat must be positive");
  if (!(dt > 0.0)) throw domain_error("gw_invert: delta_t must be positive");
  double lambda, mu;
  if (std::abs(m - 1.0) <= gw_critical_tolerance) {
    lambda = mu = sigma2 / (2.0 * dt);
  } else {
    const double h = std::log(m) / (2.0 * dt);
    const double r = sigma2 / (m * (m - 1.0));
    lambda = h * (r + 1.0);
    mu = h * (r - 1.0);
  }
  bool clamped = false;
  if (lambda < 0.0) lambda = 0.0, clamped = true;
  if (mu < 0.0) mu = 0.0, clamped = true;
  return {lambda, mu, clamped};
}

inline Rates gw_invert(const GwMoments& moments) {
  const auto inv = gw_invert_raw(moments.m_hat, moments.sigma2_hat, moments.delta_t);
  if (inv.lambda + inv.mu <= 0.0) {
    throw degenerate_data_error("gw_invert: moments imply lambda = mu = 0 (no variability in the data)");
  }
  return Rates(inv.lambda, inv.mu);
}

struct GwStandardErrors {
  double se_lambda;
  double se_mu;
  double se_omega;
  GwRegime regime;
};

/// Plug-in asymptotic standard errors; only meaningful for m_hat > 1.
inline GwStandardErrors gw_standard_errors(const GwMoments& mo) {
  const double m = mo.m_hat, dt = mo.delta_t;
  const auto regime = m > 1.0 + gw_critical_tolerance ? GwRegime::supercritical_ok : GwRegime::near_critical_warning;
  const double denom = 2.0 * dt * dt * m * m * (m - 1.0) * (m - 1.0) * static_cast<double>(mo.n_terms);
  const double se = std::abs(std::log(m)) * mo.sigma2_hat / std::sqrt(denom);
  const double se_omega = std::sqrt(mo.sigma2_hat) / (m * dt * std::sqrt(mo.sum_parents));
  return {se, se, se_omega, regime};
}

inline GwStandardErrors gw_standard_errors(const GwMoments& moments, const Panel&) {
  return gw_standard_errors(moments);
}

inline GwEstimate gw_estimate(const Panel& panel) {
  const auto mo = gw_moments(panel);
  const auto inv = gw_invert_raw(mo.m_hat, mo.sigma2_hat, mo.delta_t);
  const Rates rates = gw_invert(mo);
  const auto se = gw_standard_errors(mo);
  return {rates, std::log(mo.m_hat) / mo.delta_t, se.se_lambda, se.se_mu, se.se_omega, se.regime, inv.clamped, mo};
}

}  // namespace lbdp
