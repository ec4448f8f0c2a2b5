#pragma once

// Gaussian quasi-likelihood for arbitrary observation gaps. Parametrised by
// (omega, xi); xi is profiled out in closed form and omega found from the
// monotone profile score. Covariance by the sandwich formula.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lbdp/core.hpp"
#include "lbdp/error.hpp"
#include "lbdp/numeric.hpp"
#include "lbdp/saddlepoint.hpp"

namespace lbdp {

struct QgParams {
  double omega;
  double xi;
};

inline bool in_theta(const QgParams& p) { return p.xi + p.omega > 0.0 && p.xi - p.omega > 0.0; }

inline Rates to_rates(const QgParams& p) {
  return Rates(std::max(0.0, 0.5 * (p.xi + p.omega)), std::max(0.0, 0.5 * (p.xi - p.omega)));
}

enum class KappaMode { gaussian, cumulant };

struct QgFit {
  QgParams params;
  Rates rates;
  std::optional<Eigen::Matrix2d> cov_lambda_mu;
  double loglik;
  int profile_iterations;
  bool boundary;    // estimate on the edge of Theta (lambda or mu <= 0) or xi_hat = 0
  bool degenerate;  // xi_hat = 0: the path is fitted exactly by the mean curve
  bool local_only;  // the profile has further stationary points or rises at the bracket edge
};

namespace qg {

// kappa(u) = log((e^u - 1)/u) and its derivative, which lies in (0, 1).
inline double kappa(double u) { return numeric::log_expm1_over(u); }

inline double kappa_prime(double u) {
  if (std::abs(u) < 0.1) {
    const double u2 = u * u;
    return 0.5 + u * (1.0 / 12.0 + u2 * (-1.0 / 720.0 + u2 * (1.0 / 30240.0 - u2 / 1209600.0)));
  }
  return -1.0 / std::expm1(-u) - 1.0 / u;
}

// c(u) = u / (e^u - 1).
inline double c(double u) { return std::exp(-kappa(u)); }

struct Transition {
  double a;  // k_{j-1} > 0
  double k;
  double tau;
};

// Transitions j = 1..T_i of every trajectory (up to and including the first 0).
inline std::vector<Transition> transitions(const Panel& panel) {
  std::vector<Transition> out;
  for (const auto& tr : panel.trajectories()) {
    const auto c = tr.counts();
    const auto T = tr.informative_transitions();
    for (std::size_t j = 1; j <= T; ++j) {
      out.push_back({static_cast<double>(c[j - 1]), static_cast<double>(c[j]), tr.gap(j)});
    }
  }
  return out;
}

// log nu_j(omega) with nu = tau zeta / c(omega tau).
inline double log_nu(double omega, double tau) {
  const double u = omega * tau;
  return std::log(tau) + u + kappa(u);
}

inline double dlog_nu(double omega, double tau) { return tau * (1.0 + kappa_prime(omega * tau)); }

// log |k - a zeta| and its sign.
inline std::pair<double, double> log_abs_residual(const Transition& x, double omega) {
  const double u = omega * x.tau;
  const double log_mean = std::log(x.a) + u;
  if (x.k == 0.0) return {log_mean, -1.0};
  const double log_k = std::log(x.k);
  if (log_mean >= log_k) return {log_mean + std::log1p(-std::exp(log_k - log_mean)), -1.0};
  return {log_k + std::log1p(-std::exp(log_mean - log_k)), 1.0};
}

struct ProfileState {
  double log_S;   // log sum r^2 / (a nu)
  double dlog_S;  // d log S / d omega
  double sum_log_a_nu;
  double sum_dlog_nu;
};

inline ProfileState profile_state(const std::vector<Transition>& xs, double omega) {
  std::vector<double> log_w(xs.size()), log_r(xs.size()), sgn(xs.size()), lnu(xs.size()), dnu(xs.size());
  double top = -numeric::inf, sum_log_a_nu = 0.0, sum_dlog_nu = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& x = xs[i];
    lnu[i] = log_nu(omega, x.tau);
    dnu[i] = dlog_nu(omega, x.tau);
    std::tie(log_r[i], sgn[i]) = log_abs_residual(x, omega);
    log_w[i] = 2.0 * log_r[i] - std::log(x.a) - lnu[i];
    top = std::max(top, log_w[i]);
    sum_log_a_nu += std::log(x.a) + lnu[i];
    sum_dlog_nu += dnu[i];
  }
  if (top == -numeric::inf) return {-numeric::inf, 0.0, sum_log_a_nu, sum_dlog_nu};
  double S = 0.0, dS = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& x = xs[i];
    const double w = std::exp(log_w[i] - top);
    // dw/domega = -2 r tau zeta / nu - w dlog(nu)
    const double cross = sgn[i] * std::exp(log_r[i] + std::log(x.tau) + omega * x.tau - lnu[i] - top);
    S += w;
    dS += -2.0 * cross - w * dnu[i];
  }
  return {top + std::log(S), dS / S, sum_log_a_nu, sum_dlog_nu};
}

inline double total_T(const std::vector<Transition>& xs) { return static_cast<double>(xs.size()); }

inline double profile_loglik(const std::vector<Transition>& xs, double omega) {
  const auto s = profile_state(xs, omega);
  const double T = total_T(xs);
  const double log_xi = s.log_S - std::log(T);
  return -0.5 * T * (numeric::log_two_pi + log_xi + 1.0) - 0.5 * s.sum_log_a_nu;
}

inline double profile_derivative(const std::vector<Transition>& xs, double omega) {
  const auto s = profile_state(xs, omega);
  return -0.5 * total_T(xs) * s.dlog_S - 0.5 * s.sum_dlog_nu;
}

inline void require_transitions(const std::vector<Transition>& xs) {
  if (xs.empty()) throw degenerate_data_error("quasi-Gaussian fit: no transition from a positive count");
}

}  // namespace qg

/// Quasi-log-likelihood at (omega, xi), constants included.
inline double qg_loglik(const Panel& panel, const QgParams& params) {
  if (!in_theta(params)) throw domain_error("qg_loglik: (omega, xi) outside Theta (need xi > |omega|)");
  double total = 0.0;
  for (const auto& x : qg::transitions(panel)) {
    const double log_var = std::log(x.a) + std::log(params.xi) + qg::log_nu(params.omega, x.tau);
    const auto [log_r, sgn] = qg::log_abs_residual(x, params.omega);
    total += -0.5 * (numeric::log_two_pi + log_var + std::exp(2.0 * log_r - log_var));
  }
  return total;
}

/// xi maximising the quasi-likelihood at fixed omega.
inline double qg_profile_xi(const Panel& panel, double omega) {
  const auto xs = qg::transitions(panel);
  qg::require_transitions(xs);
  const auto s = qg::profile_state(xs, omega);
  return std::exp(s.log_S - std::log(qg::total_T(xs)));
}

/// Profile log-likelihood l_p(omega) = l(xi_hat(omega), omega).
inline double qg_profile_loglik(const Panel& panel, double omega) {
  const auto xs = qg::transitions(panel);
  qg::require_transitions(xs);
  return qg::profile_loglik(xs, omega);
}

inline double qg_profile_derivative(const Panel& panel, double omega) {
  const auto xs = qg::transitions(panel);
  qg::require_transitions(xs);
  return qg::profile_derivative(xs, omega);
}

struct QgBracket {
  double lo;
  double hi;
  double omega_init;
};

/// Initial profile search bracket omega_init +- 10 / mean gap.
inline QgBracket qg_search_bracket(const Panel& panel) {
  const auto xs = qg::transitions(panel);
  qg::require_transitions(xs);
  double num = 0.0, den = 0.0, tau = 0.0;
  for (const auto& x : xs) {
    num += x.k;
    den += x.a;
    tau += x.tau;
  }
  tau /= static_cast<double>(xs.size());
  const double w0 = std::log(std::max(num, 0.5) / den) / tau;
  return {w0 - 10.0 / tau, w0 + 10.0 / tau, w0};
}

/// Fisher information and score covariance of (xi, omega), summed over the
/// panel's transitions at `params`.
struct QgInformation {
  Eigen::Matrix2d I;
  Eigen::Matrix2d C;
};

inline QgInformation qg_information(const Panel& panel, const QgParams& params, KappaMode mode = KappaMode::gaussian) {
  if (!in_theta(params)) throw domain_error("qg_sandwich_cov: parameters must be interior to Theta");
  const auto xs = qg::transitions(panel);
  qg::require_transitions(xs);
  const double xi = params.xi, omega = params.omega;
  std::optional<Rates> rates;
  if (mode == KappaMode::cumulant) rates.emplace(to_rates(params));
  double T = 0, s_dnu = 0, s_dnu2 = 0, s_zeta = 0;
  double c_xx_extra = 0, c_ww_extra = 0, c_xw_extra = 0;
  for (const auto& x : xs) {
    const double dnu = qg::dlog_nu(omega, x.tau);
    const double nu = std::exp(qg::log_nu(omega, x.tau));
    const double zeta = std::exp(omega * x.tau);
    const double dzeta = x.tau * zeta;
    T += 1.0;
    s_dnu += dnu;
    s_dnu2 += dnu * dnu;
    s_zeta += x.a * dzeta * dzeta / (xi * nu);
    if (rates) {
      const auto kap = unit_cumulants(x.tau, *rates);
      const double k3 = kap[2] / (std::pow(kap[1], 1.5) * std::sqrt(x.a));
      const double k4 = kap[3] / (kap[1] * kap[1] * x.a);
      c_xx_extra += k4 / (4.0 * xi * xi);
      c_ww_extra += 0.25 * dnu * dnu * k4 + dnu * dzeta * std::sqrt(x.a) / std::sqrt(xi * nu * nu * nu) * k3 * nu;
      c_xw_extra += (dnu * k4 + 2.0 * dzeta * std::sqrt(x.a) / std::sqrt(xi * nu) * k3) / (4.0 * xi);
    }
  }
  Eigen::Matrix2d I;
  I(0, 0) = T / (2.0 * xi * xi);
  I(0, 1) = I(1, 0) = s_dnu / (2.0 * xi);
  I(1, 1) = 0.5 * s_dnu2 + s_zeta;
  Eigen::Matrix2d C = I;
  C(0, 0) += c_xx_extra;
  C(1, 1) += c_ww_extra;
  C(0, 1) += c_xw_extra;
  C(1, 0) = C(0, 1);
  return {I, C};
}

/// Sandwich covariance D I^-1 C I^-1 D of (lambda_hat, mu_hat).
inline Eigen::Matrix2d qg_sandwich_cov(const Panel& panel, const QgParams& params,
                                       KappaMode mode = KappaMode::gaussian) {
  const auto info = qg_information(panel, params, mode);
  if (!(info.I.determinant() > 0.0) || !(info.I(0, 0) > 0.0)) {
    throw degenerate_data_error("qg_sandwich_cov: information matrix is singular");
  }
  const Eigen::Matrix2d Iinv = info.I.inverse();
  Eigen::Matrix2d D;
  D << 0.5, 0.5, 0.5, -0.5;
  Eigen::Matrix2d cov = D * Iinv * info.C * Iinv * D;
  cov(1, 0) = cov(0, 1);
  return cov;
}

namespace qg {

inline double bisect_score(const std::vector<Transition>& xs, double lo, double hi, int& it) {
  while (hi - lo > 1e-14 * std::max(1.0, std::abs(lo) + std::abs(hi)) && it < 400) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (profile_derivative(xs, mid) > 0.0 ? lo : hi) = mid;
    ++it;
  }
  return 0.5 * (lo + hi);
}

}  // namespace qg

/// Maximise the profile likelihood over omega and set xi = xi_hat(omega_hat).
/// When the score does not change sign once across the widened bracket (it
/// can rise again towards omega -> -inf when a trajectory dies out between
/// unequal gaps) the best interior maximum is returned and `local_only` set.
inline QgFit qg_fit(const Panel& panel, KappaMode mode = KappaMode::gaussian) {
  const auto xs = qg::transitions(panel);
  qg::require_transitions(xs);
  auto [lo, hi, w0] = qg_search_bracket(panel);
  double half = 0.5 * (hi - lo);
  int widen = 0;
  int it = 0;
  bool local_only = false;
  double omega = 0.0;
  // The profile score is positive below the maximum and negative above it.
  while (!(qg::profile_derivative(xs, lo) > 0.0) || !(qg::profile_derivative(xs, hi) < 0.0)) {
    if (++widen > 5) break;
    half *= 2.0;
    lo = w0 - half;
    hi = w0 + half;
  }
  if (widen <= 5) {
    omega = qg::bisect_score(xs, lo, hi, it);
  } else {
    const int grid = 2000;
    double best = -numeric::inf;
    double prev_w = lo, prev_d = qg::profile_derivative(xs, lo);
    for (int g = 1; g <= grid; ++g) {
      const double w = lo + (hi - lo) * g / grid;
      const double d = qg::profile_derivative(xs, w);
      if (prev_d > 0.0 && d < 0.0) {
        const double root = qg::bisect_score(xs, prev_w, w, it);
        const double value = qg::profile_loglik(xs, root);
        if (value > best) best = value, omega = root;
      }
      prev_w = w, prev_d = d;
    }
    if (best == -numeric::inf) throw convergence_error("qg_fit: profile score has no interior maximum");
    local_only = true;
  }
  const auto state = qg::profile_state(xs, omega);
  const double xi = std::exp(state.log_S - std::log(qg::total_T(xs)));
  QgParams params{omega, xi};
  const bool degenerate = !(xi > 0.0) || !std::isfinite(state.log_S);
  const bool boundary = degenerate || !in_theta(params);
  if (to_rates(params).xi() <= 0.0) throw degenerate_data_error("qg_fit: estimate has lambda = mu = 0");
  QgFit fit{params, to_rates(params), std::nullopt, qg::profile_loglik(xs, omega), it, boundary, degenerate,
            local_only};
  if (!boundary) fit.cov_lambda_mu = qg_sandwich_cov(panel, params, mode);
  return fit;
}

}  // namespace lbdp
