#pragma once

// Univariate saddlepoint machinery for Z(t) | Z(0) = a: CGF with first and
// second derivatives, the explicit quadratic saddlepoint, plain, normalised
// and extinction-conditioned approximations, and the approximate
// log-likelihood built from them.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "lbdp/core.hpp"
#include "lbdp/error.hpp"
#include "lbdp/numeric.hpp"

namespace lbdp {

/// CGF of Z(t) | Z(0) = a and its first two derivatives at x.
struct CgfPoint {
  double x;
  double K;
  double K1;
  double K2;
};

struct SaddlepointSolution {
  double s_tilde;
  double x_tilde;
  CgfPoint cgf;
  std::int64_t target_k;
  std::int64_t a;
  double t;
};

/// Radius R(t) of the generating function (its pole in s). +inf for a pure
/// death process.
inline double radius(double t, const Rates& rates) {
  if (!(t > 0.0)) throw domain_error("radius: t must be positive");
  const auto law = offspring_law(t, rates);
  if (law.beta <= 0.0) return numeric::inf;
  return 1.0 / law.beta;
}

inline double log_radius(double t, const Rates& rates) {
  const auto law = offspring_law(t, rates);
  if (law.beta <= 0.0) return numeric::inf;
  return -std::log(law.beta);
}

namespace detail {

// CGF of the single-ancestor law at s = e^x. Uses the exponentially tilted law,
// which is again modified geometric, so every term is a positive quantity.
inline CgfPoint unit_cgf(double x, const OffspringLaw& law) {
  const double s = std::exp(x);
  const double q = 1.0 - law.beta * s;  // 1 - beta s > 0 inside the region
  const double surv = law.one_minus_alpha * law.one_minus_beta * s;
  const double p = law.alpha * q + surv;  // f(s) (1 - beta s)
  const double K = x == 0.0 ? 0.0 : std::log(p) - std::log(q);
  const double K1 = surv / (p * q);
  const double tilted_alpha = law.alpha * q / p;
  const double K2 = K1 * (tilted_alpha + law.beta * s) / q;
  return {x, K, K1, K2};
}

// First four cumulants of the single-ancestor law (derivatives of the CGF at 0).
inline std::array<double, 4> unit_cumulants(const OffspringLaw& law) {
  const double gamma = law.one_minus_alpha - law.beta;
  const double u = gamma / law.one_minus_beta;
  const double v = law.beta / law.one_minus_beta;
  const double u1 = u * (1.0 - u);
  const double v1 = v * (1.0 + v);
  const double u2 = u1 * (1.0 - 2.0 * u);
  const double v2 = v1 * (1.0 + 2.0 * v);
  const double u3 = u2 * (1.0 - 2.0 * u) - 2.0 * u1 * u1;
  const double v3 = v2 * (1.0 + 2.0 * v) + 2.0 * v1 * v1;
  return {u + v, u1 + v1, u2 + v2, u3 + v3};
}

}  // namespace detail

/// CGF K(x, t; a) = a log f(e^x, t) with K' and K''.
inline CgfPoint cgf_eval(double x, double t, std::int64_t a, const Rates& rates) {
  if (a < 1) throw domain_error("cgf_eval: a must be at least 1");
  if (!std::isfinite(x)) throw domain_error("cgf_eval: x must be finite");
  const auto law = offspring_law(t, rates);
  if (law.beta > 0.0 && !(x < -std::log(law.beta))) {
    throw domain_error("cgf_eval: x outside the convergence set");
  }
  auto c = detail::unit_cgf(x, law);
  const double ad = static_cast<double>(a);
  return {x, ad * c.K, ad * c.K1, ad * c.K2};
}

/// Cumulants kappa_1..kappa_4 of Z(t) given one ancestor.
inline std::array<double, 4> unit_cumulants(double t, const Rates& rates) {
  return detail::unit_cumulants(offspring_law(t, rates));
}

/// Coefficients of the quadratic A s^2 + B s + C whose positive root is the
/// saddlepoint in s. The non-critical set is algebraically identical to the
/// textbook expressions in m(t) but written in expm1(omega t) so nothing
/// cancels near criticality.
struct QuadraticCoefficients {
  double A;
  double B;
  double C;
};

inline QuadraticCoefficients saddlepoint_coefficients(std::int64_t k, double t, std::int64_t a,
                                                      const Rates& rates) {
  const double ratio = static_cast<double>(a) / static_cast<double>(k);
  if (rates.critical()) {
    const double h = 0.5 * rates.xi() * t;
    return {h - h * h, 2.0 * h * h + ratio - 1.0, -h - h * h};
  }
  const double lambda = rates.lambda();
  const double mu = rates.mu();
  const double omega = rates.omega();
  const double e = std::expm1(omega * t);
  const double m = 1.0 + e;
  return {lambda * e * (omega - mu * e), (ratio - 1.0) * m * omega * omega + 2.0 * lambda * mu * e * e,
          -mu * e * (omega + lambda * e)};
}

/// Saddlepoint x~ with K'(x~, t; a) = k, k >= 1.
inline SaddlepointSolution solve_saddlepoint(std::int64_t k, double t, std::int64_t a, const Rates& rates) {
  if (k < 1 || a < 1) throw domain_error("solve_saddlepoint: k >= 1 and a >= 1 required");
  const auto law = offspring_law(t, rates);
  if (law.beta <= 0.0 && k >= a) {
    throw domain_error("solve_saddlepoint: k at or beyond the support maximum of a pure-death process");
  }
  const double R = law.beta > 0.0 ? 1.0 / law.beta : numeric::inf;
  const auto [A, B, C] = saddlepoint_coefficients(k, t, a, rates);
  double disc = B * B - 4.0 * A * C;
  if (disc < 0.0) {
    if (disc < -1e-12 * (B * B + std::abs(4.0 * A * C))) {
      throw convergence_error("solve_saddlepoint: negative discriminant for k=" + std::to_string(k));
    }
    disc = 0.0;
  }
  const double q = -0.5 * (B + std::copysign(std::sqrt(disc), B));
  double s = std::numeric_limits<double>::quiet_NaN();
  for (double cand : {A != 0.0 ? q / A : std::numeric_limits<double>::quiet_NaN(),
                      q != 0.0 ? C / q : std::numeric_limits<double>::quiet_NaN()}) {
    if (cand > 0.0 && cand < R) {
      s = cand;
      break;
    }
  }
  if (!(s > 0.0)) {
    throw convergence_error("solve_saddlepoint: no quadratic root inside (0, R) for k=" + std::to_string(k));
  }

  // Newton polish in x against rounding in the coefficients.
  const double ad = static_cast<double>(a);
  const double kd = static_cast<double>(k);
  const double log_r = law.beta > 0.0 ? -std::log(law.beta) : numeric::inf;
  const double guard = std::isfinite(log_r) ? log_r - 1e-12 * std::max(1.0, std::abs(log_r)) : log_r;
  double x = std::min(std::log(s), guard);
  auto c = detail::unit_cgf(x, law);
  const double tol = 1e-10 * std::max(1.0, kd);
  for (int it = 0; it < 8 && std::abs(ad * c.K1 - kd) > 0.25 * tol; ++it) {
    double step = (ad * c.K1 - kd) / (ad * c.K2);
    double next = x - step;
    for (int h = 0; h < 60 && !(next < guard); ++h) {
      step *= 0.5;
      next = x - step;
    }
    if (!(next < guard) || next == x) break;
    x = next;
    c = detail::unit_cgf(x, law);
  }
  if (!(std::abs(ad * c.K1 - kd) <= tol)) {
    throw convergence_error("solve_saddlepoint: residual above tolerance for k=" + std::to_string(k));
  }
  return {std::exp(x), x, {x, ad * c.K, ad * c.K1, ad * c.K2}, k, a, t};
}

/// log of the first-order saddlepoint approximation; k = 0 is exact.
inline double spa_log_pmf(std::int64_t k, double t, std::int64_t a, const Rates& rates) {
  if (k < 0 || a < 0) throw domain_error("spa_log_pmf: k and a must be non-negative");
  if (a == 0) return k == 0 ? 0.0 : -numeric::inf;
  const auto law = offspring_law(t, rates);
  if (k == 0) return numeric::xlogy(static_cast<double>(a), std::log(law.alpha));
  if (law.beta <= 0.0 && k > a) return -numeric::inf;
  const auto sol = solve_saddlepoint(k, t, a, rates);
  return sol.cgf.K - sol.x_tilde * static_cast<double>(k) - 0.5 * (numeric::log_two_pi + std::log(sol.cgf.K2));
}

inline double spa_pmf(std::int64_t k, double t, std::int64_t a, const Rates& rates) {
  return std::exp(spa_log_pmf(k, t, a, rates));
}

/// log sum_{j >= 1} p~_j over the Chernoff truncation range.
inline double spa_log_normalizer(double t, std::int64_t a, const Rates& rates) {
  const auto kmax = truncation_point(t, a, rates);
  numeric::LogSumExp acc;
  for (std::int64_t j = 1; j <= kmax; ++j) acc.add(spa_log_pmf(j, t, a, rates));
  return acc.value();
}

/// Normalised saddlepoint approximation with a precomputed normaliser.
inline double spa_pmf_normalized(std::int64_t k, double t, std::int64_t a, const Rates& rates,
                                 double log_normalizer) {
  const auto law = offspring_law(t, rates);
  const double log_p0 = numeric::xlogy(static_cast<double>(a), std::log(law.alpha));
  if (k == 0) return std::exp(log_p0);
  const double log_one_minus_p0 = std::log(-std::expm1(log_p0));
  return std::exp(log_one_minus_p0 + spa_log_pmf(k, t, a, rates) - log_normalizer);
}

inline double spa_pmf_normalized(std::int64_t k, double t, std::int64_t a, const Rates& rates) {
  if (k == 0) return std::exp(numeric::xlogy(static_cast<double>(a), std::log(offspring_law(t, rates).alpha)));
  return spa_pmf_normalized(k, t, a, rates, spa_log_normalizer(t, a, rates));
}

namespace detail {

struct ConditionalCgf {
  double Kc1;
  double Kc2;
  double log_one_minus_rho;  // log(1 - p0 / M(x))
  CgfPoint plain;
};

// CGF of Z(t) given Z(t) > 0, in terms of the plain CGF: with
// rho = p0 / M(x) and w = 1 / (1 - rho), Kc' = w K' and
// Kc'' = w K'' - w^2 rho K'^2.
inline ConditionalCgf conditional_cgf(double x, const OffspringLaw& law, double ad, double log_p0) {
  auto u = unit_cgf(x, law);
  const CgfPoint plain{x, ad * u.K, ad * u.K1, ad * u.K2};
  const double log_rho = log_p0 - plain.K;
  const double one_minus_rho = -std::expm1(log_rho);
  const double rho = std::exp(log_rho);
  const double w = 1.0 / one_minus_rho;
  return {w * plain.K1, w * plain.K2 - w * w * rho * plain.K1 * plain.K1, std::log(one_minus_rho), plain};
}

}  // namespace detail

/// Saddlepoint approximation applied to the CGF conditioned on Z(t) > 0,
/// rescaled by 1 - p0 so it approximates p_k(t; a). The conditional law has
/// its support minimum at k = 1, where no saddlepoint exists; that single
/// probability is taken from its closed form a alpha^(a-1) (1-alpha)(1-beta).
inline double spa_conditional_log_pmf(std::int64_t k, double t, std::int64_t a, const Rates& rates) {
  if (k < 1 || a < 1) throw domain_error("spa_conditional_log_pmf: k >= 1 and a >= 1 required");
  const auto law = offspring_law(t, rates);
  const double ad = static_cast<double>(a);
  const double log_alpha = std::log(law.alpha);
  if (k == 1) {
    return std::log(ad) + numeric::xlogy(ad - 1.0, log_alpha) + std::log(law.one_minus_alpha) +
           std::log(law.one_minus_beta);
  }
  if (law.alpha <= 0.0) return spa_log_pmf(k, t, a, rates);  // no extinction mass: nothing to condition on
  if (law.beta <= 0.0 && k > a) return -numeric::inf;
  const double kd = static_cast<double>(k);
  const double log_p0 = ad * log_alpha;

  const auto plain = solve_saddlepoint(k, t, a, rates);
  double hi = plain.x_tilde;  // Kc' >= K' so the conditional root lies below
  auto c_hi = detail::conditional_cgf(hi, law, ad, log_p0);
  if (c_hi.Kc1 - kd <= 0.0) {
    // rho underflowed: conditioning is numerically invisible here.
    return spa_log_pmf(k, t, a, rates);
  }
  double offset = 5.0;
  double lo = hi - offset;
  auto c_lo = detail::conditional_cgf(lo, law, ad, log_p0);
  int widen = 0;
  while (c_lo.Kc1 - kd >= 0.0) {
    if (++widen > 12) {
      throw convergence_error("spa_conditional: cannot bracket the conditional saddlepoint for k=" +
                              std::to_string(k) + ", a=" + std::to_string(a));
    }
    offset *= 2.0;
    lo = hi - offset;
    c_lo = detail::conditional_cgf(lo, law, ad, log_p0);
  }

  // Newton from the plain saddlepoint, bisection whenever a step leaves the bracket.
  const double tol = 1e-10 * std::max(1.0, kd);
  double x = hi;
  auto c = c_hi;
  for (int it = 0; it < 200; ++it) {
    const double r = c.Kc1 - kd;
    if (std::abs(r) <= tol || hi - lo <= 1e-15 * std::max(1.0, std::abs(x))) break;
    if (r > 0.0) hi = x; else lo = x;
    double next = x - r / c.Kc2;
    if (!(c.Kc2 > 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
    c = detail::conditional_cgf(x, law, ad, log_p0);
  }
  if (!(std::abs(c.Kc1 - kd) <= 1e-6 * std::max(1.0, kd)) || !(c.Kc2 > 0.0)) {
    throw convergence_error("spa_conditional: Newton/bisection did not converge for k=" + std::to_string(k));
  }
  return c.plain.K + c.log_one_minus_rho - x * kd - 0.5 * (numeric::log_two_pi + std::log(c.Kc2));
}

inline double spa_pmf_conditional(std::int64_t k, double t, std::int64_t a, const Rates& rates) {
  return std::exp(spa_conditional_log_pmf(k, t, a, rates));
}

enum class SpaVariant { plain, conditional };

/// Saddlepoint log-likelihood; transitions into 0 use the exact alpha^a.
inline double spa_loglik(const Panel& panel, const Rates& rates, SpaVariant variant = SpaVariant::plain) {
  double total = 0.0;
  for (const auto& tr : panel.trajectories()) {
    const auto counts = tr.counts();
    for (std::size_t j = 1; j < tr.size(); ++j) {
      const auto a = counts[j - 1];
      const auto k = counts[j];
      if (a == 0) continue;
      const double t = tr.gap(j);
      if (k == 0 || variant == SpaVariant::plain) {
        total += spa_log_pmf(k, t, a, rates);
      } else {
        total += spa_conditional_log_pmf(k, t, a, rates);
      }
    }
  }
  return total;
}

}  // namespace lbdp
