#pragma once

// One entry point for every estimator: GW, quasi-Gaussian, saddlepoint MLE
// (plain and conditional), exact MLE and the joint-saddlepoint MLE.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lbdp/core.hpp"
#include "lbdp/error.hpp"
#include "lbdp/gw.hpp"
#include "lbdp/mv_saddlepoint.hpp"
#include "lbdp/optimize.hpp"
#include "lbdp/quasi_gaussian.hpp"
#include "lbdp/rng.hpp"
#include "lbdp/saddlepoint.hpp"

namespace lbdp {

enum class Method { gw, qg, spmle, spmle_adjusted, mle, mv_spmle };

inline constexpr Method all_methods[] = {Method::gw, Method::qg, Method::spmle, Method::spmle_adjusted, Method::mle,
                                         Method::mv_spmle};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::gw: return "gw";
    case Method::qg: return "qg";
    case Method::spmle: return "spmle";
    case Method::spmle_adjusted: return "spmle-adjusted";
    case Method::mle: return "mle";
    case Method::mv_spmle: return "mv-spmle";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (auto m : all_methods) {
    if (s == method_name(m)) return m;
  }
  if (s == "spmle_adjusted") return Method::spmle_adjusted;
  if (s == "mv_spmle") return Method::mv_spmle;
  throw parse_error("unknown method '" + std::string(s) + "'");
}

enum class Parametrization { log_rates, omega_log_xi };

struct FitOptions {
  double tolerance = 1e-9;
  int restarts = 3;
  int max_iterations = 4000;
  std::uint64_t seed = 0;
  std::int64_t mle_count_cap = 100'000;
  Parametrization parametrization = Parametrization::log_rates;
  bool standard_errors = true;
  KappaMode kappa = KappaMode::gaussian;
};

struct EstimateResult {
  Method method;
  Rates rates;
  double omega_hat;
  std::optional<Eigen::Matrix2d> cov;
  std::optional<double> se_omega;
  std::optional<double> loglik;
  bool converged;
  int n_obj_evals;
  double wall_time;  // seconds
  std::map<std::string, std::string> diagnostics;

  [[nodiscard]] std::optional<double> se_lambda() const {
    if (!cov) return std::nullopt;
    return std::sqrt((*cov)(0, 0));
  }
  [[nodiscard]] std::optional<double> se_mu() const {
    if (!cov) return std::nullopt;
    return std::sqrt((*cov)(1, 1));
  }
};

namespace detail {

using Objective = std::function<double(const Rates&)>;

inline Objective method_objective(const Panel& panel, Method method, const FitOptions& opt) {
  switch (method) {
    case Method::spmle: return [&panel](const Rates& r) { return spa_loglik(panel, r, SpaVariant::plain); };
    case Method::spmle_adjusted:
      return [&panel](const Rates& r) { return spa_loglik(panel, r, SpaVariant::conditional); };
    case Method::mle:
      if (panel.max_count() > opt.mle_count_cap) {
        throw resource_cap_error("mle: largest count " + std::to_string(panel.max_count()) + " exceeds the cap " +
                                 std::to_string(opt.mle_count_cap));
      }
      return [&panel](const Rates& r) { return exact_loglik(panel, r); };
    case Method::mv_spmle: return [&panel](const Rates& r) { return mv_spa_loglik(panel, r); };
    default: throw std::logic_error("method has no likelihood objective");
  }
}

// Rates from an unconstrained parameter vector; nullopt outside the model.
inline std::optional<Rates> decode(const Eigen::VectorXd& th, Parametrization p) {
  if (!th.allFinite()) return std::nullopt;
  double lambda, mu;
  if (p == Parametrization::log_rates) {
    lambda = std::exp(th[0]);
    mu = std::exp(th[1]);
  } else {
    const double xi = std::exp(th[1]);
    lambda = 0.5 * (xi + th[0]);
    mu = 0.5 * (xi - th[0]);
    if (!(lambda > 0.0) || !(mu > 0.0)) return std::nullopt;
  }
  if (!std::isfinite(lambda) || !std::isfinite(mu) || !(lambda + mu > 0.0)) return std::nullopt;
  return Rates(lambda, mu);
}

inline Eigen::VectorXd encode(const Rates& r, Parametrization p) {
  Eigen::VectorXd th(2);
  if (p == Parametrization::log_rates) {
    th << std::log(r.lambda()), std::log(r.mu());
  } else {
    th << r.omega(), std::log(r.xi());
  }
  return th;
}

// Starting rates: the quasi-Gaussian fit when it is interior, else a start
// built from the crude growth rate.
inline Rates starting_rates(const Panel& panel, std::map<std::string, std::string>& diag) {
  try {
    const auto fit = qg_fit(panel);
    const double floor = 0.05 * fit.rates.xi();
    diag["start"] = "qg";
    return Rates(std::max(fit.rates.lambda(), floor), std::max(fit.rates.mu(), floor));
  } catch (const error&) {
  }
  const auto br = qg_search_bracket(panel);
  const double xi = 2.0 * std::abs(br.omega_init) + 1.0;
  diag["start"] = "growth-rate";
  return Rates(0.5 * (xi + br.omega_init), 0.5 * (xi - br.omega_init));
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline EstimateResult fit_gw(const Panel& panel, std::chrono::steady_clock::time_point t0) {
  const auto g = gw_estimate(panel);
  EstimateResult res{Method::gw, g.rates, g.rates.omega(), std::nullopt, g.se_omega, std::nullopt, true, 0, 0.0, {}};
  Eigen::Matrix2d cov;
  cov << g.se_lambda * g.se_lambda, g.se_lambda * g.se_mu, g.se_lambda * g.se_mu, g.se_mu * g.se_mu;
  res.cov = cov;
  res.diagnostics["m_hat"] = std::to_string(g.moments.m_hat);
  res.diagnostics["sigma2_hat"] = std::to_string(g.moments.sigma2_hat);
  res.diagnostics["omega_log_m"] = std::to_string(g.omega_hat);
  res.diagnostics["regime"] = g.regime == GwRegime::supercritical_ok ? "supercritical_ok" : "near_critical_warning";
  if (g.clamped) res.diagnostics["clamped"] = "negative rate estimate set to 0";
  res.wall_time = seconds_since(t0);
  return res;
}

inline EstimateResult fit_qg(const Panel& panel, const FitOptions& opt, std::chrono::steady_clock::time_point t0) {
  const auto q = qg_fit(panel, opt.kappa);
  EstimateResult res{Method::qg, q.rates, q.rates.omega(), q.cov_lambda_mu, std::nullopt, q.loglik, true, 0, 0.0, {}};
  if (q.cov_lambda_mu) {
    const auto& c = *q.cov_lambda_mu;
    res.se_omega = std::sqrt(std::max(0.0, c(0, 0) + c(1, 1) - 2.0 * c(0, 1)));
  }
  res.diagnostics["xi_hat"] = std::to_string(q.params.xi);
  res.diagnostics["profile_iterations"] = std::to_string(q.profile_iterations);
  if (q.boundary) res.diagnostics["boundary"] = "estimate on the boundary of the parameter space; covariance omitted";
  if (q.degenerate) res.diagnostics["degenerate"] = "xi_hat = 0 (exact mean-curve fit)";
  if (q.local_only) res.diagnostics["profile"] = "multiple stationary points; best interior maximum returned";
  res.wall_time = seconds_since(t0);
  return res;
}

}  // namespace detail

/// Estimate (lambda, mu) from a panel with the chosen method.
inline EstimateResult fit(const Panel& panel, Method method, const FitOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  if (method == Method::gw) return detail::fit_gw(panel, t0);
  if (method == Method::qg) return detail::fit_qg(panel, opt, t0);

  const auto objective = detail::method_objective(panel, method, opt);
  std::map<std::string, std::string> diag;
  const Rates start = detail::starting_rates(panel, diag);
  const auto param = opt.parametrization;
  std::function<double(const Eigen::VectorXd&)> neg = [&](const Eigen::VectorXd& th) {
    const auto r = detail::decode(th, param);
    if (!r) return objective_penalty;
    return -objective(*r);
  };
  MinimizeOptions mo;
  mo.tolerance = opt.tolerance;
  mo.restarts = opt.restarts;
  mo.max_iterations = opt.max_iterations;
  mo.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(method));
  const auto best = minimize(neg, detail::encode(start, param), mo);
  const auto rates = detail::decode(best.x, param);
  if (!rates || !(best.value < objective_penalty)) {
    throw convergence_error(std::string(method_name(method)) + ": no finite objective value found");
  }
  EstimateResult res{method, *rates, rates->omega(), std::nullopt, std::nullopt, -best.value, best.converged,
                     best.evaluations, 0.0, diag};
  if (opt.standard_errors && rates->lambda() > 0.0 && rates->mu() > 0.0) {
    std::function<double(const Eigen::VectorXd&)> neg_log = [&](const Eigen::VectorXd& th) {
      const auto r = detail::decode(th, Parametrization::log_rates);
      if (!r) return objective_penalty;
      return -objective(*r);
    };
    Eigen::Vector2d th(std::log(rates->lambda()), std::log(rates->mu()));
    try {
      res.cov = numeric_hessian_se(neg_log, th);
    } catch (const error&) {
      res.cov.reset();
    }
    if (res.cov) {
      const auto& c = *res.cov;
      res.se_omega = std::sqrt(std::max(0.0, c(0, 0) + c(1, 1) - 2.0 * c(0, 1)));
    } else {
      res.diagnostics["hessian"] = "observed information not positive definite; standard errors omitted";
    }
  }
  res.diagnostics["information"] = "observed";
  res.diagnostics["restarts"] = std::to_string(opt.restarts);
  res.wall_time = detail::seconds_since(t0);
  return res;
}

struct CompareRow {
  Method method;
  std::optional<EstimateResult> result;
  std::string error;
};

/// Run several methods on one panel; a failing method yields a row with its
/// error message instead of aborting the others.
inline std::vector<CompareRow> compare(const Panel& panel, const std::vector<Method>& methods,
                                       const FitOptions& opt = {}) {
  std::vector<CompareRow> rows;
  for (auto m : methods) {
    try {
      rows.push_back({m, fit(panel, m, opt), {}});
    } catch (const std::exception& e) {
      rows.push_back({m, std::nullopt, e.what()});
    }
  }
  return rows;
}

}  // namespace lbdp
