#pragma once

// Derivative-free minimisation (GSL Nelder-Mead simplex with seeded
// restarts) and a central-difference Hessian.

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>

#include "lbdp/error.hpp"
#include "lbdp/rng.hpp"

namespace lbdp {

// Stand-in value for points where the objective is undefined.
inline constexpr double objective_penalty = 1e300;

struct MinimizeOptions {
  double tolerance = 1e-9;  // simplex size at convergence
  int restarts = 3;
  int max_iterations = 4000;  // per run
  double initial_step = 0.1;
  std::uint64_t seed = 0;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value;
  bool converged;
  int evaluations;
  int runs;
};

namespace detail {

struct GslObjective {
  const std::function<double(const Eigen::VectorXd&)>* f;
  int* evaluations;
};

inline double gsl_trampoline(const gsl_vector* v, void* params) {
  auto* p = static_cast<GslObjective*>(params);
  Eigen::VectorXd x(v->size);
  for (std::size_t i = 0; i < v->size; ++i) x[static_cast<Eigen::Index>(i)] = gsl_vector_get(v, i);
  ++*p->evaluations;
  double y;
  try {
    y = (*p->f)(x);
  } catch (const error&) {
    return objective_penalty;
  }
  return std::isfinite(y) ? y : objective_penalty;
}

struct RunResult {
  Eigen::VectorXd x;
  double value;
  bool converged;
};

inline RunResult simplex_run(GslObjective& obj, const Eigen::VectorXd& x0, const Eigen::VectorXd& steps,
                             const MinimizeOptions& opt) {
  const auto n = static_cast<std::size_t>(x0.size());
  gsl_multimin_function fn{&gsl_trampoline, n, &obj};
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(n), &gsl_vector_free);
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> ss(gsl_vector_alloc(n), &gsl_vector_free);
  for (std::size_t i = 0; i < n; ++i) {
    gsl_vector_set(x.get(), i, x0[static_cast<Eigen::Index>(i)]);
    gsl_vector_set(ss.get(), i, steps[static_cast<Eigen::Index>(i)]);
  }
  std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> s(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n), &gsl_multimin_fminimizer_free);
  if (gsl_multimin_fminimizer_set(s.get(), &fn, x.get(), ss.get()) != GSL_SUCCESS) {
    return {x0, objective_penalty, false};
  }
  bool converged = false;
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (gsl_multimin_fminimizer_iterate(s.get()) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s.get()), opt.tolerance) == GSL_SUCCESS) {
      converged = true;
      break;
    }
  }
  Eigen::VectorXd best(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) best[static_cast<Eigen::Index>(i)] = gsl_vector_get(s->x, i);
  return {best, s->fval, converged};
}

}  // namespace detail

/// Minimise f from x0; each restart begins at the incumbent best point
/// shifted by a seeded uniform perturbation of size initial_step.
inline MinimizeResult minimize(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                               const MinimizeOptions& opt = {}) {
  gsl_set_error_handler_off();
  int evaluations = 0;
  detail::GslObjective obj{&f, &evaluations};
  const Eigen::VectorXd steps = Eigen::VectorXd::Constant(x0.size(), opt.initial_step);
  auto best = detail::simplex_run(obj, x0, steps, opt);
  std::mt19937_64 eng(opt.seed);
  for (int r = 0; r < opt.restarts; ++r) {
    Eigen::VectorXd start = best.x;
    for (Eigen::Index i = 0; i < start.size(); ++i) start[i] += opt.initial_step * (2.0 * uniform01(eng) - 1.0);
    auto run = detail::simplex_run(obj, start, steps, opt);
    if (run.value < best.value || (run.value == best.value && run.converged && !best.converged)) best = run;
  }
  const bool finite = best.value < objective_penalty;
  return {best.x, best.value, best.converged && finite, evaluations, 1 + opt.restarts};
}

/// Central-difference Hessian with steps eps^(1/4) max(1, |x_i|).
inline Eigen::MatrixXd numeric_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                       const Eigen::VectorXd& x) {
  const auto n = x.size();
  const double base = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  Eigen::VectorXd h(n);
  for (Eigen::Index i = 0; i < n; ++i) h[i] = base * std::max(1.0, std::abs(x[i]));
  auto at = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
    Eigen::VectorXd y = x;
    y[i] += si * h[i];
    y[j] += sj * h[j];
    return f(y);
  };
  const double f0 = f(x);
  Eigen::MatrixXd H(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd yp = x, ym = x;
    yp[i] += h[i];
    ym[i] -= h[i];
    H(i, i) = (f(yp) - 2.0 * f0 + f(ym)) / (h[i] * h[i]);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = (at(i, 1, j, 1) - at(i, 1, j, -1) - at(i, -1, j, 1) + at(i, -1, j, -1)) / (4.0 * h[i] * h[j]);
      H(i, j) = H(j, i) = v;
    }
  }
  return H;
}

/// Covariance of (lambda, mu) from the Hessian of a negative log-likelihood
/// in (log lambda, log mu): J H^-1 J with J = diag(lambda, mu). Empty when H
/// is not positive definite.
inline std::optional<Eigen::Matrix2d> numeric_hessian_se(
    const std::function<double(const Eigen::VectorXd&)>& negative_objective, const Eigen::Vector2d& theta_hat) {
  const Eigen::MatrixXd H = numeric_hessian(negative_objective, theta_hat);
  if (!H.allFinite()) return std::nullopt;
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Eigen::MatrixXd Hinv = llt.solve(Eigen::MatrixXd::Identity(2, 2));
  Eigen::Matrix2d J = Eigen::Vector2d(std::exp(theta_hat[0]), std::exp(theta_hat[1])).asDiagonal();
  Eigen::Matrix2d cov = J * Hinv * J;
  cov(1, 0) = cov(0, 1);
  return cov;
}

}  // namespace lbdp
