#pragma once

// Joint saddlepoint approximation for the vector (Z(t_1), ..., Z(t_N)) given
// Z(t_0) = a. The joint CGF is a nested composition of single-interval CGFs;
// its gradient and Hessian are propagated level by level with the chain rule.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lbdp/core.hpp"
#include "lbdp/error.hpp"
#include "lbdp/numeric.hpp"
#include "lbdp/saddlepoint.hpp"

namespace lbdp {

struct MvCgf {
  double K;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

struct MvSaddle {
  Eigen::VectorXd x_tilde;
  double K;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  double residual_norm;
  int iterations;
};

enum class MvStart { transition, zero };

struct MvSolveOptions {
  MvStart start = MvStart::transition;
  int max_iterations = 100;
  int max_halvings = 30;
};

namespace detail {

// Gaps tau_j = t_j - t_{j-1} from t_0..t_N.
inline std::vector<double> gaps(std::span<const double> times) {
  if (times.size() < 2) throw domain_error("need observation times t_0 < t_1 < ...");
  std::vector<double> tau(times.size() - 1);
  for (std::size_t j = 1; j < times.size(); ++j) {
    tau[j - 1] = times[j] - times[j - 1];
    if (!(tau[j - 1] > 0.0)) throw domain_error("observation times must be strictly increasing");
  }
  return tau;
}

inline std::vector<OffspringLaw> laws(const std::vector<double>& tau, const Rates& rates) {
  std::vector<OffspringLaw> out;
  out.reserve(tau.size());
  for (double t : tau) out.push_back(offspring_law(t, rates));
  return out;
}

inline MvCgf mv_cgf_impl(const Eigen::VectorXd& x, const std::vector<OffspringLaw>& law, double a) {
  const auto n = x.size();
  double L = 0.0;
  Eigen::VectorXd G = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd v(n);
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    const double z = x[j] + L;
    const auto& lw = law[static_cast<std::size_t>(j)];
    if (!std::isfinite(z) || (lw.beta > 0.0 && !(z < -std::log(lw.beta)))) {
      throw domain_error("mv_cgf: argument outside the convergence set at level " + std::to_string(j + 1));
    }
    const auto u = unit_cgf(z, lw);
    v = G;
    v[j] += 1.0;
    H = u.K2 * (v * v.transpose()) + u.K1 * H;
    G = u.K1 * v;
    L = u.K;
  }
  return {a * L, a * G, a * H};
}

}  // namespace detail

/// g(s, t; a) = f(s_1 f(s_2 ... f(s_N, tau_N) ..., tau_2), tau_1)^a, with
/// `times` = t_0..t_N.
inline double joint_pgf(std::span<const double> s, std::span<const double> times, std::int64_t a, const Rates& rates) {
  const auto tau = detail::gaps(times);
  if (s.size() != tau.size()) throw domain_error("joint_pgf: s and times disagree in length");
  double inner = 1.0;
  for (std::size_t j = tau.size(); j-- > 0;) {
    const double arg = s[j] * inner;
    if (!std::isfinite(arg)) throw domain_error("joint_pgf: non-finite argument at level " + std::to_string(j + 1));
    const auto law = offspring_law(tau[j], rates);
    const double q = 1.0 - law.beta * arg;
    if (!(q > 0.0)) throw domain_error("joint_pgf: outside the convergence region at level " + std::to_string(j + 1));
    inner = law.alpha + law.one_minus_alpha * law.one_minus_beta * arg / q;
  }
  return std::pow(inner, static_cast<double>(a));
}

/// Joint CGF K(x) = a log g(e^x) with gradient and Hessian.
inline MvCgf mv_cgf(const Eigen::VectorXd& x, std::span<const double> times, std::int64_t a, const Rates& rates) {
  if (a < 1) throw domain_error("mv_cgf: a must be at least 1");
  const auto tau = detail::gaps(times);
  if (static_cast<std::size_t>(x.size()) != tau.size()) throw domain_error("mv_cgf: x and times disagree in length");
  return detail::mv_cgf_impl(x, detail::laws(tau, rates), static_cast<double>(a));
}

/// Solve K'(x) = k by damped Newton with Cholesky steps.
inline MvSaddle mv_solve(std::span<const std::int64_t> k, std::span<const double> times, std::int64_t a,
                         const Rates& rates, const MvSolveOptions& opt = {}) {
  const auto tau = detail::gaps(times);
  const auto n = static_cast<Eigen::Index>(tau.size());
  if (k.size() != tau.size()) throw domain_error("mv_solve: k and times disagree in length");
  if (a < 1) throw domain_error("mv_solve: a must be at least 1");
  Eigen::VectorXd kv(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (k[j] < 1) throw domain_error("mv_solve: counts must be positive (factor trailing zeros first)");
    kv[j] = static_cast<double>(k[j]);
  }
  const auto law = detail::laws(tau, rates);
  const double ad = static_cast<double>(a);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (opt.start == MvStart::transition) {
    // Per-interval saddlepoints z_j (k_{j-1} -> k_j), mapped back through x_j = z_j - L_{j+1}.
    try {
      double L = 0.0;
      for (Eigen::Index j = n - 1; j >= 0; --j) {
        const std::int64_t prev = j == 0 ? a : k[j - 1];
        const auto sol = solve_saddlepoint(k[j], tau[j], prev, rates);
        x[j] = sol.x_tilde - L;
        L = detail::unit_cgf(sol.x_tilde, law[j]).K;
      }
    } catch (const error&) {
      x.setZero();
    }
  }

  const double tol = 1e-8 * std::max(1.0, kv.cwiseAbs().maxCoeff());
  auto c = detail::mv_cgf_impl(x, law, ad);
  Eigen::VectorXd r = c.grad - kv;
  std::ostringstream trace;
  int it = 0;
  for (; r.lpNorm<Eigen::Infinity>() > tol; ++it) {
    if (it >= opt.max_iterations) {
      throw convergence_error("mv_solve: Newton budget exhausted; residual trace:" + trace.str());
    }
    Eigen::LLT<Eigen::MatrixXd> llt(c.hess);
    if (llt.info() != Eigen::Success) throw convergence_error("mv_solve: Hessian not positive definite");
    const Eigen::VectorXd step = llt.solve(-r);
    const double norm0 = r.norm();
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      const Eigen::VectorXd trial = x + t * step;
      try {
        auto ct = detail::mv_cgf_impl(trial, law, ad);
        Eigen::VectorXd rt = ct.grad - kv;
        if (rt.allFinite() && rt.norm() < norm0) {
          x = trial;
          c = std::move(ct);
          r = std::move(rt);
          accepted = true;
          break;
        }
      } catch (const domain_error&) {
        // outside the convergence set: shorten the step
      }
    }
    trace << ' ' << r.norm();
    if (!accepted) throw convergence_error("mv_solve: line search failed; residual trace:" + trace.str());
  }
  return {x, c.K, c.grad, c.hess, r.lpNorm<Eigen::Infinity>(), it};
}

/// log of the joint saddlepoint approximation. A run of trailing zeros is
/// factored out exactly as alpha(tau_{i+1})^{k_i}.
inline double mv_spa_log_pmf(std::span<const std::int64_t> k, std::span<const double> times, std::int64_t a,
                             const Rates& rates, const MvSolveOptions& opt = {}) {
  const auto tau = detail::gaps(times);
  if (k.size() != tau.size()) throw domain_error("mv_spa_pmf: k and times disagree in length");
  if (a < 1) throw domain_error("mv_spa_pmf: a must be at least 1");
  std::size_t positive = 0;
  for (std::size_t j = 0; j < k.size(); ++j) {
    if (k[j] < 0) throw domain_error("mv_spa_pmf: negative count");
    if (k[j] > 0) {
      if (positive != j) throw domain_error("mv_spa_pmf: count leaves the absorbing state 0");
      positive = j + 1;
    }
  }
  if (positive == 0) return numeric::xlogy(static_cast<double>(a), std::log(offspring_law(tau[0], rates).alpha));
  if (rates.lambda() == 0.0) {
    std::int64_t prev = a;
    for (std::size_t j = 0; j < positive; ++j) {
      if (k[j] > prev) return -numeric::inf;
      prev = k[j];
    }
  }
  const auto sol = mv_solve(k.first(positive), times.first(positive + 1), a, rates, opt);
  Eigen::LLT<Eigen::MatrixXd> llt(sol.hess);
  if (llt.info() != Eigen::Success) throw convergence_error("mv_spa_pmf: Hessian not positive definite");
  const Eigen::MatrixXd Lmat = llt.matrixL();
  const double log_det = 2.0 * Lmat.diagonal().array().log().sum();
  double xk = 0.0;
  for (std::size_t j = 0; j < positive; ++j) xk += sol.x_tilde[static_cast<Eigen::Index>(j)] * static_cast<double>(k[j]);
  double out = sol.K - xk - 0.5 * (static_cast<double>(positive) * numeric::log_two_pi + log_det);
  if (positive < k.size()) {
    out += numeric::xlogy(static_cast<double>(k[positive - 1]), std::log(offspring_law(tau[positive], rates).alpha));
  }
  return out;
}

inline double mv_spa_pmf(std::span<const std::int64_t> k, std::span<const double> times, std::int64_t a,
                         const Rates& rates, const MvSolveOptions& opt = {}) {
  return std::exp(mv_spa_log_pmf(k, times, a, rates, opt));
}

/// Sum over trajectories of the joint saddlepoint log-probability.
inline double mv_spa_loglik(const Panel& panel, const Rates& rates, const MvSolveOptions& opt = {}) {
  double total = 0.0;
  for (const auto& tr : panel.trajectories()) {
    const auto c = tr.counts();
    total += mv_spa_log_pmf(c.subspan(1), tr.times(), c[0], rates, opt);
  }
  return total;
}

}  // namespace lbdp
