#pragma once

// Exact laws of the linear birth-and-death process (LBDP): generating
// function, transition pmf in log space, conditional moments, extinction.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lbdp/error.hpp"
#include "lbdp/numeric.hpp"

namespace lbdp {

// |omega| <= critical_tolerance * xi selects the lambda == mu closed forms.
inline constexpr double critical_tolerance = 1e-8;

/// Per-capita birth and death rates of an LBDP.
class Rates {
 public:
  Rates(double lambda, double mu) : lambda_(lambda), mu_(mu) {
    if (!std::isfinite(lambda) || !std::isfinite(mu) || lambda < 0.0 || mu < 0.0) {
      throw domain_error("rates must be finite and non-negative");
    }
    if (lambda + mu <= 0.0) throw domain_error("lambda + mu must be positive");
  }

  [[nodiscard]] double lambda() const { return lambda_; }
  [[nodiscard]] double mu() const { return mu_; }
  /// Malthusian growth rate.
  [[nodiscard]] double omega() const { return lambda_ - mu_; }
  /// Total per-capita event rate.
  [[nodiscard]] double xi() const { return lambda_ + mu_; }
  [[nodiscard]] bool critical() const { return std::abs(omega()) <= critical_tolerance * xi(); }

  friend bool operator==(const Rates&, const Rates&) = default;

 private:
  double lambda_;
  double mu_;
};

/// One discretely observed path: strictly increasing times with aligned counts.
class Trajectory {
 public:
  Trajectory(std::vector<double> times, std::vector<std::int64_t> counts)
      : times_(std::move(times)), counts_(std::move(counts)) {
    if (times_.size() != counts_.size()) throw domain_error("times and counts differ in length");
    if (times_.size() < 2) throw domain_error("a trajectory needs at least two observations");
    for (std::size_t j = 0; j < times_.size(); ++j) {
      if (!std::isfinite(times_[j])) throw domain_error("observation times must be finite");
      if (j > 0 && !(times_[j] > times_[j - 1])) {
        throw domain_error("observation times must be strictly increasing");
      }
      if (counts_[j] < 0) throw domain_error("counts must be non-negative");
      if (j > 0 && counts_[j - 1] == 0 && counts_[j] != 0) {
        throw domain_error("count leaves the absorbing state 0 at observation " + std::to_string(j));
      }
    }
    if (counts_.front() < 1) throw domain_error("initial count must be at least 1");
  }

  [[nodiscard]] std::span<const double> times() const { return times_; }
  [[nodiscard]] std::span<const std::int64_t> counts() const { return counts_; }
  [[nodiscard]] std::size_t size() const { return times_.size(); }
  /// Number of transitions N (observations minus one).
  [[nodiscard]] std::size_t transitions() const { return times_.size() - 1; }
  [[nodiscard]] double gap(std::size_t j) const { return times_[j] - times_[j - 1]; }
  /// Transitions up to and including the first one that lands on 0.
  [[nodiscard]] std::size_t informative_transitions() const {
    for (std::size_t j = 1; j < counts_.size(); ++j) {
      if (counts_[j] == 0) return j;
    }
    return transitions();
  }

 private:
  std::vector<double> times_;
  std::vector<std::int64_t> counts_;
};

/// M >= 1 independent trajectories.
class Panel {
 public:
  explicit Panel(std::vector<Trajectory> trajectories) : trajectories_(std::move(trajectories)) {
    if (trajectories_.empty()) throw domain_error("a panel needs at least one trajectory");
  }

  [[nodiscard]] std::span<const Trajectory> trajectories() const { return trajectories_; }
  [[nodiscard]] std::size_t size() const { return trajectories_.size(); }
  [[nodiscard]] const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }

  /// Common inter-observation gap if every gap in every trajectory agrees with
  /// the first to relative `tolerance`.
  [[nodiscard]] std::optional<double> common_spacing(double tolerance = 1e-9) const {
    const double ref = trajectories_.front().gap(1);
    for (const auto& tr : trajectories_) {
      for (std::size_t j = 1; j < tr.size(); ++j) {
        if (std::abs(tr.gap(j) - ref) > tolerance * std::abs(ref)) return std::nullopt;
      }
    }
    return ref;
  }

  [[nodiscard]] bool equal_spacing(double tolerance = 1e-9) const {
    return common_spacing(tolerance).has_value();
  }

  [[nodiscard]] std::int64_t max_count() const {
    std::int64_t m = 0;
    for (const auto& tr : trajectories_) {
      for (auto k : tr.counts()) m = std::max(m, k);
    }
    return m;
  }

 private:
  std::vector<Trajectory> trajectories_;
};

/// Parameters of the single-ancestor law at time t: P(Z=0) = alpha and
/// P(Z=k) = (1-alpha)(1-beta) beta^(k-1) for k >= 1. The complements are
/// carried separately so they never suffer cancellation.
struct OffspringLaw {
  double alpha;
  double beta;
  double one_minus_alpha;
  double one_minus_beta;
};

/// Modified-geometric parameters for elapsed time t > 0.
inline OffspringLaw offspring_law(double t, const Rates& rates) {
  if (!(t > 0.0) || !std::isfinite(t)) throw domain_error("elapsed time must be positive and finite");
  const double lambda = rates.lambda();
  const double mu = rates.mu();
  const double omega = rates.omega();
  if (rates.critical()) {
    const double h = 0.5 * rates.xi() * t;
    const double p = h / (1.0 + h);
    const double q = 1.0 / (1.0 + h);
    return {p, p, q, q};
  }
  const double wt = omega * t;
  if (wt > 0.0) {
    // Scaled by e^{-omega t} so large growth cannot overflow.
    const double f = -std::expm1(-wt);
    const double q = std::exp(-wt);
    const double d = lambda * f + omega * q;
    return {mu * f / d, lambda * f / d, omega / d, omega * q / d};
  }
  const double e = std::expm1(wt);
  const double d = lambda * e + omega;
  return {mu * e / d, lambda * e / d, omega * (1.0 + e) / d, omega / d};
}

/// Probability generating function f(s, t) of Z(t) given Z(0) = 1.
inline double pgf(double s, double t, const Rates& rates) {
  if (!std::isfinite(s) || !std::isfinite(t) || t < 0.0) throw domain_error("pgf: invalid s or t");
  if (t == 0.0) return s;
  if (s == 1.0) return 1.0;
  const auto law = offspring_law(t, rates);
  const double denom = 1.0 - law.beta * s;
  if (!(denom > 0.0)) throw domain_error("pgf: s outside the convergence region");
  return law.alpha + law.one_minus_alpha * law.one_minus_beta * s / denom;
}

/// (alpha(t), beta(t)) of the modified geometric single-ancestor law.
inline std::pair<double, double> alpha_beta(double t, const Rates& rates) {
  if (!(t > 0.0)) throw domain_error("alpha_beta: t must be positive");
  const auto law = offspring_law(t, rates);
  return {law.alpha, law.beta};
}

/// log P{Z(t) = k | Z(0) = a}. a = 0 is the point mass at 0.
inline double log_transition_prob(std::int64_t k, double t, std::int64_t a, const Rates& rates) {
  if (k < 0 || a < 0) throw domain_error("log_transition_prob: k and a must be non-negative");
  if (!(t > 0.0)) throw domain_error("log_transition_prob: t must be positive");
  if (a == 0) return k == 0 ? 0.0 : -numeric::inf;
  const auto law = offspring_law(t, rates);
  const double log_alpha = std::log(law.alpha);
  if (k == 0) return numeric::xlogy(static_cast<double>(a), log_alpha);
  const double log_beta = std::log(law.beta);
  const double log_survive = std::log(law.one_minus_alpha) + std::log(law.one_minus_beta);
  // j ancestors die out, the remaining a - j split k individuals among them.
  numeric::LogSumExp acc;
  for (std::int64_t j = std::max<std::int64_t>(0, a - k); j <= a - 1; ++j) {
    const double term = numeric::log_choose(a, j) + numeric::log_choose(k - 1, a - j - 1) +
                        numeric::xlogy(static_cast<double>(j), log_alpha) +
                        static_cast<double>(a - j) * log_survive +
                        numeric::xlogy(static_cast<double>(k - a + j), log_beta);
    acc.add(term);
  }
  return acc.value();
}

inline double transition_prob(std::int64_t k, double t, std::int64_t a, const Rates& rates) {
  return std::exp(log_transition_prob(k, t, a, rates));
}

/// E{Z(t) | Z(0) = a} = a exp(omega t).
inline double mean(double t, std::int64_t a, const Rates& rates) {
  if (!(t >= 0.0) || a < 0) throw domain_error("mean: t >= 0 and a >= 0 required");
  return static_cast<double>(a) * std::exp(rates.omega() * t);
}

/// Var{Z(t) | Z(0) = a}.
inline double variance(double t, std::int64_t a, const Rates& rates) {
  if (!(t >= 0.0) || a < 0) throw domain_error("variance: t >= 0 and a >= 0 required");
  if (t == 0.0) return 0.0;
  const double ad = static_cast<double>(a);
  if (rates.critical()) return ad * rates.xi() * t;
  const double wt = rates.omega() * t;
  return ad * rates.xi() * t * std::exp(wt) * numeric::expm1_over(wt);
}

/// Probability that the line of a single ancestor eventually dies out.
inline double extinction_prob(const Rates& rates) {
  if (rates.lambda() == 0.0) return 1.0;
  return std::min(1.0, rates.mu() / rates.lambda());
}

/// Exact log-likelihood of a panel (Markov factorisation over transitions).
inline double exact_loglik(const Panel& panel, const Rates& rates) {
  double total = 0.0;
  for (const auto& tr : panel.trajectories()) {
    const auto counts = tr.counts();
    for (std::size_t j = 1; j < tr.size(); ++j) {
      if (counts[j - 1] == 0) continue;
      total += log_transition_prob(counts[j], tr.gap(j), counts[j - 1], rates);
    }
  }
  return total;
}

/// Chernoff bound on log P{Z(t) >= K | Z(0) = a}, from the dominating sum of a
/// geometric variables on {1, 2, ...} with ratio beta. Returns 0 when K is at
/// or below that sum's mean.
inline double log_tail_bound(std::int64_t K, std::int64_t a, double beta, double one_minus_beta) {
  const double ad = static_cast<double>(a);
  const double kd = static_cast<double>(K);
  if (beta <= 0.0) return K > a ? -numeric::inf : 0.0;
  if (kd * one_minus_beta <= ad) return 0.0;
  const double x = std::log((kd - ad) / (kd * beta));
  return ad * std::log(one_minus_beta) - ad * std::log(ad / kd) - x * (kd - ad);
}

/// Smallest K with P{Z(t) > K | Z(0) = a} below `tail` by the Chernoff bound,
/// capped at `cap`. Sums over k = 0..K then miss at most `tail` of the mass.
inline std::int64_t truncation_point(double t, std::int64_t a, const Rates& rates,
                                     double tail = 1e-12, std::int64_t cap = 1'000'000) {
  if (a < 1) return 0;
  const auto law = offspring_law(t, rates);
  if (law.beta <= 0.0) return a;
  const double log_tail = std::log(tail);
  auto ok = [&](std::int64_t K) { return log_tail_bound(K + 1, a, law.beta, law.one_minus_beta) < log_tail; };
  std::int64_t hi = std::max<std::int64_t>(a, 16);
  while (!ok(hi)) {
    if (hi >= cap) return cap;
    hi = std::min(cap, hi * 2);
  }
  std::int64_t lo = 0;  // ok(0) is false: the bound is trivial below the mean
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace lbdp
