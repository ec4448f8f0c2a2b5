#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace lbdp::numeric {

inline constexpr double inf = std::numeric_limits<double>::infinity();
inline constexpr double log_two_pi = 1.8378770664093454836;

// lgamma without touching the global signgam.
inline double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

// log C(n, k); -inf outside 0 <= k <= n.
inline double log_choose(std::int64_t n, std::int64_t k) {
  if (k < 0 || n < 0 || k > n) return -inf;
  if (k == 0 || k == n) return 0.0;
  return log_gamma(static_cast<double>(n) + 1.0) - log_gamma(static_cast<double>(k) + 1.0) -
         log_gamma(static_cast<double>(n - k) + 1.0);
}

// n * log p with the 0 * log 0 = 0 convention; `log_p` may be -inf.
inline double xlogy(double n, double log_p) {
  if (n == 0.0) return 0.0;
  return n * log_p;
}

// Streaming log-sum-exp with a running maximum.
class LogSumExp {
 public:
  void add(double v) {
    if (v == -inf) return;
    if (v <= max_) {
      sum_ += std::exp(v - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - v) + 1.0;
      max_ = v;
    }
  }
  [[nodiscard]] double value() const {
    if (max_ == -inf) return -inf;
    return max_ + std::log(sum_);
  }

 private:
  double max_ = -inf;
  double sum_ = 0.0;
};

// expm1(x) / x, continuous at 0.
inline double expm1_over(double x) {
  if (std::abs(x) < 1e-5) return 1.0 + x / 2.0 + x * x / 6.0;
  return std::expm1(x) / x;
}

// log((e^x - 1) / x), valid for all real x.
inline double log_expm1_over(double x) {
  if (std::abs(x) < 1e-5) return x / 2.0 + x * x / 24.0;
  if (x > 30.0) return x + std::log1p(-std::exp(-x)) - std::log(x);
  if (x < -30.0) return std::log1p(-std::exp(x)) - std::log(-x);
  return std::log(std::expm1(x) / x);
}

inline bool is_finite(double v) { return std::isfinite(v); }

}  // namespace lbdp::numeric
