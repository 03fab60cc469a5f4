#pragma once

// Central and noncentral chi-square tail probabilities.
//
// The central upper tail is the regularized upper incomplete gamma function
// Q(k/2, x/2), evaluated by its power series below a + 1 and by a Lentz
// continued fraction above it. The noncentral upper tail is the Poisson
// mixture
//
//   P(X > x) = sum_j  e^{-m} m^j / j!  *  Q(k/2 + j, x/2),   m = lambda / 2,
//
// summed outward from the Poisson mode. Neighbouring Q values are obtained by
// the recurrence Q(a+1, y) = Q(a, y) + y^a e^{-y} / Gamma(a+1), so each term
// costs O(1) after the first.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>

namespace qbl::chi2 {

namespace detail {

inline constexpr int kMaxIterations = 1'000'000;
inline constexpr double kEps = 1e-16;

// Lower regularized gamma P(a, x) for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int n = 0; n < kMaxIterations; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized gamma Q(a, x) for x >= a + 1 (modified Lentz).
inline double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

/// Regularized upper incomplete gamma Q(a, x), a > 0.
inline double gamma_q(double a, double x) {
  if (!(a > 0)) throw std::domain_error("gamma_q: shape must be positive");
  if (x <= 0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_fraction(a, x);
}

/// P(X >= x) for a central chi-square with `df` degrees of freedom. With
/// df = 0 the distribution is a point mass at zero.
inline double upper_tail(double x, int df) {
  if (df < 0) throw std::domain_error("chi-square df must be nonnegative");
  if (df == 0) return x > 0 ? 0.0 : 1.0;
  return gamma_q(0.5 * df, 0.5 * x);
}

inline double cdf(double x, int df) { return 1.0 - upper_tail(x, df); }

/// x such that upper_tail(x, df) == alpha.
inline double critical_value(double alpha, int df) {
  if (!(alpha > 0 && alpha < 1)) {
    throw std::domain_error("critical_value: alpha must be in (0, 1)");
  }
  if (df < 1) throw std::domain_error("critical_value: df must be >= 1");

  thread_local std::map<std::pair<int, double>, double> cache;
  if (auto it = cache.find({df, alpha}); it != cache.end()) return it->second;

  double lo = 0.0;
  double hi = df + 10.0 * std::sqrt(2.0 * df) + 20.0;
  while (upper_tail(hi, df) > alpha) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-13 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (upper_tail(mid, df) > alpha ? lo : hi) = mid;
  }
  const double x = 0.5 * (lo + hi);
  cache.emplace(std::pair{df, alpha}, x);
  return x;
}

/// P(X > x) for a noncentral chi-square with `df` degrees of freedom and
/// noncentrality `lambda`. Terms below 1e-12 end the series in each
/// direction once past the Poisson mode.
inline double noncentral_upper_tail(double x, int df, double lambda) {
  if (df < 1) throw std::domain_error("noncentral chi-square needs df >= 1");
  if (lambda < 0) throw std::domain_error("noncentrality must be >= 0");
  if (x <= 0) return 1.0;
  if (std::isinf(lambda)) return 1.0;
  if (lambda == 0) return upper_tail(x, df);

  constexpr double cutoff = 1e-12;
  const double m = 0.5 * lambda;
  const double y = 0.5 * x;
  const double log_y = std::log(y);
  const double mode = std::floor(m);
  const double a_mode = 0.5 * df + mode;

  const double w_mode = std::exp(-m + mode * std::log(m) - std::lgamma(mode + 1));
  const double q_mode = gamma_q(a_mode, y);
  double sum = w_mode * q_mode;

  // Upward: Q grows toward 1 while the weights decay.
  {
    double w = w_mode, q = q_mode, a = a_mode;
    for (double j = mode + 1; j < mode + 1e9; j += 1) {
      q += std::exp(a * log_y - y - std::lgamma(a + 1));
      a += 1;
      w *= m / j;
      const double term = w * std::min(q, 1.0);
      sum += term;
      if (w < cutoff) break;
    }
  }
  // Downward: both factors shrink.
  {
    double w = w_mode, q = q_mode, a = a_mode;
    for (double j = mode - 1; j >= 0; j -= 1) {
      q -= std::exp((a - 1) * log_y - y - std::lgamma(a));
      a -= 1;
      w *= (j + 1) / m;
      const double term = w * std::max(q, 0.0);
      sum += term;
      if (term < cutoff) break;
    }
  }
  return std::clamp(sum, 0.0, 1.0);
}

}  // namespace qbl::chi2
