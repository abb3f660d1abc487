#pragma once

// Independent high-precision references used only by tests. These must not
// share code with the library paths they check: the CDF uses the Taylor
// series / asymptotic expansion in long double (the library uses erfc), the
// inverse uses plain bisection on that CDF (the library uses a rational
// approximation plus a Newton step), and the binomial tail accumulates
// successive-term ratios (the library sums lgamma-based terms).

#include <cmath>
#include <stdexcept>

namespace testsupport {

// Standard normal CDF via the Taylor series Phi(x) = 1/2 + pdf(x) * (x +
// x^3/3 + x^5/(3*5) + ...) for moderate x and the tail asymptotic expansion
// pdf(x)/|x| * (1 - 1/x^2 + 3/x^4 - ...) for |x| > 8.
inline long double normal_cdf_reference(long double x) {
  const long double inv_sqrt_2pi = 0.3989422804014326779399460599343818685L;
  const long double pdf = inv_sqrt_2pi * std::exp(-0.5L * x * x);
  const long double ax = std::fabs(x);
  if (ax <= 8.0L) {
    long double term = x;
    long double sum = x;
    long double x2 = x * x;
    for (int k = 1; k < 400; ++k) {
      term *= x2 / (2.0L * k + 1.0L);
      const long double prev = sum;
      sum += term;
      if (sum == prev) break;
    }
    return 0.5L + pdf * sum;
  }
  // Tail: alternating asymptotic series, truncated at its smallest term.
  long double term = 1.0L;
  long double sum = 1.0L;
  for (int k = 1; k < 40; ++k) {
    term *= -(2.0L * k - 1.0L) / (ax * ax);
    if (std::fabs(term) > 1.0L) break;
    sum += term;
  }
  const long double tail = pdf / ax * sum;
  return x > 0 ? 1.0L - tail : tail;
}

// Inverse by bisection on the reference CDF.
inline long double normal_inv_cdf_reference(long double p) {
  if (!(p > 0.0L && p < 1.0L)) throw std::domain_error("reference inverse: p outside (0,1)");
  long double lo = -40.0L, hi = 40.0L;
  for (int iter = 0; iter < 200; ++iter) {
    const long double mid = 0.5L * (lo + hi);
    (normal_cdf_reference(mid) < p ? lo : hi) = mid;
  }
  return 0.5L * (lo + hi);
}

// Upper binomial tail P(X >= k | n, p) accumulated through term ratios:
// t_i+1 = t_i * (n - i) / (i + 1) * p / (1 - p), starting from t_k.
inline long double binom_upper_tail_reference(long k, long n, long double p) {
  if (k <= 0) return 1.0L;
  if (p <= 0.0L) return 0.0L;
  if (p >= 1.0L) return 1.0L;
  long double log_t = 0.0L;  // log C(n,k) p^k (1-p)^(n-k)
  for (long i = 0; i < k; ++i)
    log_t += std::log((long double)(n - i)) - std::log((long double)(k - i));
  log_t += k * std::log(p) + (n - k) * std::log1p(-(double)p);
  long double term = std::exp(log_t);
  long double sum = 0.0L;
  for (long i = k; i <= n; ++i) {
    sum += term;
    term *= (long double)(n - i) / (long double)(i + 1) * p / (1.0L - p);
    if (term < 1e-30L && i > k + 10) break;
  }
  return sum > 1.0L ? 1.0L : sum;
}

inline long double binomial_lcb_reference(long successes, long trials, long double alpha) {
  if (successes == 0) return 0.0L;
  if (successes == trials) return std::pow(alpha, 1.0L / (long double)trials);
  long double lo = 0.0L, hi = (long double)successes / (long double)trials;
  for (int iter = 0; iter < 120; ++iter) {
    const long double mid = 0.5L * (lo + hi);
    (binom_upper_tail_reference(successes, trials, mid) < alpha ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace testsupport
