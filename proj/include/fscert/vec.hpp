#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace fscert {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine: zero vector");
  return dot(a, b) / (na * nb);
}

// In-place x/|x|; throws if |x| is numerically zero.
inline void normalize(std::span<double> a) {
  const double n = norm2(a);
  if (!(n > 1e-300)) throw std::domain_error("normalize: zero vector has no direction");
  for (double& v : a) v /= n;
}

inline Vec normalized(std::span<const double> a) {
  Vec out(a.begin(), a.end());
  normalize(out);
  return out;
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec add(std::span<const double> a, std::span<const double> b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vec sub(std::span<const double> a, std::span<const double> b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

inline bool is_unit_norm(std::span<const double> a, double tol = 1e-6) {
  return std::abs(norm2(a) - 1.0) <= tol;
}

// Compensated (Kahan) accumulator; keeps reductions order-stable to ~1 ulp so
// parallel lanes reduced in index order match the sequential result.
struct KahanSum {
  double sum = 0.0;
  double c = 0.0;
  void add(double v) {
    const double y = v - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
};

}  // namespace fscert
