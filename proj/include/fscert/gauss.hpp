#pragma once

#include <utility>

namespace fscert::gauss {

// Probability in [0, 1].
struct Prob {
  double value = 0.0;
  static Prob checked(double v);
};

// Cosine-similarity value or bound in [-1, 1].
struct CosBound {
  double value = 0.0;
  static CosBound checked(double v);
};

// Isotropic Gaussian noise level (input-space standard deviation), sigma > 0.
struct NoiseSpec {
  double sigma = 0.25;
  static NoiseSpec checked(double s);
};

// Score estimates are clamped into [kScoreClampLo, kScoreClampHi] before any
// inverse-CDF use; hitting the upper clamp marks the result as saturated so
// clipped certificates stay visible in reports.
constexpr double kScoreClampLo = 1e-6;
constexpr double kScoreClampHi = 1.0 - 1e-6;

struct ClampedScore {
  Prob value;
  bool saturated = false;  // raw score exceeded the upper clamp
};
ClampedScore clamp_score(double raw);

// Standard normal CDF, absolute error below 1e-10. Throws std::domain_error
// on non-finite input.
Prob std_normal_cdf(double x);

// Inverse standard normal CDF on the open interval (0, 1); rational
// approximation refined by one Newton step on the forward CDF.
// p in {0, 1} signals saturation via std::domain_error; callers are expected
// to clamp with clamp_score() first.
double std_normal_inv_cdf(Prob p);

// Certified lower bound on the cosine between the smoothed feature of any
// input within l2 distance eps and the clean feature:
//   2 * Phi(Phi^{-1}(score_lb) - eps / sigma) - 1.
// eps == 0 short-circuits to 2 * score_lb - 1 (the two are equal; the direct
// form is exact in floating point).
CosBound fcsb(Prob score_lb, double eps, NoiseSpec noise);

// Largest certified l2 radius keeping the fcsb at or above target_cos:
//   sigma * (Phi^{-1}(score_lb) - Phi^{-1}((1 + target_cos) / 2)),
// floored at zero. target_cos must lie strictly inside (-1, 1).
double certified_radius(Prob score_lb, NoiseSpec noise, CosBound target_cos);

// One-sided Hoeffding lower confidence bound for a [0,1]-bounded mean:
//   max(0, mean - sqrt(ln(1/alpha) / (2n))).
Prob score_lower_confidence_bound(Prob mean, long n, double alpha);

// Tight range of v.p over unit vectors v with u.v >= gamma, where a = u.p:
//   gamma*a -/+ sqrt(1-gamma^2)*sqrt(1-a^2),
// clamped into [-1, 1] against floating drift.
std::pair<CosBound, CosBound> sphere_bounds(CosBound gamma, CosBound a);

}  // namespace fscert::gauss
