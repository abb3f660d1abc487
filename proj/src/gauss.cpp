#include "fscert/gauss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fscert::gauss {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// Acklam's rational approximation to the probit function (relative error
// below 1.15e-9 on (0,1)); one Newton step against erfc-based Phi brings it
// to full double precision.
double inv_cdf_acklam(double p) {
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  return x;
}

}  // namespace

Prob Prob::checked(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("Prob: value outside [0, 1]");
  return Prob{v};
}

CosBound CosBound::checked(double v) {
  if (!(v >= -1.0 && v <= 1.0)) throw std::domain_error("CosBound: value outside [-1, 1]");
  return CosBound{v};
}

NoiseSpec NoiseSpec::checked(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw std::domain_error("NoiseSpec: sigma must be positive");
  return NoiseSpec{s};
}

ClampedScore clamp_score(double raw) {
  ClampedScore out;
  out.saturated = raw > kScoreClampHi;
  out.value = Prob{std::clamp(raw, kScoreClampLo, kScoreClampHi)};
  return out;
}

Prob std_normal_cdf(double x) {
  if (!std::isfinite(x)) throw std::domain_error("std_normal_cdf: non-finite input");
  const double p = 0.5 * std::erfc(-x / kSqrt2);
  return Prob{std::clamp(p, 0.0, 1.0)};
}

double std_normal_inv_cdf(Prob p) {
  const double v = p.value;
  if (!(v > 0.0 && v < 1.0)) {
    throw std::domain_error(
        "std_normal_inv_cdf: saturated probability (p must lie strictly inside (0, 1))");
  }
  double x = inv_cdf_acklam(v);
  const double err = std_normal_cdf(x).value - v;
  const double pdf = std_normal_pdf(x);
  if (pdf > 0.0) x -= err / pdf;
  return x;
}

CosBound fcsb(Prob score_lb, double eps, NoiseSpec noise) {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw std::domain_error("fcsb: eps must be >= 0");
  if (!(score_lb.value > 0.0 && score_lb.value < 1.0))
    throw std::domain_error("fcsb: score must lie strictly inside (0, 1); clamp first");
  if (!(noise.sigma > 0.0)) throw std::domain_error("fcsb: sigma must be positive");
  if (eps == 0.0) return CosBound{2.0 * score_lb.value - 1.0};
  const double shifted = std_normal_inv_cdf(score_lb) - eps / noise.sigma;
  return CosBound{std::clamp(2.0 * std_normal_cdf(shifted).value - 1.0, -1.0, 1.0)};
}

double certified_radius(Prob score_lb, NoiseSpec noise, CosBound target_cos) {
  if (!(target_cos.value > -1.0 && target_cos.value < 1.0))
    throw std::domain_error("certified_radius: target_cos must lie strictly inside (-1, 1)");
  if (!(score_lb.value > 0.0 && score_lb.value < 1.0))
    throw std::domain_error("certified_radius: score must lie strictly inside (0, 1)");
  const double threshold = (1.0 + target_cos.value) / 2.0;
  const double raw =
      noise.sigma * (std_normal_inv_cdf(score_lb) - std_normal_inv_cdf(Prob{threshold}));
  return std::max(raw, 0.0);
}

Prob score_lower_confidence_bound(Prob mean, long n, double alpha) {
  if (n < 1) throw std::domain_error("score_lower_confidence_bound: n must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::domain_error("score_lower_confidence_bound: alpha must lie in (0, 1)");
  const double correction = std::sqrt(std::log(1.0 / alpha) / (2.0 * static_cast<double>(n)));
  return Prob{std::max(0.0, mean.value - correction)};
}

std::pair<CosBound, CosBound> sphere_bounds(CosBound gamma, CosBound a) {
  const double g = gamma.value, av = a.value;
  if (!(g >= -1.0 && g <= 1.0) || !(av >= -1.0 && av <= 1.0))
    throw std::domain_error("sphere_bounds: arguments outside [-1, 1]");
  const double cross = std::sqrt(std::max(0.0, 1.0 - g * g)) *
                       std::sqrt(std::max(0.0, 1.0 - av * av));
  // cos over the angle interval [alpha - cap, alpha + cap] intersected with
  // [0, pi]: when p itself lies inside the cap (a >= gamma) the maximum is 1,
  // and when -p does (a <= -gamma) the minimum is -1; otherwise the geodesic
  // endpoints gamma*a -/+ cross are attained.
  const double lower = av <= -g ? -1.0 : std::clamp(g * av - cross, -1.0, 1.0);
  const double upper = av >= g ? 1.0 : std::clamp(g * av + cross, -1.0, 1.0);
  return {CosBound{lower}, CosBound{upper}};
}

}  // namespace fscert::gauss
