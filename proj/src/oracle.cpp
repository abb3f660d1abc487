#include "fscert/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fscert/rng.hpp"
#include "fscert/threading.hpp"

namespace fscert::oracle {

SphereExtrema brute_force_sphere_extrema(const SphereSearchSpec& spec) {
  const int d = spec.dimension;
  if (d < 2) throw std::invalid_argument("sphere search: dimension must be >= 2");
  if (spec.samples < 1) throw std::invalid_argument("sphere search: samples must be >= 1");
  if (static_cast<int>(spec.u.size()) != d || static_cast<int>(spec.p.size()) != d)
    throw std::invalid_argument("sphere search: anchor dimensions mismatch");
  if (!is_unit_norm(spec.u, 1e-9) || !is_unit_norm(spec.p, 1e-9))
    throw std::invalid_argument("sphere search: anchors must be unit norm");
  if (!(spec.gamma >= -1.0 && spec.gamma <= 1.0))
    throw std::invalid_argument("sphere search: gamma outside [-1, 1]");

  const double a = dot(spec.u, spec.p);

  // v = u is always feasible (u.u = 1 >= gamma), covering the gamma = 1 case
  // where rejection sampling accepts nothing.
  SphereExtrema out;
  out.min = a;
  out.max = a;

  // Analytic geodesic candidates: rotate u toward/away from p by the cap
  // angle. Skipped when p is (anti)parallel to u and no rotation plane exists.
  Vec w = spec.p;
  axpy(-a, spec.u, w);
  const double wn = norm2(w);
  if (wn > 1e-12) {
    for (double& v : w) v /= wn;
    const double sin_cap = std::sqrt(std::max(0.0, 1.0 - spec.gamma * spec.gamma));
    for (const double sign : {1.0, -1.0}) {
      Vec cand(d);
      for (int i = 0; i < d; ++i) cand[i] = spec.gamma * spec.u[i] + sign * sin_cap * w[i];
      const double val = dot(cand, spec.p);
      out.min = std::min(out.min, val);
      out.max = std::max(out.max, val);
    }
  }
  // p and -p are interior optima whenever they satisfy the cap constraint.
  if (a >= spec.gamma) out.max = std::max(out.max, 1.0);
  if (-a >= spec.gamma) out.min = std::min(out.min, -1.0);

  const int lanes = worker_lanes();
  std::vector<double> lane_min(lanes, out.min), lane_max(lanes, out.max);
  std::vector<long> lane_accepted(lanes, 0);

#pragma omp parallel num_threads(lanes)
  {
    int lane = 0;
#ifdef _OPENMP
    lane = omp_get_thread_num();
#endif
    Vec v(d);
#pragma omp for schedule(static)
    for (long i = 0; i < spec.samples; ++i) {
      Rng rng(derive_seed(spec.seed, 0x73706872ULL, static_cast<std::uint64_t>(i)));
      rng.fill_normal(v);
      const double n = norm2(v);
      if (!(n > 1e-12)) continue;
      for (double& x : v) x /= n;
      if (dot(v, spec.u) < spec.gamma) continue;
      const double val = dot(v, spec.p);
      lane_min[lane] = std::min(lane_min[lane], val);
      lane_max[lane] = std::max(lane_max[lane], val);
      ++lane_accepted[lane];
    }
  }
  for (int l = 0; l < lanes; ++l) {
    out.min = std::min(out.min, lane_min[l]);
    out.max = std::max(out.max, lane_max[l]);
    out.accepted += lane_accepted[l];
  }
  return out;
}

IdentityCheckReport proof_identity_check(const FeatureMap& map, std::span<const Vec> inputs,
                                         const SmoothingConfig& cfg, double identity_tol) {
  IdentityCheckReport rep;
  rep.min_normalized_slack = 1e300;
  const double norm_tol = 1e-6 + 3.0 / std::sqrt(static_cast<double>(cfg.n_samples));
  bool ok = true;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::uint64_t input_id = static_cast<std::uint64_t>(i);
    const SmoothedFeature sf = smooth_feature(map, inputs[i], cfg, input_id);
    const RobustnessEstimate est = estimate_score(map, inputs[i], cfg, input_id);
    const Vec ref = map.clean_reference(inputs[i]);

    const double inner = dot(sf.mean_feature, ref);
    const double gap = std::abs(inner - (2.0 * est.mean_score.value - 1.0));
    rep.max_identity_gap = std::max(rep.max_identity_gap, gap);
    rep.max_norm = std::max(rep.max_norm, sf.norm);

    const double slack = dot(sf.normalized, ref) - inner;
    rep.min_normalized_slack = std::min(rep.min_normalized_slack, slack);

    if (gap > identity_tol || sf.norm > 1.0 + norm_tol || slack < -1e-12) ok = false;
    ++rep.inputs_checked;
  }
  rep.passed = ok && rep.inputs_checked > 0;
  return rep;
}

namespace {

// log of the upper binomial tail P(X >= k | p), summed in plain double via
// log-space terms; accurate enough for bisection to ~1e-12.
double binom_upper_tail(long k, long n, double p) {
  if (k <= 0) return 1.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double logp = std::log(p);
  const double log1mp = std::log1p(-p);
  double tail = 0.0;
  for (long i = k; i <= n; ++i) {
    const double log_choose = std::lgamma(static_cast<double>(n) + 1.0) -
                              std::lgamma(static_cast<double>(i) + 1.0) -
                              std::lgamma(static_cast<double>(n - i) + 1.0);
    tail += std::exp(log_choose + i * logp + (n - i) * log1mp);
  }
  return std::min(tail, 1.0);
}

}  // namespace

gauss::Prob exact_binomial_lcb(long successes, long trials, double alpha) {
  if (trials < 1) throw std::invalid_argument("exact_binomial_lcb: trials must be >= 1");
  if (successes < 0 || successes > trials)
    throw std::invalid_argument("exact_binomial_lcb: successes outside [0, trials]");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("exact_binomial_lcb: alpha must lie in (0, 1)");
  if (successes == 0) return gauss::Prob{0.0};
  if (successes == trials)
    return gauss::Prob{std::pow(alpha, 1.0 / static_cast<double>(trials))};

  // P(X >= k | p) is increasing in p; find p with tail = alpha.
  double lo = 0.0, hi = static_cast<double>(successes) / static_cast<double>(trials);
  for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (binom_upper_tail(successes, trials, mid) < alpha ? lo : hi) = mid;
  }
  return gauss::Prob{lo};
}

}  // namespace fscert::oracle
