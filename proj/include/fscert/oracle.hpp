#pragma once

#include <cstdint>
#include <span>

#include "fscert/feature_map.hpp"
#include "fscert/gauss.hpp"
#include "fscert/smoothing.hpp"
#include "fscert/vec.hpp"

namespace fscert::oracle {

// Brute-force search for the extrema of v.p over unit vectors v satisfying
// u.v >= gamma. Samples uniform directions (normalized Gaussian draws,
// rejection on the cap constraint) and injects the two analytic geodesic
// candidates so the search is exact at the optimum; v = u is always included.
struct SphereSearchSpec {
  int dimension = 3;
  long samples = 1000000;
  double gamma = 0.0;
  Vec u;  // unit anchor (cap center)
  Vec p;  // unit probe direction
  std::uint64_t seed = 0;
};

struct SphereExtrema {
  double min = 0.0;
  double max = 0.0;
  long accepted = 0;  // samples satisfying the cap constraint
};

SphereExtrema brute_force_sphere_extrema(const SphereSearchSpec& spec);

// Same-sample consistency checks behind the feature-space bound: the mean
// feature and mean cosine computed on one shared sample set must satisfy
//   <f_hat(x), f(x)> = 2 * S(x) - 1   (to float rounding),
//   |f_hat(x)| <= 1 + tolerance,
//   Cos(f_hat/|f_hat|, f(x)) >= <f_hat, f(x)>.
struct IdentityCheckReport {
  double max_identity_gap = 0.0;   // worst |<f_hat,f> - (2S-1)|
  double max_norm = 0.0;           // worst |f_hat|
  double min_normalized_slack = 0.0;  // worst Cos(f_hat/|f_hat|, f) - <f_hat, f>
  long inputs_checked = 0;
  bool passed = false;
};

IdentityCheckReport proof_identity_check(const FeatureMap& map, std::span<const Vec> inputs,
                                         const SmoothingConfig& cfg, double identity_tol = 1e-12);

// One-sided exact (Clopper-Pearson) binomial lower confidence bound,
// computed by bisection on the upper tail P(X >= k | p) = alpha.
// successes = 0 gives 0; successes = trials gives alpha^(1/trials).
gauss::Prob exact_binomial_lcb(long successes, long trials, double alpha);

}  // namespace fscert::oracle
