#include "fscert/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace fscert::reference {

SmoothedFeature smooth_feature_serial(const FeatureMap& map, std::span<const double> x,
                                      const SmoothingConfig& cfg, std::uint64_t input_id) {
  const long n = cfg.n_samples;
  const int d_f = map.feature_dim();
  SmoothedFeature out;
  out.mean_feature.assign(d_f, 0.0);
  Vec feat;
  for (long i = 0; i < n; ++i) {
    out.rejected +=
        detail::sample_feature(map, x, cfg.noise.sigma, cfg.base_seed, input_id, i, feat);
    for (int j = 0; j < d_f; ++j) out.mean_feature[j] += feat[j];
  }
  if (static_cast<double>(out.rejected) > 0.01 * static_cast<double>(n))
    throw std::runtime_error("smooth_feature_serial: more than 1% of samples were degenerate");
  for (int j = 0; j < d_f; ++j) out.mean_feature[j] /= static_cast<double>(n);
  out.norm = norm2(out.mean_feature);
  out.normalized = out.mean_feature;
  normalize(out.normalized);
  return out;
}

RobustnessEstimate estimate_score_serial(const FeatureMap& map, std::span<const double> x,
                                         const SmoothingConfig& cfg, std::uint64_t input_id) {
  const Vec ref = map.clean_reference(x);
  const long n = cfg.n_samples;
  double sum = 0.0, sum_sq = 0.0;
  Vec feat;
  for (long i = 0; i < n; ++i) {
    detail::sample_feature(map, x, cfg.noise.sigma, cfg.base_seed, input_id, i, feat);
    const double c = dot(feat, ref);
    sum += c;
    sum_sq += c * c;
  }
  RobustnessEstimate est;
  est.mean_cos = sum / static_cast<double>(n);
  est.mean_score = gauss::Prob{(1.0 + est.mean_cos) / 2.0};
  const double var =
      n > 1 ? std::max(0.0, (sum_sq - sum * sum / static_cast<double>(n)) /
                                static_cast<double>(n - 1))
            : 0.0;
  est.cos_sample_std = std::sqrt(var);
  est.n_samples = n;
  est.sigma = cfg.noise.sigma;
  est.mode = cfg.mode;
  est.score_lb = cfg.mode == ScoreMode::Certified
                     ? gauss::score_lower_confidence_bound(est.mean_score, n, cfg.alpha)
                     : est.mean_score;
  return est;
}

}  // namespace fscert::reference
