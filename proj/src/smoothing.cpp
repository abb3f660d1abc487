#include "fscert/smoothing.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "fscert/rng.hpp"
#include "fscert/threading.hpp"

namespace fscert {

namespace {

constexpr long kMaxRetriesPerSample = 64;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_config(const SmoothingConfig& cfg) {
  if (cfg.n_samples < 1) throw std::invalid_argument("SmoothingConfig: n_samples must be >= 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    throw std::invalid_argument("SmoothingConfig: alpha must lie in (0, 1)");
  if (!(cfg.noise.sigma > 0.0))
    throw std::invalid_argument("SmoothingConfig: sigma must be positive");
}

}  // namespace

namespace detail {

long sample_feature(const FeatureMap& map, std::span<const double> x, double sigma,
                    std::uint64_t base_seed, std::uint64_t input_id, long index, Vec& out) {
  const int d = map.input_dim();
  Vec noisy(d);
  for (long attempt = 0; attempt <= kMaxRetriesPerSample; ++attempt) {
    std::uint64_t seed = derive_seed(base_seed, input_id, static_cast<std::uint64_t>(index));
    if (attempt > 0)
      seed = derive_seed(seed, stream::kResample, static_cast<std::uint64_t>(attempt));
    Rng rng(seed);
    for (int i = 0; i < d; ++i) noisy[i] = x[i] + sigma * rng.next_normal();
    if (map.try_map(noisy, out)) return attempt;
  }
  throw std::runtime_error("smoothing: sample rejected repeatedly (degenerate features)");
}

}  // namespace detail

SmoothedFeature smooth_feature(const FeatureMap& map, std::span<const double> x,
                               const SmoothingConfig& cfg, std::uint64_t input_id) {
  check_config(cfg);
  if (static_cast<int>(x.size()) != map.input_dim())
    throw std::invalid_argument("smooth_feature: input dimension mismatch");

  const long n = cfg.n_samples;
  const int d_f = map.feature_dim();
  std::vector<Vec> samples(static_cast<std::size_t>(n));
  std::vector<long> retries(static_cast<std::size_t>(n), 0);
  std::atomic<bool> failed{false};

#pragma omp parallel for schedule(static) num_threads(worker_lanes())
  for (long i = 0; i < n; ++i) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      retries[i] = detail::sample_feature(map, x, cfg.noise.sigma, cfg.base_seed, input_id, i,
                                          samples[i]);
    } catch (...) {
      failed.store(true, std::memory_order_relaxed);
    }
  }
  if (failed.load())
    throw std::runtime_error("smooth_feature: a sample kept producing degenerate features");

  long rejected = 0;
  for (long i = 0; i < n; ++i) rejected += retries[i];
  if (static_cast<double>(rejected) > 0.01 * static_cast<double>(n))
    throw std::runtime_error("smooth_feature: more than 1% of samples were degenerate");

  // Fixed index-order compensated reduction: bitwise identical for any lane count.
  SmoothedFeature out;
  out.rejected = rejected;
  out.mean_feature.assign(d_f, 0.0);
  std::vector<KahanSum> acc(d_f);
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < d_f; ++j) acc[j].add(samples[i][j]);
  for (int j = 0; j < d_f; ++j) out.mean_feature[j] = acc[j].sum / static_cast<double>(n);

  out.norm = norm2(out.mean_feature);
  const double jensen_slack = 1e-6 + 3.0 / std::sqrt(static_cast<double>(n));
  if (out.norm > 1.0 + jensen_slack)
    throw std::logic_error("smooth_feature: mean of unit vectors exceeded norm 1");
  if (!(out.norm > 1e-150))
    throw std::runtime_error("smooth_feature: smoothed feature is degenerate (zero mean)");
  out.normalized = out.mean_feature;
  normalize(out.normalized);
  return out;
}

RobustnessEstimate estimate_score(const FeatureMap& map, std::span<const double> x,
                                  const SmoothingConfig& cfg, std::uint64_t input_id) {
  check_config(cfg);
  if (static_cast<int>(x.size()) != map.input_dim())
    throw std::invalid_argument("estimate_score: input dimension mismatch");

  const Vec ref = map.clean_reference(x);
  const long n = cfg.n_samples;
  std::vector<double> cos_vals(static_cast<std::size_t>(n));
  std::atomic<bool> failed{false};

#pragma omp parallel for schedule(static) num_threads(worker_lanes())
  for (long i = 0; i < n; ++i) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      Vec feat;
      detail::sample_feature(map, x, cfg.noise.sigma, cfg.base_seed, input_id, i, feat);
      cos_vals[i] = dot(feat, ref);  // both unit-norm
    } catch (...) {
      failed.store(true, std::memory_order_relaxed);
    }
  }
  if (failed.load())
    throw std::runtime_error("estimate_score: a sample kept producing degenerate features");

  KahanSum mean_acc;
  for (long i = 0; i < n; ++i) mean_acc.add(cos_vals[i]);
  const double mean_cos = mean_acc.sum / static_cast<double>(n);

  KahanSum var_acc;
  for (long i = 0; i < n; ++i) {
    const double d = cos_vals[i] - mean_cos;
    var_acc.add(d * d);
  }
  const double var = n > 1 ? var_acc.sum / static_cast<double>(n - 1) : 0.0;

  RobustnessEstimate est;
  est.mean_cos = mean_cos;
  est.mean_score = gauss::Prob{(1.0 + mean_cos) / 2.0};
  est.cos_sample_std = std::sqrt(std::max(var, 0.0));
  est.n_samples = n;
  est.sigma = cfg.noise.sigma;
  est.mode = cfg.mode;
  est.score_lb = cfg.mode == ScoreMode::Certified
                     ? gauss::score_lower_confidence_bound(est.mean_score, n, cfg.alpha)
                     : est.mean_score;
  return est;
}

LipschitzProbeReport lipschitz_probe(const FeatureMap& map, std::span<const double> x1,
                                     std::span<const double> x2, const SmoothingConfig& cfg,
                                     std::uint64_t pair_id) {
  const RobustnessEstimate e1 = estimate_score(map, x1, cfg, derive_seed(pair_id, 0x70726f62ULL, 1));
  const RobustnessEstimate e2 = estimate_score(map, x2, cfg, derive_seed(pair_id, 0x70726f62ULL, 2));

  LipschitzProbeReport rep;
  rep.dist_over_sigma = norm2(sub(x1, x2)) / cfg.noise.sigma;

  const auto c1 = gauss::clamp_score(e1.mean_score.value);
  const auto c2 = gauss::clamp_score(e2.mean_score.value);
  if (c1.saturated || c2.saturated) {
    rep.skipped = true;
    return rep;
  }

  const double q1 = gauss::std_normal_inv_cdf(c1.value);
  const double q2 = gauss::std_normal_inv_cdf(c2.value);
  rep.phi_gap = std::abs(q1 - q2);

  // Delta method: Var(Phi^{-1}(S)) ~= Var(S) / pdf(Phi^{-1}(S))^2 with
  // Var(S) = (std_cos / 2)^2 / n.
  auto quantile_var = [](const RobustnessEstimate& e, double q) {
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * q * q);
    const double score_var =
        (e.cos_sample_std / 2.0) * (e.cos_sample_std / 2.0) / static_cast<double>(e.n_samples);
    return score_var / (pdf * pdf);
  };
  rep.allowance = 3.0 * std::sqrt(quantile_var(e1, q1) + quantile_var(e2, q2));
  rep.violation = rep.phi_gap > rep.dist_over_sigma + rep.allowance;
  return rep;
}

}  // namespace fscert
