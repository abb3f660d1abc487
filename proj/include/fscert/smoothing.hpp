#pragma once

#include <cstdint>
#include <span>

#include "fscert/feature_map.hpp"
#include "fscert/gauss.hpp"
#include "fscert/vec.hpp"

namespace fscert {

enum class ScoreMode { PointEstimate, Certified };

struct SmoothingConfig {
  gauss::NoiseSpec noise{0.25};
  long n_samples = 10000;
  std::uint64_t base_seed = 0;
  double alpha = 0.001;  // confidence level for the certified-mode bound
  ScoreMode mode = ScoreMode::Certified;
};

// Monte Carlo mean of the feature map under Gaussian input noise.
// `norm` can never exceed 1 by more than MC tolerance (mean of unit vectors).
struct SmoothedFeature {
  Vec mean_feature;
  double norm = 0.0;
  Vec normalized;
  long rejected = 0;  // degenerate samples that were re-drawn
};

// Robustness-score estimate. mean_score = (1 + mean_cos) / 2 exactly;
// score_lb is the Hoeffding bound in certified mode and mean_score otherwise.
struct RobustnessEstimate {
  double mean_cos = 0.0;
  gauss::Prob mean_score{0.0};
  gauss::Prob score_lb{0.0};
  double cos_sample_std = 0.0;  // per-sample std of the cosine draws
  long n_samples = 0;
  double sigma = 0.0;
  ScoreMode mode = ScoreMode::Certified;
};

struct LipschitzProbeReport {
  double phi_gap = 0.0;         // |Phi^{-1}(S(x1)) - Phi^{-1}(S(x2))|
  double dist_over_sigma = 0.0; // |x1 - x2| / sigma
  double allowance = 0.0;       // 3-sigma delta-method band on phi_gap
  bool skipped = false;         // a score saturated; probe not meaningful
  bool violation = false;       // phi_gap exceeds dist_over_sigma + allowance
};

// Per-sample seeds are derive_seed(base_seed, input_id, i): results are
// independent of evaluation order and of how many worker lanes run the
// sampling loop. Sample i that produces a degenerate feature is re-drawn
// from a retry stream; more than 1% rejected samples is an error.
SmoothedFeature smooth_feature(const FeatureMap& map, std::span<const double> x,
                               const SmoothingConfig& cfg, std::uint64_t input_id = 0);

// Mean cosine between noisy features and the clean reference feature of the
// map (composites report their base encoder's clean feature).
RobustnessEstimate estimate_score(const FeatureMap& map, std::span<const double> x,
                                  const SmoothingConfig& cfg, std::uint64_t input_id = 0);

// Empirical check of the 1/sigma-Lipschitz property of Phi^{-1}(S(x)).
LipschitzProbeReport lipschitz_probe(const FeatureMap& map, std::span<const double> x1,
                                     std::span<const double> x2, const SmoothingConfig& cfg,
                                     std::uint64_t pair_id = 0);

namespace detail {
// Draws noisy sample i for (base_seed, input_id) and maps it; shared by the
// parallel kernels and the serial reference so seeds line up exactly.
// Returns the number of retries used (0 = first draw accepted).
long sample_feature(const FeatureMap& map, std::span<const double> x, double sigma,
                    std::uint64_t base_seed, std::uint64_t input_id, long index, Vec& out);
}  // namespace detail

}  // namespace fscert
