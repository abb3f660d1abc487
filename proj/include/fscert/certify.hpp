#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fscert/dataset.hpp"
#include "fscert/feature_map.hpp"
#include "fscert/gauss.hpp"
#include "fscert/smoothing.hpp"
#include "fscert/vec.hpp"

namespace fscert {

// Per-input feature-level certificate: robustness-score estimate, the
// certified cosine lower bound as a function of the attack budget, and the
// certified radius for target cosine 0.5.
struct FeatureCertificate {
  std::uint64_t input_id = 0;
  double sigma = 0.0;
  long n_samples = 0;
  double score_point = 0.0;  // raw Monte Carlo mean score
  double score_lb = 0.0;     // Hoeffding bound (certified mode) or the mean
  double score_used = 0.0;   // clamped score feeding the bounds, per mode
  ScoreMode mode = ScoreMode::Certified;
  bool saturated = false;
  std::vector<std::pair<double, double>> fcsb_curve;  // (eps, cosine bound)
  double radius_at_half = 0.0;
};

FeatureCertificate certify_feature(const FeatureMap& map, std::span<const double> x,
                                   const SmoothingConfig& cfg, std::span<const double> eps_list,
                                   std::uint64_t input_id = 0);

// Certificate assembly from an already-known score (exercised directly by
// tests; certify_feature delegates here).
FeatureCertificate build_feature_certificate(double score_point, double score_lb, ScoreMode mode,
                                             double sigma, long n_samples,
                                             std::span<const double> eps_list,
                                             std::uint64_t input_id);

// Cosine-prototype classification head: unit-norm prototype per class,
// scores are plain dot products against a unit-norm feature.
struct PrototypeHead {
  std::vector<Vec> prototypes;
  std::vector<std::string> class_names;

  int class_count() const { return static_cast<int>(prototypes.size()); }
  int feature_dim() const { return prototypes.empty() ? 0 : static_cast<int>(prototypes[0].size()); }
};

struct PrototypeFitConfig {
  int refine_epochs = 0;     // 0 = plain normalized class means
  double refine_lr = 0.1;
  double temperature = 10.0; // cosine-softmax logit scale for refinement
};

// Normalized class means of clean features; optional cosine-softmax gradient
// refinement with re-normalization after every step.
PrototypeHead fit_prototypes(const FeatureMap& map, const LabeledDataset& data,
                             const PrototypeFitConfig& cfg = {});

struct Prediction {
  int label = 0;
  bool tie = false;  // argmax tie, broken toward the lowest class index
};

Prediction predict(const PrototypeHead& head, std::span<const double> u);

// Prediction-level certificate from the spherical score bounds: certified
// iff the lower bound of the predicted class strictly beats every other
// class's upper bound under the cosine constraint gamma.
struct PredictionCertificate {
  std::uint64_t input_id = 0;
  int clean_class = 0;
  bool clean_tie = false;
  std::vector<double> clean_scores;  // a_k = u . p_k
  double eps = 0.0;
  double gamma_used = 0.0;
  double lb_y = 0.0;
  double max_ub_other = 0.0;
  bool certified = false;
  double max_certified_eps = 0.0;  // largest eps passing the margin test (1e-4 bisection)
};

PredictionCertificate certify_prediction(const PrototypeHead& head,
                                         std::span<const double> clean_feature,
                                         const FeatureCertificate& cert, double eps);

// Cohen-style randomized-smoothing comparator on the composite classifier
// predict(head, map(x + noise)). Selection votes pick the candidate class,
// estimation votes give an exact one-sided binomial lower bound on its
// probability; abstains when the bound does not exceed 1/2.
struct RsCertificate {
  int label = -1;
  bool abstain = true;
  long votes_top = 0;
  double p_lower = 0.0;
  double radius = 0.0;
};

RsCertificate rs_baseline_certify(const FeatureMap& map, const PrototypeHead& head,
                                  std::span<const double> x, double sigma, long n_select,
                                  long n_estimate, double alpha, std::uint64_t base_seed = 0,
                                  std::uint64_t input_id = 0);

}  // namespace fscert
