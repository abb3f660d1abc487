#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fscert/certify.hpp"
#include "fscert/feature_map.hpp"
#include "fscert/smoothing.hpp"
#include "fscert/vec.hpp"

namespace fscert {

enum class AttackNorm { L2, Linf };
enum class AttackObjective { UntargetedFeature, TargetedFeature, PredictionFlip };

struct AttackConfig {
  AttackNorm norm = AttackNorm::L2;
  double eps = 0.5;
  int steps = 200;
  double step_size = 0.0;  // 0 = 2.5 * eps / steps
  AttackObjective objective = AttackObjective::UntargetedFeature;
  int eot_samples = 0;      // 0 attacks the deterministic map; > 0 averages
                            // gradients over fresh noise draws per step
  double eot_sigma = 0.25;  // noise scale of the smoothed target being attacked
  std::uint64_t seed = 0;
};

struct AttackResult {
  Vec x_adv;
  double achieved_cos_clean = 0.0;
  double achieved_cos_target = 0.0;
  bool prediction_flipped = false;
  double norm_used = 0.0;
  bool stalled = false;  // gradient vanished for 10 consecutive steps
};

// Projected gradient attack in feature space. Untargeted mode minimizes the
// cosine to the clean reference feature; targeted mode maximizes the cosine
// to target_feature; prediction-flip mode climbs the best rival's prototype
// margin. Every iterate is projected exactly onto the eps-ball and the
// reported iterate is the best by objective over the whole run, evaluated on
// a fixed noise sample set shared across steps.
AttackResult pgd_attack(const FeatureMap& map, std::span<const double> x, const AttackConfig& cfg,
                        const Vec* target_feature = nullptr, const PrototypeHead* head = nullptr);

// Certificate validation: attacks each certified input at a fraction of its
// certified radius (or at the prediction certificate's eps), measures the
// smoothed feature with a large shared-seed Monte Carlo sample, and flags
// inputs whose measured cosine-plus-allowance falls below the certified
// bound or whose certified prediction flips.
struct ValidationConfig {
  AttackConfig attack;
  double budget_fraction = 0.9;  // fraction of the certified radius to attack at
  long n_measure = 50000;        // measurement samples (>= 5x certification n)
  std::uint64_t measure_seed = 0x6d736565ULL;
  double allowance_sigmas = 3.0;
};

struct InputValidation {
  std::uint64_t input_id = 0;
  double budget = 0.0;
  double certified_bound = 0.0;  // fcsb at the attacked budget
  double measured_cos = 0.0;     // Cos(mean noisy feature, clean feature)
  double allowance = 0.0;
  double slack = 0.0;  // measured + allowance - bound
  bool bound_violation = false;
  bool prediction_checked = false;
  bool prediction_flipped = false;
  bool skipped = false;  // zero budget, nothing to attack
};

struct ViolationReport {
  std::vector<InputValidation> inputs;
  long attacked = 0;
  long violations = 0;
  double min_slack = 0.0;
};

ViolationReport validate_certificates(const FeatureMap& map, std::span<const Vec> inputs,
                                      std::span<const FeatureCertificate> certs,
                                      const ValidationConfig& cfg,
                                      const PrototypeHead* head = nullptr,
                                      std::span<const PredictionCertificate> pred_certs = {});

}  // namespace fscert
