#include "fscert/certify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fscert/oracle.hpp"
#include "fscert/rng.hpp"

namespace fscert {

FeatureCertificate build_feature_certificate(double score_point, double score_lb, ScoreMode mode,
                                             double sigma, long n_samples,
                                             std::span<const double> eps_list,
                                             std::uint64_t input_id) {
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] >= 0.0))
      throw std::invalid_argument("build_feature_certificate: eps must be >= 0");
    if (i > 0 && eps_list[i] < eps_list[i - 1])
      throw std::invalid_argument("build_feature_certificate: eps_list must be sorted ascending");
  }

  FeatureCertificate cert;
  cert.input_id = input_id;
  cert.sigma = sigma;
  cert.n_samples = n_samples;
  cert.score_point = score_point;
  cert.score_lb = score_lb;
  cert.mode = mode;

  const double chosen = mode == ScoreMode::Certified ? score_lb : score_point;
  const auto clamped = gauss::clamp_score(chosen);
  cert.score_used = clamped.value.value;
  cert.saturated = clamped.saturated;

  const gauss::NoiseSpec noise{sigma};
  cert.fcsb_curve.reserve(eps_list.size());
  for (double eps : eps_list)
    cert.fcsb_curve.emplace_back(eps, gauss::fcsb(clamped.value, eps, noise).value);
  cert.radius_at_half = gauss::certified_radius(clamped.value, noise, gauss::CosBound{0.5});
  return cert;
}

FeatureCertificate certify_feature(const FeatureMap& map, std::span<const double> x,
                                   const SmoothingConfig& cfg, std::span<const double> eps_list,
                                   std::uint64_t input_id) {
  const RobustnessEstimate est = estimate_score(map, x, cfg, input_id);
  return build_feature_certificate(est.mean_score.value, est.score_lb.value, cfg.mode,
                                   cfg.noise.sigma, est.n_samples, eps_list, input_id);
}

PrototypeHead fit_prototypes(const FeatureMap& map, const LabeledDataset& data,
                             const PrototypeFitConfig& cfg) {
  if (data.size() == 0) throw std::invalid_argument("fit_prototypes: empty dataset");
  const int k = data.class_count;
  const int d = map.feature_dim();

  std::vector<Vec> features(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) features[i] = map.map(data.inputs[i]);

  PrototypeHead head;
  head.prototypes.assign(k, Vec(d, 0.0));
  std::vector<long> counts(k, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    axpy(1.0, features[i], head.prototypes[data.labels[i]]);
    ++counts[data.labels[i]];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[c] == 0)
      throw std::invalid_argument("fit_prototypes: class " + std::to_string(c) + " has no samples");
    normalize(head.prototypes[c]);
    head.class_names.push_back("class-" + std::to_string(c));
  }

  // Optional cosine-softmax refinement; prototypes re-normalized every step.
  for (int epoch = 0; epoch < cfg.refine_epochs; ++epoch) {
    std::vector<Vec> grads(k, Vec(d, 0.0));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Vec& u = features[i];
      std::vector<double> logits(k);
      for (int c = 0; c < k; ++c) logits[c] = cfg.temperature * dot(u, head.prototypes[c]);
      const double m = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (int c = 0; c < k; ++c) z += std::exp(logits[c] - m);
      for (int c = 0; c < k; ++c) {
        const double p = std::exp(logits[c] - m) / z;
        const double coeff = cfg.temperature * (p - (c == data.labels[i] ? 1.0 : 0.0)) /
                             static_cast<double>(data.size());
        axpy(coeff, u, grads[c]);
      }
    }
    for (int c = 0; c < k; ++c) {
      axpy(-cfg.refine_lr, grads[c], head.prototypes[c]);
      normalize(head.prototypes[c]);
    }
  }
  return head;
}

Prediction predict(const PrototypeHead& head, std::span<const double> u) {
  if (head.prototypes.empty()) throw std::invalid_argument("predict: head has no prototypes");
  Prediction out;
  double best = dot(u, head.prototypes[0]);
  for (int c = 1; c < head.class_count(); ++c) {
    const double s = dot(u, head.prototypes[c]);
    if (s > best) {
      best = s;
      out.label = c;
      out.tie = false;
    } else if (s == best) {
      out.tie = true;  // tie kept at the lowest class index
    }
  }
  return out;
}

namespace {

// Margin test at a fixed gamma; strict inequality per the certified
// margin condition.
bool margin_holds(std::span<const double> scores, int y, double gamma, double& lb_y,
                  double& max_ub_other) {
  const auto [lb, ub_self] = gauss::sphere_bounds(gauss::CosBound{gamma},
                                                  gauss::CosBound{std::clamp(scores[y], -1.0, 1.0)});
  lb_y = lb.value;
  max_ub_other = -2.0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (static_cast<int>(c) == y) continue;
    const auto [lo, hi] = gauss::sphere_bounds(gauss::CosBound{gamma},
                                               gauss::CosBound{std::clamp(scores[c], -1.0, 1.0)});
    max_ub_other = std::max(max_ub_other, hi.value);
  }
  return lb_y > max_ub_other;
}

}  // namespace

PredictionCertificate certify_prediction(const PrototypeHead& head,
                                         std::span<const double> clean_feature,
                                         const FeatureCertificate& cert, double eps) {
  if (!(eps >= 0.0)) throw std::invalid_argument("certify_prediction: eps must be >= 0");
  if (head.feature_dim() != static_cast<int>(clean_feature.size()))
    throw std::invalid_argument("certify_prediction: feature dimension mismatch");

  const Vec u = normalized(clean_feature);
  PredictionCertificate out;
  out.input_id = cert.input_id;
  out.eps = eps;
  const Prediction pred = predict(head, u);
  out.clean_class = pred.label;
  out.clean_tie = pred.tie;
  out.clean_scores.resize(head.class_count());
  for (int c = 0; c < head.class_count(); ++c) out.clean_scores[c] = dot(u, head.prototypes[c]);

  const gauss::Prob score{cert.score_used};
  const gauss::NoiseSpec noise{cert.sigma};
  auto gamma_at = [&](double e) { return gauss::fcsb(score, e, noise).value; };

  out.gamma_used = gamma_at(eps);
  out.certified =
      margin_holds(out.clean_scores, out.clean_class, out.gamma_used, out.lb_y, out.max_ub_other);

  // Largest certified eps by bisection; gamma is monotone decreasing in eps,
  // so the margin condition holds on an interval [0, eps*).
  double lb_dummy, ub_dummy;
  auto certified_at = [&](double e) {
    return margin_holds(out.clean_scores, out.clean_class, gamma_at(e), lb_dummy, ub_dummy);
  };
  if (!certified_at(0.0)) {
    out.max_certified_eps = 0.0;
    return out;
  }
  // Upper limit: gamma has fully saturated to its floor beyond this point.
  double hi = noise.sigma * (gauss::std_normal_inv_cdf(score) -
                             gauss::std_normal_inv_cdf(gauss::Prob{gauss::kScoreClampLo}));
  hi = std::max(hi, 1e-4);
  if (certified_at(hi)) {
    out.max_certified_eps = hi;
    return out;
  }
  double lo = 0.0;
  while (hi - lo > 1e-4) {
    const double mid = 0.5 * (lo + hi);
    (certified_at(mid) ? lo : hi) = mid;
  }
  out.max_certified_eps = lo;
  return out;
}

RsCertificate rs_baseline_certify(const FeatureMap& map, const PrototypeHead& head,
                                  std::span<const double> x, double sigma, long n_select,
                                  long n_estimate, double alpha, std::uint64_t base_seed,
                                  std::uint64_t input_id) {
  if (n_select < 1) throw std::invalid_argument("rs_baseline_certify: n_select must be >= 1");
  if (n_estimate < n_select)
    throw std::invalid_argument("rs_baseline_certify: n_estimate must be >= n_select");
  if (!(sigma > 0.0)) throw std::invalid_argument("rs_baseline_certify: sigma must be positive");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("rs_baseline_certify: alpha must lie in (0, 1)");

  const int d = map.input_dim();
  auto vote = [&](std::uint64_t stream_tag, long index) {
    Rng rng(derive_seed(derive_seed(base_seed, stream_tag, input_id), 0, index));
    Vec noisy(d);
    for (int i = 0; i < d; ++i) noisy[i] = x[i] + sigma * rng.next_normal();
    return predict(head, map.map(noisy)).label;
  };

  std::vector<long> counts(head.class_count(), 0);
  for (long i = 0; i < n_select; ++i) ++counts[vote(stream::kRsSelect, i)];
  const int top = static_cast<int>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());

  long successes = 0;
  for (long i = 0; i < n_estimate; ++i)
    if (vote(stream::kRsEstimate, i) == top) ++successes;

  RsCertificate cert;
  cert.label = top;
  cert.votes_top = successes;
  cert.p_lower = oracle::exact_binomial_lcb(successes, n_estimate, alpha).value;
  if (cert.p_lower > 0.5) {
    cert.abstain = false;
    cert.radius = sigma * gauss::std_normal_inv_cdf(gauss::Prob{cert.p_lower});
  }
  return cert;
}

}  // namespace fscert
