#include "fscert/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fscert/rng.hpp"
#include "fscert/threading.hpp"

namespace fscert {

namespace {

void project(std::span<double> delta, AttackNorm norm, double eps) {
  if (norm == AttackNorm::L2) {
    const double n = norm2(delta);
    if (n > eps)
      for (double& v : delta) v *= eps / n;
  } else {
    for (double& v : delta) v = std::clamp(v, -eps, eps);
  }
}

}  // namespace

AttackResult pgd_attack(const FeatureMap& map, std::span<const double> x, const AttackConfig& cfg,
                        const Vec* target_feature, const PrototypeHead* head) {
  if (!(cfg.eps > 0.0)) throw std::invalid_argument("pgd_attack: eps must be > 0");
  if (cfg.steps < 1) throw std::invalid_argument("pgd_attack: steps must be >= 1");
  if (cfg.eot_samples < 0) throw std::invalid_argument("pgd_attack: eot_samples must be >= 0");
  if (cfg.objective == AttackObjective::TargetedFeature && target_feature == nullptr)
    throw std::invalid_argument("pgd_attack: targeted mode requires a target feature");
  if (cfg.objective == AttackObjective::PredictionFlip && head == nullptr)
    throw std::invalid_argument("pgd_attack: prediction-flip mode requires a head");
  const int d = map.input_dim();
  if (static_cast<int>(x.size()) != d)
    throw std::invalid_argument("pgd_attack: input dimension mismatch");

  const double step_size = cfg.step_size > 0.0 ? cfg.step_size : 2.5 * cfg.eps / cfg.steps;
  const Vec z_ref = map.clean_reference(x);
  const int clean_label =
      head != nullptr ? predict(*head, z_ref).label : -1;

  // Fixed evaluation noise (shared across steps) makes objective values
  // comparable between iterates and the whole attack deterministic.
  const int n_eval = std::max(cfg.eot_samples, 1);
  std::vector<Vec> eval_noise(n_eval, Vec(d, 0.0));
  if (cfg.eot_samples > 0) {
    for (int i = 0; i < n_eval; ++i) {
      Rng rng(derive_seed(cfg.seed, stream::kAttackEval, static_cast<std::uint64_t>(i)));
      rng.fill_normal(eval_noise[i]);
    }
  }

  // Mean feature over the evaluation noise set (the deterministic feature
  // when eot_samples = 0).
  const double eot_sigma = cfg.eot_samples > 0 ? cfg.eot_sigma : 0.0;
  auto eval_feature = [&](std::span<const double> xp) {
    Vec mean(map.feature_dim(), 0.0);
    Vec noisy(d), feat;
    for (int i = 0; i < n_eval; ++i) {
      for (int j = 0; j < d; ++j) noisy[j] = xp[j] + eot_sigma * eval_noise[i][j];
      if (!map.try_map(noisy, feat)) continue;
      axpy(1.0, feat, mean);
    }
    for (double& v : mean) v /= static_cast<double>(n_eval);
    return mean;
  };

  auto objective_of = [&](const Vec& feat_mean) {
    const double n = norm2(feat_mean);
    if (!(n > 1e-150)) return -2.0;
    switch (cfg.objective) {
      case AttackObjective::UntargetedFeature:
        return -dot(feat_mean, z_ref) / n;
      case AttackObjective::TargetedFeature:
        return dot(feat_mean, *target_feature) / n;
      case AttackObjective::PredictionFlip: {
        Vec v = feat_mean;
        normalize(v);
        double best_other = -2.0;
        for (int c = 0; c < head->class_count(); ++c) {
          if (c == clean_label) continue;
          best_other = std::max(best_other, dot(v, head->prototypes[c]));
        }
        return best_other - dot(v, head->prototypes[clean_label]);
      }
    }
    return -2.0;
  };

  Vec x_cur(x.begin(), x.end());
  Vec x_best = x_cur;
  double best_obj = objective_of(eval_feature(x_cur));

  int stall = 0;
  bool stalled = false;
  const int n_grad = std::max(cfg.eot_samples, 1);
  Vec noisy(d);
  for (int step = 0; step < cfg.steps; ++step) {
    // Cotangent for the ascent direction of the configured objective.
    Vec cot;
    switch (cfg.objective) {
      case AttackObjective::UntargetedFeature:
        cot = z_ref;
        for (double& v : cot) v = -v;
        break;
      case AttackObjective::TargetedFeature:
        cot = *target_feature;
        break;
      case AttackObjective::PredictionFlip: {
        const Vec feat = eval_feature(x_cur);
        Vec v = feat;
        const double n = norm2(v);
        if (n > 1e-150)
          for (double& t : v) t /= n;
        int rival = clean_label == 0 ? 1 : 0;
        double best_other = -2.0;
        for (int c = 0; c < head->class_count(); ++c) {
          if (c == clean_label) continue;
          const double s = dot(v, head->prototypes[c]);
          if (s > best_other) {
            best_other = s;
            rival = c;
          }
        }
        cot = sub(head->prototypes[rival], head->prototypes[clean_label]);
        break;
      }
    }

    Vec grad(d, 0.0);
    for (int i = 0; i < n_grad; ++i) {
      if (cfg.eot_samples > 0) {
        Rng rng(derive_seed(derive_seed(cfg.seed, stream::kAttackEot, step), 0, i));
        for (int j = 0; j < d; ++j) noisy[j] = x_cur[j] + eot_sigma * rng.next_normal();
      } else {
        std::copy(x_cur.begin(), x_cur.end(), noisy.begin());
      }
      const Vec g = map.map_vjp(noisy, cot);
      axpy(1.0 / n_grad, g, grad);
    }

    const double gn = norm2(grad);
    if (!(gn > 1e-150)) {
      if (++stall >= 10) {
        stalled = true;
        break;
      }
      continue;
    }
    stall = 0;

    if (cfg.norm == AttackNorm::L2) {
      for (int j = 0; j < d; ++j) x_cur[j] += step_size * grad[j] / gn;
    } else {
      for (int j = 0; j < d; ++j) x_cur[j] += step_size * (grad[j] > 0.0 ? 1.0 : -1.0);
    }
    Vec delta = sub(x_cur, x);
    project(delta, cfg.norm, cfg.eps);
    for (int j = 0; j < d; ++j) x_cur[j] = x[j] + delta[j];

    const double obj = objective_of(eval_feature(x_cur));
    if (obj > best_obj) {
      best_obj = obj;
      x_best = x_cur;
    }
  }

  AttackResult res;
  res.x_adv = x_best;
  res.stalled = stalled;
  const Vec delta = sub(x_best, x);
  res.norm_used = cfg.norm == AttackNorm::L2
                      ? norm2(delta)
                      : [&] {
                          double m = 0.0;
                          for (double v : delta) m = std::max(m, std::abs(v));
                          return m;
                        }();

  const Vec final_feat = eval_feature(x_best);
  const double fn = norm2(final_feat);
  res.achieved_cos_clean = fn > 1e-150 ? dot(final_feat, z_ref) / fn : 0.0;
  if (target_feature != nullptr)
    res.achieved_cos_target = fn > 1e-150 ? dot(final_feat, *target_feature) / fn : 0.0;
  if (head != nullptr && fn > 1e-150) {
    Vec v = final_feat;
    normalize(v);
    res.prediction_flipped = predict(*head, v).label != clean_label;
  }
  return res;
}

ViolationReport validate_certificates(const FeatureMap& map, std::span<const Vec> inputs,
                                      std::span<const FeatureCertificate> certs,
                                      const ValidationConfig& cfg, const PrototypeHead* head,
                                      std::span<const PredictionCertificate> pred_certs) {
  if (inputs.size() != certs.size())
    throw std::invalid_argument("validate_certificates: inputs/certs size mismatch");
  if (!pred_certs.empty() && pred_certs.size() != certs.size())
    throw std::invalid_argument("validate_certificates: pred_certs size mismatch");
  if (!pred_certs.empty() && head == nullptr)
    throw std::invalid_argument("validate_certificates: prediction certs need a head");
  if (!(cfg.budget_fraction > 0.0 && cfg.budget_fraction < 1.0 + 1e-12))
    throw std::invalid_argument("validate_certificates: budget_fraction must lie in (0, 1]");

  const std::size_t n_inputs = inputs.size();
  ViolationReport report;
  report.inputs.resize(n_inputs);
  report.min_slack = 1e300;
  std::vector<std::string> errors(n_inputs);

#pragma omp parallel for schedule(dynamic) num_threads(worker_lanes())
  for (long idx = 0; idx < static_cast<long>(n_inputs); ++idx) {
    try {
      const FeatureCertificate& cert = certs[idx];
      InputValidation& val = report.inputs[idx];
      val.input_id = cert.input_id;

      const bool prediction_route = !pred_certs.empty();
      double budget;
      if (prediction_route) {
        budget = pred_certs[idx].certified ? pred_certs[idx].eps : 0.0;
      } else {
        budget = cfg.budget_fraction * cert.radius_at_half;
      }
      val.budget = budget;
      if (!(budget > 0.0)) {
        val.skipped = true;
        continue;
      }

      AttackConfig atk = cfg.attack;
      atk.eps = budget;
      atk.norm = AttackNorm::L2;
      atk.eot_sigma = cert.sigma;
      atk.objective = prediction_route ? AttackObjective::PredictionFlip
                                       : AttackObjective::UntargetedFeature;
      atk.seed = derive_seed(cfg.attack.seed, 0x76616c64ULL, cert.input_id);
      const AttackResult attack =
          pgd_attack(map, inputs[idx], atk, nullptr, prediction_route ? head : nullptr);

      // Large-sample measurement of the smoothed feature at the adversarial
      // point, with per-sample features kept for the delta-method allowance.
      SmoothingConfig mcfg;
      mcfg.noise = gauss::NoiseSpec{cert.sigma};
      mcfg.n_samples = cfg.n_measure;
      mcfg.base_seed = cfg.measure_seed;
      const long n = mcfg.n_samples;
      const int d_f = map.feature_dim();
      std::vector<Vec> feats(static_cast<std::size_t>(n));
      for (long i = 0; i < n; ++i)
        detail::sample_feature(map, attack.x_adv, cert.sigma, mcfg.base_seed, cert.input_id, i,
                               feats[i]);
      Vec mean(d_f, 0.0);
      {
        std::vector<KahanSum> acc(d_f);
        for (long i = 0; i < n; ++i)
          for (int j = 0; j < d_f; ++j) acc[j].add(feats[i][j]);
        for (int j = 0; j < d_f; ++j) mean[j] = acc[j].sum / static_cast<double>(n);
      }
      const Vec z_ref = map.clean_reference(inputs[idx]);
      const double mean_norm = norm2(mean);
      val.measured_cos = dot(mean, z_ref) / mean_norm;

      // d Cos(m, z)/dm projected onto each sample gives the variance of the
      // cosine of the mean via the delta method.
      Vec g(d_f);
      for (int j = 0; j < d_f; ++j)
        g[j] = (z_ref[j] - val.measured_cos * mean[j] / mean_norm) / mean_norm;
      double t_mean = 0.0;
      for (long i = 0; i < n; ++i) t_mean += dot(g, feats[i]);
      t_mean /= static_cast<double>(n);
      double t_var = 0.0;
      for (long i = 0; i < n; ++i) {
        const double dv = dot(g, feats[i]) - t_mean;
        t_var += dv * dv;
      }
      t_var /= static_cast<double>(n - 1);
      val.allowance = cfg.allowance_sigmas * std::sqrt(t_var / static_cast<double>(n));

      val.certified_bound =
          gauss::fcsb(gauss::Prob{cert.score_used}, budget, gauss::NoiseSpec{cert.sigma}).value;
      val.slack = val.measured_cos + val.allowance - val.certified_bound;
      val.bound_violation = val.slack < 0.0;

      if (prediction_route) {
        val.prediction_checked = true;
        Vec v = mean;
        normalize(v);
        const Prediction pred = predict(*head, v);
        if (pred.label != pred_certs[idx].clean_class) {
          // Require the rival margin to exceed its own MC allowance before
          // declaring a flip; the certificate constrains the true smoothed
          // feature, not its finite-sample estimate.
          const Vec diff =
              sub(head->prototypes[pred.label], head->prototypes[pred_certs[idx].clean_class]);
          Vec gd(d_f);
          const double raw_gap = dot(mean, diff) / mean_norm;
          for (int j = 0; j < d_f; ++j)
            gd[j] = (diff[j] - raw_gap * mean[j] / mean_norm) / mean_norm;
          double gap_mean = 0.0;
          for (long i = 0; i < n; ++i) gap_mean += dot(gd, feats[i]);
          gap_mean /= static_cast<double>(n);
          double gap_var = 0.0;
          for (long i = 0; i < n; ++i) {
            const double dv = dot(gd, feats[i]) - gap_mean;
            gap_var += dv * dv;
          }
          gap_var /= static_cast<double>(n - 1);
          const double gap_allowance =
              cfg.allowance_sigmas * std::sqrt(gap_var / static_cast<double>(n));
          val.prediction_flipped = raw_gap > gap_allowance;
        }
      }
    } catch (const std::exception& ex) {
      errors[idx] = ex.what();
    }
  }

  for (const std::string& err : errors)
    if (!err.empty()) throw std::runtime_error("validate_certificates: " + err);

  for (const InputValidation& val : report.inputs) {
    if (val.skipped) continue;
    ++report.attacked;
    if (val.bound_violation || val.prediction_flipped) ++report.violations;
    report.min_slack = std::min(report.min_slack, val.slack);
  }
  if (report.attacked == 0) report.min_slack = 0.0;
  return report;
}

}  // namespace fscert
