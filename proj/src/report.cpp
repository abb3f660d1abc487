#include "fscert/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace fscert::report {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("report: cannot open " + path);
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_feature_certificates(std::span<const FeatureCertificate> certs,
                                const std::string& path) {
  std::ofstream out = open_out(path);
  for (const FeatureCertificate& c : certs) {
    nlohmann::ordered_json rec;
    rec["input_id"] = c.input_id;
    rec["sigma"] = c.sigma;
    rec["n_samples"] = c.n_samples;
    rec["mode"] = c.mode == ScoreMode::Certified ? "certified" : "point-estimate";
    rec["score_point"] = c.score_point;
    rec["score_lb"] = c.score_lb;
    rec["score_used"] = c.score_used;
    rec["saturated"] = c.saturated;
    nlohmann::ordered_json curve = nlohmann::ordered_json::array();
    for (const auto& [eps, bound] : c.fcsb_curve) curve.push_back({{"eps", eps}, {"fcsb", bound}});
    rec["fcsb_curve"] = curve;
    rec["radius_at_half"] = c.radius_at_half;
    out << rec.dump() << "\n";
  }
}

void write_prediction_certificates(std::span<const PredictionCertificate> certs,
                                   const std::string& path) {
  std::ofstream out = open_out(path);
  for (const PredictionCertificate& c : certs) {
    nlohmann::ordered_json rec;
    rec["input_id"] = c.input_id;
    rec["clean_class"] = c.clean_class;
    rec["clean_tie"] = c.clean_tie;
    rec["clean_scores"] = c.clean_scores;
    rec["eps"] = c.eps;
    rec["gamma_used"] = c.gamma_used;
    rec["lb_y"] = c.lb_y;
    rec["max_ub_other"] = c.max_ub_other;
    rec["certified"] = c.certified;
    rec["max_certified_eps"] = c.max_certified_eps;
    out << rec.dump() << "\n";
  }
}

std::vector<AggregateRow> aggregate_feature_certificates(
    std::span<const FeatureCertificate> certs) {
  if (certs.empty()) return {};
  const std::size_t n_eps = certs[0].fcsb_curve.size();
  std::vector<AggregateRow> rows(n_eps);
  for (std::size_t e = 0; e < n_eps; ++e) {
    AggregateRow& row = rows[e];
    row.sigma = certs[0].sigma;
    row.eps = certs[0].fcsb_curve[e].first;
    for (const FeatureCertificate& c : certs) {
      if (c.fcsb_curve.size() != n_eps)
        throw std::invalid_argument("aggregate: certificates disagree on the eps grid");
      row.avg_fcsb += c.fcsb_curve[e].second;
      row.avg_radius += c.radius_at_half;
      if (c.radius_at_half >= row.eps) row.certified_fraction += 1.0;
    }
    row.avg_fcsb /= static_cast<double>(certs.size());
    row.avg_radius /= static_cast<double>(certs.size());
    row.certified_fraction /= static_cast<double>(certs.size());
  }
  return rows;
}

void write_aggregate_csv(std::span<const AggregateRow> rows, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "sigma,eps,avg_fcsb,avg_radius,certified_fraction\n";
  for (const AggregateRow& r : rows)
    out << format_double(r.sigma) << ',' << format_double(r.eps) << ','
        << format_double(r.avg_fcsb) << ',' << format_double(r.avg_radius) << ','
        << format_double(r.certified_fraction) << "\n";
}

void write_variant_summary_csv(std::span<const VariantSummary> rows,
                               std::span<const double> eps_grid, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "variant,sigma";
  for (double eps : eps_grid) out << ",fcsb@" << format_double(eps);
  out << ",avg_radius\n";
  for (const VariantSummary& r : rows) {
    if (r.avg_fcsb.size() != eps_grid.size())
      throw std::invalid_argument("variant summary: eps grid mismatch");
    out << r.variant << ',' << format_double(r.sigma);
    for (double v : r.avg_fcsb) out << ',' << format_double(v);
    out << ',' << format_double(r.avg_radius) << "\n";
  }
}

void write_prediction_summary_csv(std::span<const PredictionSummaryRow> rows, bool include_rs,
                                  const std::string& path) {
  std::ofstream out = open_out(path);
  out << (include_rs ? "eps,fs_certified_fraction,rs_certified_fraction\n"
                     : "eps,fs_certified_fraction\n");
  for (const PredictionSummaryRow& r : rows) {
    out << format_double(r.eps) << ',' << format_double(r.fs_certified_fraction);
    if (include_rs) out << ',' << format_double(r.rs_certified_fraction);
    out << "\n";
  }
}

void write_violation_report(const ViolationReport& rep, const std::string& path) {
  std::ofstream out = open_out(path);
  for (const InputValidation& v : rep.inputs) {
    nlohmann::ordered_json rec;
    rec["input_id"] = v.input_id;
    rec["skipped"] = v.skipped;
    rec["budget"] = v.budget;
    rec["certified_bound"] = v.certified_bound;
    rec["measured_cos"] = v.measured_cos;
    rec["allowance"] = v.allowance;
    rec["slack"] = v.slack;
    rec["bound_violation"] = v.bound_violation;
    if (v.prediction_checked) rec["prediction_flipped"] = v.prediction_flipped;
    out << rec.dump() << "\n";
  }
  out << "aggregate inputs=" << rep.inputs.size() << " attacked=" << rep.attacked
      << " violations=" << rep.violations << " min_slack=" << format_double(rep.min_slack)
      << "\n";
}

void write_training_history_csv(std::span<const GsbEpochRecord> history,
                                const std::string& path) {
  std::ofstream out = open_out(path);
  out << "stage,epoch,l_mse,l_rb_P,L_P,l_rb_M,l_stats,l_id,L_M,holdout_score\n";
  for (const GsbEpochRecord& r : history) {
    out << r.stage << ',' << r.epoch << ',' << format_double(r.losses.l_mse) << ','
        << format_double(r.losses.l_rb_P) << ',' << format_double(r.losses.L_P) << ','
        << format_double(r.losses.l_rb_M) << ',' << format_double(r.losses.l_stats) << ','
        << format_double(r.losses.l_id) << ',' << format_double(r.losses.L_M) << ','
        << format_double(r.holdout_score) << "\n";
  }
}

}  // namespace fscert::report
