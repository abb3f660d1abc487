#pragma once

#include <span>
#include <string>
#include <vector>

#include "fscert/attack.hpp"
#include "fscert/certify.hpp"
#include "fscert/gsb.hpp"

namespace fscert::report {

// All writers emit deterministic bytes: fixed column order, shortest
// round-trip float formatting, no timestamps.

std::string format_double(double v);

void write_feature_certificates(std::span<const FeatureCertificate> certs,
                                const std::string& path);

void write_prediction_certificates(std::span<const PredictionCertificate> certs,
                                   const std::string& path);

// Aggregate rows (sigma, eps, avg_fcsb, avg_radius, certified_fraction); for
// the feature task certified_fraction is the fraction with radius >= eps,
// for the prediction task the fraction whose margin certificate holds at eps.
struct AggregateRow {
  double sigma = 0.0;
  double eps = 0.0;
  double avg_fcsb = 0.0;
  double avg_radius = 0.0;
  double certified_fraction = 0.0;
};

std::vector<AggregateRow> aggregate_feature_certificates(
    std::span<const FeatureCertificate> certs);

void write_aggregate_csv(std::span<const AggregateRow> rows, const std::string& path);

// Per-variant summary: one row per encoder variant, fcsb columns per eps,
// then the average certified radius.
struct VariantSummary {
  std::string variant;
  double sigma = 0.0;
  std::vector<double> avg_fcsb;  // parallel to the eps grid
  double avg_radius = 0.0;
};

void write_variant_summary_csv(std::span<const VariantSummary> rows,
                               std::span<const double> eps_grid, const std::string& path);

// Prediction-task comparison: certified fraction per eps for the
// feature-space route and (optionally) the randomized-smoothing comparator.
struct PredictionSummaryRow {
  double eps = 0.0;
  double fs_certified_fraction = 0.0;
  double rs_certified_fraction = 0.0;
};

void write_prediction_summary_csv(std::span<const PredictionSummaryRow> rows, bool include_rs,
                                  const std::string& path);

void write_violation_report(const ViolationReport& rep, const std::string& path);

void write_training_history_csv(std::span<const GsbEpochRecord> history, const std::string& path);

}  // namespace fscert::report
