#pragma once

#include <cstdint>
#include <span>

#include "fscert/smoothing.hpp"

namespace fscert::reference {

// Straightforward single-threaded loops with plain accumulation. These are
// the reference implementations the parallel kernels are tested against
// (same per-sample seeds, so results agree to ~1e-12) and the baseline for
// the serial-vs-parallel benchmark.

SmoothedFeature smooth_feature_serial(const FeatureMap& map, std::span<const double> x,
                                      const SmoothingConfig& cfg, std::uint64_t input_id = 0);

RobustnessEstimate estimate_score_serial(const FeatureMap& map, std::span<const double> x,
                                         const SmoothingConfig& cfg, std::uint64_t input_id = 0);

}  // namespace fscert::reference
