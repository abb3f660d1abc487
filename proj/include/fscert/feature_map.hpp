#pragma once

#include <span>
#include <stdexcept>

#include "fscert/vec.hpp"

namespace fscert {

// Anything that turns an input vector into a unit-norm feature vector.
// Implementations must be deterministic and safe for concurrent map() calls.
class FeatureMap {
 public:
  virtual ~FeatureMap() = default;

  virtual int input_dim() const = 0;
  virtual int feature_dim() const = 0;

  // Writes the unit-norm feature into `out` (resized as needed). Returns
  // false when the pre-normalization output is degenerate (zero vector);
  // the throwing wrapper below reports that as an error.
  virtual bool try_map(std::span<const double> x, Vec& out) const = 0;

  // Vector-Jacobian product: d(cotangent . feature)/dx at x. Only maps used
  // as gradient-attack targets need to implement this.
  virtual Vec map_vjp(std::span<const double> x, std::span<const double> cotangent) const;

  // Clean reference feature used by robustness-score estimation. Composites
  // that wrap a base encoder return the base encoder's clean feature.
  virtual Vec clean_reference(std::span<const double> x) const;

  Vec map(std::span<const double> x) const;
};

// Fixed-output map: always returns the same unit vector. Useful as the
// noise-constant extreme in tests and comparator runs.
class ConstantFeatureMap final : public FeatureMap {
 public:
  ConstantFeatureMap(int input_dim, Vec feature);

  int input_dim() const override { return input_dim_; }
  int feature_dim() const override { return static_cast<int>(feature_.size()); }
  bool try_map(std::span<const double> x, Vec& out) const override;
  Vec map_vjp(std::span<const double> x, std::span<const double> cotangent) const override;

 private:
  int input_dim_;
  Vec feature_;
};

}  // namespace fscert
