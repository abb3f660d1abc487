#include "fscert/feature_map.hpp"

namespace fscert {

Vec FeatureMap::map(std::span<const double> x) const {
  Vec out;
  if (!try_map(x, out))
    throw std::domain_error("FeatureMap::map: degenerate zero feature (no direction)");
  return out;
}

Vec FeatureMap::map_vjp(std::span<const double>, std::span<const double>) const {
  throw std::logic_error("FeatureMap::map_vjp: map is not differentiable");
}

Vec FeatureMap::clean_reference(std::span<const double> x) const { return map(x); }

ConstantFeatureMap::ConstantFeatureMap(int input_dim, Vec feature)
    : input_dim_(input_dim), feature_(std::move(feature)) {
  normalize(feature_);
}

bool ConstantFeatureMap::try_map(std::span<const double> x, Vec& out) const {
  if (static_cast<int>(x.size()) != input_dim_)
    throw std::invalid_argument("ConstantFeatureMap: input dimension mismatch");
  out = feature_;
  return true;
}

Vec ConstantFeatureMap::map_vjp(std::span<const double> x, std::span<const double>) const {
  if (static_cast<int>(x.size()) != input_dim_)
    throw std::invalid_argument("ConstantFeatureMap: input dimension mismatch");
  return Vec(input_dim_, 0.0);
}

}  // namespace fscert
