#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace fscert {

// Counter-based seeding: every Monte Carlo draw owns a seed derived from
// (base_seed, stream/input id, sample index), so results do not depend on
// evaluation order or the number of worker lanes.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(base);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return h;
}

// Fixed stream tags keeping independent consumers of the same run seed apart.
namespace stream {
constexpr std::uint64_t kDataset = 0x64617461ULL;      // dataset generation
constexpr std::uint64_t kEncoderInit = 0x656e6374ULL;  // encoder parameter init
constexpr std::uint64_t kGsbInit = 0x67736269ULL;      // gsb parameter init
constexpr std::uint64_t kGsbNoise = 0x6773626eULL;     // gsb training noise
constexpr std::uint64_t kResample = 0x72736d70ULL;     // degenerate-sample retries
constexpr std::uint64_t kAttackEot = 0x61656f74ULL;    // per-step attack noise
constexpr std::uint64_t kAttackEval = 0x6165766cULL;   // attack objective evaluation
constexpr std::uint64_t kRsSelect = 0x72737354ULL;     // rs vote selection
constexpr std::uint64_t kRsEstimate = 0x72737345ULL;   // rs vote estimation
constexpr std::uint64_t kMeasure = 0x6d656173ULL;      // validation measurement
}  // namespace stream

// Small deterministic generator (splitmix64 stream + Box-Muller normals).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // Uniform in (0, 1].
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  void fill_normal(std::span<double> out, double scale = 1.0) {
    for (double& v : out) v = scale * next_normal();
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fscert
