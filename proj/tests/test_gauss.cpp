#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fscert/gauss.hpp"
#include "fscert/oracle.hpp"
#include "support/normal_oracle.hpp"

using namespace fscert;
using namespace fscert::gauss;

TEST_CASE("std_normal_cdf matches the series reference") {
  CHECK(std_normal_cdf(0.0).value == doctest::Approx(0.5).epsilon(1e-14));
  // Frozen from the independent long-double series oracle.
  CHECK(std::abs(std_normal_cdf(1.0).value - 0.8413447460685429) < 1e-10);

  for (double x = -8.0; x <= 8.0; x += 0.137) {
    const double ref = static_cast<double>(testsupport::normal_cdf_reference(x));
    CHECK(std::abs(std_normal_cdf(x).value - ref) < 1e-10);
  }
  // Tail limit: saturates without exceeding 1.
  const double far = std_normal_cdf(40.0).value;
  CHECK(far <= 1.0);
  CHECK(far >= 1.0 - 1e-300);
  CHECK_THROWS_AS(std_normal_cdf(std::nan("")), std::domain_error);
}

TEST_CASE("std_normal_cdf is monotone non-decreasing") {
  double prev = -1.0;
  for (double x = -12.0; x <= 12.0; x += 0.01) {
    const double p = std_normal_cdf(x).value;
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("std_normal_inv_cdf matches the bisection reference") {
  CHECK(std_normal_inv_cdf(Prob{0.5}) == doctest::Approx(0.0).epsilon(1e-12));
  // Frozen from the bisection oracle.
  CHECK(std::abs(std_normal_inv_cdf(Prob{0.75}) - 0.6744897501960817) < 1e-9);
  CHECK(std::abs(std_normal_inv_cdf(Prob{0.9}) - 1.2815515655446004) < 1e-9);

  for (double p = 0.01; p < 1.0; p += 0.03) {
    const double ref = static_cast<double>(testsupport::normal_inv_cdf_reference(p));
    CHECK(std::abs(std_normal_inv_cdf(Prob{p}) - ref) < 1e-9);
  }
  CHECK_THROWS_AS(std_normal_inv_cdf(Prob{0.0}), std::domain_error);
  CHECK_THROWS_AS(std_normal_inv_cdf(Prob{1.0}), std::domain_error);
  CHECK_THROWS_AS(std_normal_inv_cdf(Prob{-0.1}), std::domain_error);
}

TEST_CASE("round trip and strict monotonicity of the inverse") {
  double prev = -1e9;
  for (int i = 0; i < 10000; ++i) {
    const double p = 1e-9 + (1.0 - 2e-9) * (static_cast<double>(i) / 9999.0);
    const double x = std_normal_inv_cdf(Prob{p});
    CHECK(std::abs(std_normal_cdf(x).value - p) <= 1e-9);
    CHECK(x > prev);
    prev = x;
  }
}

TEST_CASE("fcsb examples") {
  // eps = 0 collapses to 2s - 1, exactly.
  CHECK(fcsb(Prob{0.9}, 0.0, NoiseSpec{1.0}).value == 2.0 * 0.9 - 1.0);
  // Argument of Phi becomes 0.
  CHECK(fcsb(Prob{0.75}, 0.6744897501960817, NoiseSpec{1.0}).value ==
        doctest::Approx(0.0).epsilon(1e-8));
  // Frozen from the CDF oracle: 2*Phi(Phi^{-1}(0.9) - 0.5) - 1.
  CHECK(std::abs(fcsb(Prob{0.9}, 0.25, NoiseSpec{0.5}).value - 0.5655218391453896) < 1e-4);
}

TEST_CASE("fcsb monotonicity in score and eps") {
  const NoiseSpec sigma{0.5};
  double prev = 2.0;
  for (double eps = 0.0; eps <= 2.0; eps += 0.05) {
    const double b = fcsb(Prob{0.85}, eps, sigma).value;
    CHECK(b <= prev + 1e-15);
    prev = b;
  }
  prev = -2.0;
  for (double s = 0.05; s < 1.0; s += 0.05) {
    const double b = fcsb(Prob{s}, 0.3, sigma).value;
    CHECK(b >= prev - 1e-15);
    prev = b;
  }
}

TEST_CASE("sigma scaling identity is exact") {
  for (double s : {0.6, 0.75, 0.9, 0.99}) {
    for (double eps : {0.1, 0.25, 0.7}) {
      for (double sigma : {0.25, 0.5, 2.0}) {
        CHECK(fcsb(Prob{s}, eps, NoiseSpec{sigma}).value ==
              fcsb(Prob{s}, eps / sigma, NoiseSpec{1.0}).value);
      }
    }
  }
}

TEST_CASE("certified radius examples") {
  CHECK(certified_radius(Prob{0.75}, NoiseSpec{1.0}, CosBound{0.5}) == 0.0);
  CHECK(std::abs(certified_radius(Prob{0.9}, NoiseSpec{0.25}, CosBound{0.5}) -
                 0.15176545383712968) < 1e-4);
  CHECK(certified_radius(Prob{0.6}, NoiseSpec{1.0}, CosBound{0.5}) == 0.0);
}

TEST_CASE("radius and fcsb are consistent") {
  for (double s : {0.8, 0.9, 0.97}) {
    for (double c : {0.0, 0.3, 0.5, 0.7}) {
      for (double sigma : {0.25, 1.0}) {
        const double r = certified_radius(Prob{s}, NoiseSpec{sigma}, CosBound{c});
        if (r > 0.0)
          CHECK(std::abs(fcsb(Prob{s}, r, NoiseSpec{sigma}).value - c) <= 1e-8);
      }
    }
  }
}

TEST_CASE("hoeffding lower confidence bound") {
  // Frozen: 0.9 - sqrt(ln(1000) / 20000).
  CHECK(std::abs(score_lower_confidence_bound(Prob{0.9}, 10000, 0.001).value -
                 0.8814153890557508) < 1e-5);
  CHECK(std::abs(score_lower_confidence_bound(Prob{0.5}, 1000000000000L, 0.001).value - 0.5) <
        1e-5);
  CHECK(score_lower_confidence_bound(Prob{0.01}, 10, 0.05).value == 0.0);
  const double m = 0.7;
  double prev = 0.0;
  for (long n : {10L, 100L, 1000L, 100000L}) {
    const double b = score_lower_confidence_bound(Prob{m}, n, 0.01).value;
    CHECK(b <= m);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("sphere bounds: pinned, orthogonal, and derived cases") {
  {
    const auto [lo, hi] = sphere_bounds(CosBound{1.0}, CosBound{0.3});
    CHECK(lo.value == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(hi.value == doctest::Approx(0.3).epsilon(1e-12));
  }
  {
    const auto [lo, hi] = sphere_bounds(CosBound{0.0}, CosBound{0.0});
    CHECK(lo.value == -1.0);
    CHECK(hi.value == 1.0);
  }
  {
    const auto [lo, hi] = sphere_bounds(CosBound{0.8}, CosBound{0.6});
    CHECK(lo.value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(hi.value == doctest::Approx(0.96).epsilon(1e-12));
  }
}

TEST_CASE("sphere bounds match the brute-force search on a coarse grid") {
  // The full 21x21 acceptance grid runs in the acceptance suite; this is a
  // faster spot grid with fewer samples.
  for (double gamma : {-0.9, -0.3, 0.2, 0.8}) {
    for (double a : {-0.7, 0.0, 0.5, 0.9}) {
      oracle::SphereSearchSpec spec;
      spec.dimension = 3;
      spec.samples = 200000;
      spec.gamma = gamma;
      spec.u = {1.0, 0.0, 0.0};
      spec.p = {a, std::sqrt(1.0 - a * a), 0.0};
      spec.seed = 7;
      const auto ext = oracle::brute_force_sphere_extrema(spec);
      const auto [lo, hi] = sphere_bounds(CosBound{gamma}, CosBound{a});
      CHECK(std::abs(ext.min - lo.value) < 1e-3);
      CHECK(std::abs(ext.max - hi.value) < 1e-3);
      CHECK(ext.min >= lo.value - 1e-9);
      CHECK(ext.max <= hi.value + 1e-9);
    }
  }
}

TEST_CASE("clamping policy") {
  const auto low = clamp_score(-0.2);
  CHECK(low.value.value == kScoreClampLo);
  CHECK_FALSE(low.saturated);
  const auto high = clamp_score(1.0);
  CHECK(high.value.value == kScoreClampHi);
  CHECK(high.saturated);
  const auto mid = clamp_score(0.42);
  CHECK(mid.value.value == 0.42);
  CHECK_FALSE(mid.saturated);
}

TEST_CASE("domain type validation") {
  CHECK_THROWS_AS(Prob::checked(1.5), std::domain_error);
  CHECK_THROWS_AS(CosBound::checked(-1.01), std::domain_error);
  CHECK_THROWS_AS(NoiseSpec::checked(0.0), std::domain_error);
  CHECK(Prob::checked(1.0).value == 1.0);
  CHECK(CosBound::checked(-1.0).value == -1.0);
}
