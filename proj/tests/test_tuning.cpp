#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "addreg/model.hpp"
#include "addreg/tuning.hpp"

namespace {

bool close_abs(double a, double b, double tol) { return std::abs(a - b) <= tol; }

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

addreg::Dataset grid_data(std::size_t n, std::size_t p) {
  addreg::Dataset data;
  data.x.assign(p, std::vector<double>(n));
  data.y.assign(n, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      data.x[j][i] = static_cast<double>(i) / static_cast<double>(n - 1);
    }
  }
  for (std::size_t i = 0; i < n; ++i) data.y[i] = std::sin(static_cast<double>(i));
  return data;
}

}  // namespace

TEST_SUITE("tuning") {

TEST_CASE("the noise floor at n = 100, p = 10, epsilon = 0.1") {
  CHECK(close_abs(addreg::nu_n(100, 10, 0.1), 0.2145966026289347, 1e-15));
}

TEST_CASE("the noise floor rejects out-of-range inputs") {
  CHECK_THROWS_AS((void)addreg::nu_n(10, 1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS((void)addreg::nu_n(10, 5, 1.5), std::invalid_argument);
  CHECK_THROWS_AS((void)addreg::nu_n(10, 2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)addreg::nu_n(0, 2, 0.5), std::invalid_argument);
}

TEST_CASE("the noise floor is one when the log argument is e at n = 1") {
  CHECK(close_abs(addreg::nu_n(1, 1, std::exp(-1.0)), 1.0, 1e-14));
}

TEST_CASE("quadrupling n halves the noise floor") {
  const double base = addreg::nu_n(100, 10, 0.1);
  CHECK(close_rel(addreg::nu_n(400, 10, 0.1), base / 2.0, 1e-15));
}

TEST_CASE("homogeneous rates at the pinned corners") {
  // q = 1 wipes the weight exponent: gamma = b n^-1/2, w = 1
  const auto [g1, w1] = addreg::gamma_homogeneous(1.0, 1.0, 2.0, 100);
  CHECK(close_abs(g1, 0.2, 1e-15));
  CHECK(w1 == 1.0);

  const auto [g0, w0] = addreg::gamma_homogeneous(0.0, 1.0, 1.0, 1000);
  CHECK(close_abs(g0, 0.1, 1e-15));
  CHECK(close_abs(w0, 0.1, 1e-15));
}

TEST_CASE("the homogeneous exponent follows the entropy balance") {
  // beta = 0.5, q = 0: gamma ~ n^{-1/2.5}
  const auto [ga, wa] = addreg::gamma_homogeneous(0.0, 0.5, 1.0, 1000);
  const auto [gb, wb] = addreg::gamma_homogeneous(0.0, 0.5, 1.0, 100000);
  (void)wa;
  (void)wb;
  const double slope = std::log(gb / ga) / std::log(100.0);
  CHECK(close_abs(slope, -0.4, 1e-12));
}

TEST_CASE("adaptive schedule when the noise floor matches the rate") {
  // p / epsilon = e^10 at n = 1000 puts nu exactly at gamma_q
  const double eps = 10.0 * std::exp(-10.0);
  const addreg::RateParams rp = addreg::rates_scale_adaptive(0.0, 1.0, 1.0, 1000, 10, eps);
  CHECK(close_abs(rp.nu, 0.1, 1e-13));
  CHECK(close_abs(rp.gamma_q, 0.1, 1e-15));
  CHECK(close_abs(rp.w_star, 0.1, 1e-13));
  CHECK(close_abs(rp.gamma_star, 0.1, 1e-13));
}

TEST_CASE("adaptive schedule in the dimension-dominated branch") {
  // p / epsilon = e^40 at n = 1000: nu = 0.2 caps the weight and shrinks gamma
  const double eps = 10.0 * std::exp(-40.0);
  const addreg::RateParams rp = addreg::rates_scale_adaptive(0.0, 1.0, 1.0, 1000, 10, eps);
  CHECK(close_abs(rp.nu, 0.2, 1e-13));
  CHECK(close_abs(rp.w_star, 0.2, 1e-12));
  CHECK(close_abs(rp.gamma_star, 0.07071067811865475, 1e-12));
}

TEST_CASE("adaptive schedule at q = 1 has unit weight and the root-n gamma") {
  const addreg::RateParams rp = addreg::rates_scale_adaptive(1.0, 0.7, 3.0, 400, 20, 0.1);
  CHECK(rp.w_star == 1.0);
  CHECK(close_abs(rp.gamma_star, 0.15, 1e-14));
}

TEST_CASE("the adaptive branches flip exactly at nu = gamma_q") {
  // beta = 1, b = 1, q = 0: the cap equals gamma_q exactly when nu does
  for (std::size_t n : {512u, 2048u}) {
    const auto [gq, wq] = addreg::gamma_homogeneous(0.0, 1.0, 1.0, n);
    (void)wq;
    // small p keeps nu below gamma_q: rate-dominated branch
    const addreg::RateParams lo = addreg::rates_scale_adaptive(0.0, 1.0, 1.0, n, 2, 0.9);
    REQUIRE(lo.nu < gq);
    CHECK(lo.gamma_star == gq);
    CHECK(lo.w_star == wq);
    // huge p pushes nu above gamma_q: dimension-dominated branch
    const addreg::RateParams hi =
        addreg::rates_scale_adaptive(0.0, 1.0, 1.0, n, 20000000, 0.01);
    REQUIRE(hi.nu > gq);
    CHECK(close_rel(hi.w_star, hi.nu, 1e-15));
    CHECK(hi.gamma_star <= gq);
  }
}

TEST_CASE("the capped pair never loosens the homogeneous pair") {
  std::mt19937_64 eng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double q = unif(eng);
    const double beta = 0.25 + 1.5 * unif(eng);
    const double b = 0.5 + 4.0 * unif(eng);
    const std::size_t n = 50 + eng() % 100000;
    const std::size_t p = 2 + eng() % 1000000;
    const double eps = 0.01 + 0.9 * unif(eng);
    const addreg::RateParams rp = addreg::rates_scale_adaptive(q, beta, b, n, p, eps);
    CHECK(rp.gamma_star <= rp.gamma_q * (1.0 + 1e-15));
    CHECK(rp.w_star >= rp.w_q * (1.0 - 1e-15));
    // the cap inequality tying the weight to the attainable level
    CHECK(rp.w_star <= std::pow(rp.gamma_star + rp.nu, 1.0 - q) * (1.0 + 1e-12));
  }
}

TEST_CASE("matched norm bounds collapse the dependent schedule") {
  std::mt19937_64 eng(8);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double q = unif(eng);
    const double beta = 0.25 + 1.5 * unif(eng);
    const double b = 0.5 + 4.0 * unif(eng);
    const std::size_t n = 50 + eng() % 10000;
    const std::size_t p = 2 + eng() % 10000;
    const double eps = 0.01 + 0.9 * unif(eng);
    const double m = 0.25 + 4.0 * unif(eng);
    const addreg::RateParams ad = addreg::rates_scale_adaptive(q, beta, b, n, p, eps);
    const addreg::RateParams de =
        addreg::rates_scale_dependent(q, beta, b, n, p, eps, m, m);
    CHECK(close_abs(ad.w_star, de.w_star, 1e-12));
    CHECK(close_abs(ad.gamma_star, de.gamma_star, 1e-12));
    CHECK(close_abs(ad.nu, de.nu, 0.0));
  }
}

TEST_CASE("a size-to-smoothness ratio of eight tilts gamma by a half") {
  // beta = 1, q = 0: gamma' = gamma_q 8^{-1/3} = 0.05, and with p/eps = e
  // the root-n cap is slack, so the tilted values come through unchanged
  const double eps = std::exp(-1.0);
  const addreg::RateParams rp =
      addreg::rates_scale_dependent(0.0, 1.0, 1.0, 1000, 1, eps, 1.0, 8.0);
  CHECK(close_abs(rp.gamma_star, 0.05, 1e-12));
  CHECK(close_abs(rp.w_star, 0.4, 1e-12));
}

TEST_CASE("the dependent weight is monotone in the norm ratio") {
  double prev = 0.0;
  for (double ratio : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    const addreg::RateParams rp =
        addreg::rates_scale_dependent(0.0, 1.0, 1.0, 1000, 10, 0.1, 1.0, ratio);
    CHECK(rp.w_star >= prev - 1e-15);
    prev = rp.w_star;
  }
}

TEST_CASE("class exponents for the four standard classes") {
  const addreg::ClassExponents bv1 =
      addreg::class_exponents({addreg::ClassKind::BoundedVariation, 1});
  CHECK(bv1.beta == 1.0);
  CHECK(bv1.tau == 1.0);
  const addreg::ClassExponents sob2 =
      addreg::class_exponents({addreg::ClassKind::SobolevL2, 2});
  CHECK(sob2.beta == 0.5);
  CHECK(sob2.tau == 0.25);
  const addreg::ClassExponents sob1 =
      addreg::class_exponents({addreg::ClassKind::SobolevL2, 1});
  CHECK(sob1.beta == 1.0);
  CHECK(sob1.tau == 0.5);
  const addreg::ClassExponents bv2 =
      addreg::class_exponents({addreg::ClassKind::BoundedVariation, 2});
  CHECK(bv2.beta == 0.5);
  CHECK(close_abs(bv2.tau, 1.0 / 3.0, 1e-16));
}

TEST_CASE("plans assemble the per-class levels from the shared knobs") {
  const addreg::Dataset data = grid_data(200, 3);
  const std::vector<addreg::ComponentClass> classes{
      {addreg::ClassKind::BoundedVariation, 1},
      {addreg::ClassKind::SobolevL2, 2},
      {addreg::ClassKind::BoundedVariation, 2},
  };
  const double c1 = 0.8;
  const double eps = 0.07;
  const addreg::PenaltyPlan plan =
      addreg::build_plan(data, classes, 0.3, c1, eps, 2.0,
                         addreg::TuningVariant::adaptive(), 1.5);
  REQUIRE(plan.p() == 3);
  CHECK_NOTHROW(plan.validate());
  for (std::size_t j = 0; j < 3; ++j) {
    const double beta = addreg::class_exponents(classes[j]).beta;
    const addreg::RateParams rp =
        addreg::rates_scale_adaptive(0.3, beta, 1.5, data.n(), 3, eps);
    CHECK(close_rel(plan.lambda[j], c1 * (rp.gamma_star + rp.nu), 1e-15));
    CHECK(close_rel(plan.rho[j], plan.lambda[j] * std::min(rp.w_star, 1.0), 1e-15));
    CHECK(plan.w[j] <= 1.0);
    CHECK(plan.w[j] > 0.0);
  }
  // shared knobs are echoed into the plan
  CHECK(plan.c1 == c1);
  CHECK(plan.epsilon == eps);
  CHECK(plan.a0 == 2.0);
  CHECK(plan.q == 0.3);
  CHECK(plan.b0star == 1.5);
}

TEST_CASE("the pinned penalty levels in the dimension-dominated corner") {
  // n = 1000, one bounded-variation component, p / epsilon = e^40, c1 = 1
  const addreg::Dataset data = grid_data(1000, 1);
  const addreg::PenaltyPlan plan = addreg::build_plan(
      data, {{addreg::ClassKind::BoundedVariation, 1}}, 0.0, 1.0, std::exp(-40.0), 2.0,
      addreg::TuningVariant::adaptive());
  CHECK(close_abs(plan.lambda[0], 0.27071067811865475, 1e-12));
  CHECK(close_abs(plan.rho[0], 0.05414213562373095, 1e-12));
}

TEST_CASE("a zero penalty scale produces the all-zero plan") {
  const addreg::Dataset data = grid_data(100, 2);
  const std::vector<addreg::ComponentClass> classes(
      2, addreg::ComponentClass{addreg::ClassKind::BoundedVariation, 1});
  const addreg::PenaltyPlan plan =
      addreg::build_plan(data, classes, 0.0, 0.0, 0.1, 2.0,
                         addreg::TuningVariant::adaptive());
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(plan.lambda[j] == 0.0);
    CHECK(plan.rho[j] == 0.0);
  }
}

TEST_CASE("the penalty scale acts linearly on the levels") {
  const addreg::Dataset data = grid_data(150, 2);
  const std::vector<addreg::ComponentClass> classes{
      {addreg::ClassKind::BoundedVariation, 1}, {addreg::ClassKind::SobolevL2, 2}};
  const addreg::PenaltyPlan one =
      addreg::build_plan(data, classes, 0.2, 1.0, 0.1, 2.0,
                         addreg::TuningVariant::adaptive());
  const addreg::PenaltyPlan two =
      addreg::build_plan(data, classes, 0.2, 2.0, 0.1, 2.0,
                         addreg::TuningVariant::adaptive());
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(close_rel(two.lambda[j], 2.0 * one.lambda[j], 1e-15));
    CHECK(close_rel(two.rho[j], 2.0 * one.rho[j], 1e-15));
  }
}

TEST_CASE("the dependent variant reaches the plan assembly") {
  const addreg::Dataset data = grid_data(120, 2);
  const std::vector<addreg::ComponentClass> classes(
      2, addreg::ComponentClass{addreg::ClassKind::BoundedVariation, 1});
  const addreg::PenaltyPlan same =
      addreg::build_plan(data, classes, 0.0, 1.0, 0.1, 2.0,
                         addreg::TuningVariant::dependent(2.0, 2.0));
  const addreg::PenaltyPlan adaptive =
      addreg::build_plan(data, classes, 0.0, 1.0, 0.1, 2.0,
                         addreg::TuningVariant::adaptive());
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(close_abs(same.lambda[j], adaptive.lambda[j], 1e-12));
    CHECK(close_abs(same.rho[j], adaptive.rho[j], 1e-12));
  }
}

TEST_CASE("the predicted error exponent and its monotonicity") {
  CHECK(close_abs(addreg::error_rate_exponent(0.0, 1.0), -2.0 / 3.0, 1e-15));
  CHECK(close_abs(addreg::error_rate_exponent(1.0, 1.0), -0.5, 1e-15));
  for (double beta : {0.5, 1.0, 1.5}) {
    double prev = -10.0;
    for (double q = 0.0; q <= 1.0; q += 0.125) {
      const double e = addreg::error_rate_exponent(q, beta);
      // the squared-error rate flattens (magnitude shrinks) as q grows
      CHECK(e > prev);
      CHECK(e < 0.0);
      prev = e;
    }
  }
}

TEST_CASE("the noise-scale plug-in recovers a known sigma") {
  std::mt19937_64 eng(12);
  std::normal_distribution<double> gauss(0.0, 1.5);
  std::vector<double> y(4000);
  for (double& v : y) v = gauss(eng);
  const double est = addreg::noise_scale_mad(y);
  CHECK(est > 1.2);
  CHECK(est < 1.8);

  std::vector<double> doubled(y);
  for (double& v : doubled) v *= 2.0;
  CHECK(close_rel(addreg::noise_scale_mad(doubled), 2.0 * est, 1e-12));
}

}  // TEST_SUITE("tuning")
