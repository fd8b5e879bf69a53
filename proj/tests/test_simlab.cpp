#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"

#include "addreg/model.hpp"
#include "addreg/simlab.hpp"
#include "addreg/solver.hpp"
#include "oracles.hpp"

namespace {

bool close_abs(double a, double b, double tol) { return std::abs(a - b) <= tol; }

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

addreg::Shape step_shape(int jumps) {
  addreg::Shape s;
  s.kind = addreg::Shape::Kind::Step;
  s.jumps = jumps;
  return s;
}

addreg::Shape zigzag_shape(int jumps) {
  addreg::Shape s;
  s.kind = addreg::Shape::Kind::PiecewiseLinear;
  s.jumps = jumps;
  return s;
}

addreg::Shape sine_shape(int cycles) {
  addreg::Shape s;
  s.kind = addreg::Shape::Kind::Sine;
  s.cycles = cycles;
  return s;
}

addreg::Scenario base_scenario() {
  addreg::Scenario s;
  s.n = 64;
  s.p = 2;
  s.active = {0};
  s.shapes = {step_shape(1)};
  s.amplitudes = {2.0};
  s.noise_sd = 0.5;
  s.seed = 11;
  return s;
}

}  // namespace

TEST_SUITE("simlab") {

TEST_CASE("the generator stream is pinned and reproducible") {
  addreg::Rng a(42);
  addreg::Rng b(42);
  for (int i = 0; i < 200; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 200; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("the normal draws have the right first two moments") {
  addreg::Rng rng(9);
  double s1 = 0.0;
  double s2 = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s1 += z;
    s2 += z * z;
  }
  const double mean = s1 / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("seed mixing separates nearby streams") {
  CHECK(addreg::mix_seed(1, 2, 3) == addreg::mix_seed(1, 2, 3));
  CHECK(addreg::mix_seed(1, 2, 3) != addreg::mix_seed(1, 2, 4));
  CHECK(addreg::mix_seed(1, 2, 3) != addreg::mix_seed(1, 3, 3));
  CHECK(addreg::mix_seed(1, 2, 3) != addreg::mix_seed(2, 2, 3));
}

TEST_CASE("covariate densities are the stated ones") {
  CHECK(addreg::dist_density(addreg::CovariateDist::Uniform, 0.3) == 1.0);
  CHECK(addreg::dist_density(addreg::CovariateDist::TiltedLinear, 0.2) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(addreg::dist_density(addreg::CovariateDist::TiltedLinear, 1.0) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("tilted sampling matches its density") {
  addreg::Rng rng(5);
  double acc = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const double x = addreg::dist_sample(addreg::CovariateDist::TiltedLinear, rng);
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.0);
    acc += x;
  }
  // mean of the 1/2 + x density is 7/12
  CHECK(close_abs(acc / n, 7.0 / 12.0, 0.01));
}

TEST_CASE("truth components are centered and scaled to their amplitude") {
  const std::vector<addreg::Shape> shapes{step_shape(2), zigzag_shape(3), sine_shape(2)};
  for (const auto dist : {addreg::CovariateDist::Uniform, addreg::CovariateDist::TiltedLinear}) {
    for (const auto& shape : shapes) {
      const addreg::ComponentFit g = addreg::build_truth_component(shape, dist, 1.5);
      CHECK(close_abs(addreg::dist_mean(g, dist), 0.0, 1e-12));
      CHECK(close_rel(addreg::q_norm(g, dist), 1.5, 1e-12));
    }
  }
}

TEST_CASE("population moments agree with an independent quadrature") {
  const std::vector<addreg::Shape> shapes{step_shape(2), zigzag_shape(3), sine_shape(1)};
  for (const auto dist : {addreg::CovariateDist::Uniform, addreg::CovariateDist::TiltedLinear}) {
    for (const auto& shape : shapes) {
      const addreg::ComponentFit g = addreg::build_truth_component(shape, dist, 1.5);
      CHECK(close_abs(oracle::simpson_moment(g, dist, 1), 0.0, 1e-6));
      const double second = oracle::simpson_moment(g, dist, 2);
      CHECK(close_abs(addreg::q_norm(g, dist), std::sqrt(second), 1e-6));
    }
  }
}

TEST_CASE("a noiseless draw reproduces the truth exactly") {
  addreg::Scenario s = base_scenario();
  s.p = 1;
  s.noise_sd = 0.0;
  const addreg::GeneratedData gen = addreg::generate(s);
  REQUIRE(gen.data.y.size() == s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    CHECK(gen.data.y[i] == addreg::evaluate_model(gen.truth, {&gen.data.x[0][i], 1}));
  }
}

TEST_CASE("the same seed draws the same dataset bit for bit") {
  const addreg::Scenario s = base_scenario();
  const addreg::GeneratedData a = addreg::generate(s);
  const addreg::GeneratedData b = addreg::generate(s);
  for (std::size_t j = 0; j < s.p; ++j) {
    for (std::size_t i = 0; i < s.n; ++i) CHECK(a.data.x[j][i] == b.data.x[j][i]);
  }
  for (std::size_t i = 0; i < s.n; ++i) CHECK(a.data.y[i] == b.data.y[i]);

  addreg::Scenario other = s;
  other.seed = s.seed + 1;
  const addreg::GeneratedData c = addreg::generate(other);
  bool all_equal = true;
  for (std::size_t i = 0; i < s.n; ++i) all_equal = all_equal && (a.data.y[i] == c.data.y[i]);
  CHECK_FALSE(all_equal);
}

TEST_CASE("generated truths sit at the active slots with zero intercept") {
  addreg::Scenario s = base_scenario();
  s.p = 3;
  s.active = {0, 2};
  s.shapes = {step_shape(1), sine_shape(1)};
  s.amplitudes = {2.0, 1.0};
  const addreg::GeneratedData gen = addreg::generate(s);
  CHECK(gen.truth.intercept == 0.0);
  REQUIRE(gen.truth.components.size() == 3);
  CHECK(gen.truth.components[0].has_value());
  CHECK_FALSE(gen.truth.components[1].has_value());
  CHECK(gen.truth.components[2].has_value());
  REQUIRE(gen.component_norms.size() == 2);
  CHECK(close_rel(gen.component_norms[0], 2.0, 1e-12));
  CHECK(close_rel(gen.component_norms[1], 1.0, 1e-12));
}

TEST_CASE("the reported budgets follow the component norms") {
  addreg::Scenario s = base_scenario();
  s.p = 3;
  s.active = {0, 2};
  s.shapes = {step_shape(1), sine_shape(1)};
  s.amplitudes = {2.0, 1.0};

  s.q = 0.0;
  const addreg::GeneratedData at0 = addreg::generate(s);
  CHECK(at0.mq == 2.0);

  s.q = 0.5;
  const addreg::GeneratedData athalf = addreg::generate(s);
  CHECK(close_abs(athalf.mq, std::sqrt(2.0) + 1.0, 1e-12));

  double tv = 0.0;
  for (const auto& comp : athalf.truth.components) {
    if (comp) tv += addreg::tv_seminorm(comp->values, comp->knots, 1);
  }
  CHECK(close_rel(athalf.mf, tv, 1e-12));
}

TEST_CASE("in-sample error matches a direct evaluation") {
  const addreg::Scenario s = base_scenario();
  const addreg::GeneratedData gen = addreg::generate(s);

  CHECK(addreg::error_n(gen.truth, gen.truth, gen.data) == 0.0);

  addreg::AdditiveFit shifted = gen.truth;
  shifted.intercept += 0.7;
  CHECK(close_abs(addreg::error_n(shifted, gen.truth, gen.data), 0.49, 1e-12));

  addreg::AdditiveFit null_fit;
  null_fit.intercept = 0.0;
  null_fit.components.assign(s.p, std::nullopt);
  double acc = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) {
    std::vector<double> row(s.p);
    for (std::size_t j = 0; j < s.p; ++j) row[j] = gen.data.x[j][i];
    const double d = addreg::evaluate_model(null_fit, row) - addreg::evaluate_model(gen.truth, row);
    acc += d * d;
  }
  CHECK(close_rel(addreg::error_n(null_fit, gen.truth, gen.data), acc / static_cast<double>(s.n), 1e-12));
}

TEST_CASE("the population error estimate is exact for constant gaps") {
  const addreg::Scenario s = base_scenario();
  const addreg::GeneratedData gen = addreg::generate(s);

  const addreg::McEstimate zero =
      addreg::error_Q_mc(gen.truth, gen.truth, s.covariate_dist, 2048, 3);
  CHECK(zero.value == 0.0);
  CHECK(zero.stderr_value == 0.0);
  CHECK(zero.n_draws == 2048);

  addreg::AdditiveFit shifted = gen.truth;
  shifted.intercept += 0.5;
  const addreg::McEstimate off =
      addreg::error_Q_mc(shifted, gen.truth, s.covariate_dist, 2048, 3);
  CHECK(close_abs(off.value, 0.25, 1e-14));
  CHECK(off.stderr_value <= 1e-12);
}

TEST_CASE("the population error estimate is coherent and deterministic") {
  addreg::Scenario s = base_scenario();
  s.p = 1;
  s.shapes = {sine_shape(1)};
  const addreg::GeneratedData gen = addreg::generate(s);

  addreg::AdditiveFit null_fit;
  null_fit.intercept = 0.0;
  null_fit.components.assign(1, std::nullopt);

  const double target = addreg::q_norm_sq_additive(gen.truth, s.covariate_dist);
  CHECK(close_rel(target, 4.0, 1e-10));

  const addreg::McEstimate est =
      addreg::error_Q_mc(null_fit, gen.truth, s.covariate_dist, 8192, 21);
  CHECK(est.stderr_value > 0.0);
  CHECK(std::abs(est.value - target) <= 3.0 * est.stderr_value);

  const addreg::McEstimate again =
      addreg::error_Q_mc(null_fit, gen.truth, s.covariate_dist, 8192, 21);
  CHECK(est.value == again.value);
  CHECK(est.stderr_value == again.stderr_value);
}

TEST_CASE("quadrupling the draw count roughly halves the standard error") {
  addreg::Scenario s = base_scenario();
  s.p = 1;
  s.shapes = {sine_shape(1)};
  const addreg::GeneratedData gen = addreg::generate(s);

  addreg::AdditiveFit null_fit;
  null_fit.intercept = 0.0;
  null_fit.components.assign(1, std::nullopt);

  const addreg::McEstimate small =
      addreg::error_Q_mc(null_fit, gen.truth, s.covariate_dist, 2048, 21);
  const addreg::McEstimate big =
      addreg::error_Q_mc(null_fit, gen.truth, s.covariate_dist, 8192, 21);
  const double ratio = small.stderr_value / big.stderr_value;
  CHECK(ratio > 1.6);
  CHECK(ratio < 2.5);
}

TEST_CASE("the centered additive norm adds an intercept in quadrature") {
  addreg::Scenario s = base_scenario();
  s.p = 2;
  s.active = {0, 1};
  s.shapes = {step_shape(1), sine_shape(1)};
  s.amplitudes = {2.0, 1.0};
  const addreg::GeneratedData gen = addreg::generate(s);

  addreg::AdditiveFit lifted = gen.truth;
  lifted.intercept = 0.3;
  const double with = addreg::q_norm_sq_additive(lifted, s.covariate_dist);
  const double without = addreg::q_norm_sq_additive(gen.truth, s.covariate_dist);
  CHECK(close_abs(with - without, 0.09, 1e-12));
  CHECK(close_rel(without, 4.0 + 1.0, 1e-10));
}

TEST_CASE("log-log slope identities") {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  std::vector<double> ys = xs;
  const addreg::SlopeFit unit = addreg::loglog_slope(xs, ys);
  CHECK(close_abs(unit.slope, 1.0, 1e-12));
  CHECK(unit.stderr_value <= 1e-12);

  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = 3.0 * std::pow(xs[i], -0.5);
  const addreg::SlopeFit half = addreg::loglog_slope(xs, ys);
  CHECK(close_abs(half.slope, -0.5, 1e-12));
  CHECK(close_abs(half.intercept, std::log(3.0), 1e-12));

  const std::vector<double> ns{128.0, 256.0, 512.0, 1024.0, 2048.0};
  std::vector<double> errs(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) errs[i] = std::pow(ns[i], -2.0 / 3.0);
  CHECK(close_abs(addreg::loglog_slope(ns, errs).slope, -2.0 / 3.0, 1e-12));
}

TEST_CASE("log-log slope input guards") {
  const std::vector<double> xs{1.0, 2.0, 3.0};
  CHECK_THROWS_AS((void)addreg::loglog_slope(xs, std::vector<double>{1.0, 2.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)addreg::loglog_slope(xs, std::vector<double>{1.0, 0.0, 2.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)addreg::loglog_slope(xs, std::vector<double>{1.0, -2.0, 2.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)addreg::loglog_slope(std::vector<double>{2.0, 2.0, 2.0}, xs),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)addreg::loglog_slope(std::vector<double>{1.0}, std::vector<double>{1.0}),
                  std::invalid_argument);
}

TEST_CASE("the amplitude schedule decays from its scale") {
  const std::vector<double> amps = addreg::decaying_amplitudes(6, 0.5, 2.0);
  REQUIRE(amps.size() == 6);
  CHECK(amps[0] == 2.0);
  for (std::size_t j = 0; j + 1 < amps.size(); ++j) {
    CHECK(amps[j] > amps[j + 1]);
    CHECK(amps[j + 1] > 0.0);
  }
  CHECK_THROWS_AS((void)addreg::decaying_amplitudes(4, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS((void)addreg::decaying_amplitudes(4, 0.5, 0.0), std::invalid_argument);
}

TEST_CASE("scenario validation rejects malformed inputs") {
  const addreg::Scenario good = base_scenario();
  CHECK_NOTHROW(good.validate());

  addreg::Scenario s = good;
  s.n = 1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = good;
  s.p = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = good;
  s.active = {2};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = good;
  s.active = {1, 0};
  s.shapes = {step_shape(1), step_shape(1)};
  s.amplitudes = {1.0, 1.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = good;
  s.shapes.clear();
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = good;
  s.amplitudes = {1.0, 1.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = good;
  s.amplitudes = {-1.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = good;
  s.q = 1.5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = good;
  s.noise_sd = -0.1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("shape validation rejects malformed tables") {
  addreg::Shape s;
  s.kind = addreg::Shape::Kind::CustomTable;
  s.knots = {0.1, 0.5};
  s.values = {1.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.values = {1.0, 2.0};
  CHECK_NOTHROW(s.validate());
  s.knots = {0.5, 0.1};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  addreg::Shape st = step_shape(0);
  CHECK_THROWS_AS(st.validate(), std::invalid_argument);
  addreg::Shape sn = sine_shape(0);
  CHECK_THROWS_AS(sn.validate(), std::invalid_argument);
}

TEST_CASE("a small rate study runs clean and matches its serial twin") {
  addreg::RateStudyConfig cfg;
  cfg.scenario = base_scenario();
  cfg.scenario.seed = 77;
  cfg.n_grid = {64, 128, 256};
  cfg.reps = 3;
  cfg.classes.assign(2, addreg::ComponentClass{addreg::ClassKind::BoundedVariation, 1});
  cfg.c1 = 0.25;
  cfg.n_mc = 1024;
  cfg.parallel = false;
  const addreg::RateStudyResult serial = addreg::rate_study(cfg);

  REQUIRE(serial.grid == cfg.n_grid);
  REQUIRE(serial.reps == 3);
  CHECK_FALSE(serial.degenerate);
  for (std::size_t gi = 0; gi < 3; ++gi) {
    for (std::size_t rep = 0; rep < 3; ++rep) {
      CHECK(serial.failures[gi][rep].empty());
      CHECK(std::isfinite(serial.errors_n[gi][rep]));
      CHECK(serial.errors_n[gi][rep] > 0.0);
      CHECK(std::isfinite(serial.errors_q[gi][rep]));
      CHECK(serial.errors_q[gi][rep] > 0.0);
    }
  }
  CHECK(std::isfinite(serial.slope_n.slope));
  CHECK(serial.slope_n.slope < 0.1);

  cfg.parallel = true;
  const addreg::RateStudyResult parallel = addreg::rate_study(cfg);
  for (std::size_t gi = 0; gi < 3; ++gi) {
    for (std::size_t rep = 0; rep < 3; ++rep) {
      CHECK(serial.errors_n[gi][rep] == parallel.errors_n[gi][rep]);
      CHECK(serial.errors_q[gi][rep] == parallel.errors_q[gi][rep]);
    }
  }
  CHECK(serial.slope_n.slope == parallel.slope_n.slope);
  CHECK(serial.slope_q.slope == parallel.slope_q.slope);
}

TEST_CASE("noiseless unpenalized studies flag themselves as degenerate") {
  addreg::RateStudyConfig cfg;
  cfg.scenario = base_scenario();
  cfg.scenario.noise_sd = 0.0;
  cfg.scenario.amplitudes = {1.0};
  cfg.n_grid = {16, 24, 32};
  cfg.reps = 3;
  cfg.classes.assign(2, addreg::ComponentClass{addreg::ClassKind::BoundedVariation, 1});
  cfg.c1 = 0.0;
  cfg.n_mc = 256;
  cfg.parallel = false;
  const addreg::RateStudyResult res = addreg::rate_study(cfg);
  CHECK(res.degenerate);
  CHECK(std::isnan(res.slope_n.slope));
}

TEST_CASE("per-cell fitting failures are recorded rather than fatal") {
  addreg::RateStudyConfig cfg;
  cfg.scenario = base_scenario();
  cfg.n_grid = {16, 24, 32};
  cfg.reps = 3;
  cfg.classes.assign(2, addreg::ComponentClass{addreg::ClassKind::BoundedVariation, 1});
  cfg.fit_options.max_sweeps = 0;
  cfg.parallel = false;
  const addreg::RateStudyResult res = addreg::rate_study(cfg);
  for (std::size_t gi = 0; gi < 3; ++gi) {
    for (std::size_t rep = 0; rep < 3; ++rep) {
      CHECK_FALSE(res.failures[gi][rep].empty());
      CHECK(std::isnan(res.errors_n[gi][rep]));
    }
  }
  CHECK(res.degenerate);
}

TEST_CASE("rate study validation rejects malformed configs") {
  addreg::RateStudyConfig good;
  good.scenario = base_scenario();
  good.n_grid = {16, 24, 32};
  good.classes.assign(2, addreg::ComponentClass{addreg::ClassKind::BoundedVariation, 1});
  CHECK_NOTHROW(good.validate());

  addreg::RateStudyConfig cfg = good;
  cfg.n_grid = {16, 24};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = good;
  cfg.n_grid = {16, 16, 32};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = good;
  cfg.reps = 2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = good;
  cfg.classes.pop_back();
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

}  // TEST_SUITE("simlab")
