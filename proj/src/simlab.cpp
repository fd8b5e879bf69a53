#include "addreg/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace addreg {

namespace {

// 5-point Gauss-Legendre on [-1, 1]; exact through degree 9, comfortably
// above the degree-7 integrands the spline shapes produce
struct Gauss5 {
  double node[5];
  double weight[5];
  Gauss5() {
    const double s = std::sqrt(70.0);
    const double a = std::sqrt(5.0 - 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
    const double b = std::sqrt(5.0 + 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
    node[0] = -b;
    node[1] = -a;
    node[2] = 0.0;
    node[3] = a;
    node[4] = b;
    weight[0] = weight[4] = (322.0 - 13.0 * s) / 900.0;
    weight[1] = weight[3] = (322.0 + 13.0 * s) / 900.0;
    weight[2] = 128.0 / 225.0;
  }
};

// integrate transform(g(x)) * density(x) over [0, 1], cutting panels at
// the knots so every panel sees a single polynomial piece
template <class F>
double panel_integrate(const ComponentFit& fit, CovariateDist dist, F&& transform) {
  static const Gauss5 rule;
  std::vector<double> cuts;
  cuts.reserve(fit.knots.size() + 2);
  cuts.push_back(0.0);
  for (double k : fit.knots) {
    if (k > 0.0 && k < 1.0) cuts.push_back(k);
  }
  cuts.push_back(1.0);

  const ComponentEvaluator eval(fit);
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double lo = cuts[s];
    const double hi = cuts[s + 1];
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    double panel = 0.0;
    for (int g = 0; g < 5; ++g) {
      const double x = mid + half * rule.node[g];
      panel += rule.weight[g] * transform(eval(x)) * dist_density(dist, x);
    }
    total += half * panel;
  }
  return total;
}

double square(double v) { return v * v; }

std::vector<const ComponentFit*> component_ptrs(const AdditiveFit& fit,
                                                std::size_t p) {
  std::vector<const ComponentFit*> out(p, nullptr);
  for (std::size_t j = 0; j < fit.components.size() && j < p; ++j) {
    if (fit.components[j]) out[j] = &*fit.components[j];
  }
  return out;
}

}  // namespace

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - uniform() lies in (0, 1], so the log is finite
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(ang);
  has_spare_ = true;
  return r * std::cos(ang);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed;
  z += 0x9E3779B97F4A7C15ULL * (a + 1);
  z += 0xC2B2AE3D27D4EB4FULL * (b + 1);
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

double dist_density(CovariateDist dist, double x) {
  switch (dist) {
    case CovariateDist::Uniform:
      return (x >= 0.0 && x <= 1.0) ? 1.0 : 0.0;
    case CovariateDist::TiltedLinear:
      return (x >= 0.0 && x <= 1.0) ? 0.5 + x : 0.0;
  }
  return 0.0;
}

double dist_sample(CovariateDist dist, Rng& rng) {
  const double u = rng.uniform();
  switch (dist) {
    case CovariateDist::Uniform:
      return u;
    case CovariateDist::TiltedLinear:
      // invert the CDF (x + x^2) / 2
      return 0.5 * (std::sqrt(1.0 + 8.0 * u) - 1.0);
  }
  return u;
}

void Shape::validate() const {
  const bool tabular = !knots.empty() || !values.empty();
  if (tabular || kind == Kind::CustomTable) {
    if (knots.empty() || knots.size() != values.size()) {
      throw std::invalid_argument("shape table needs matching knots and values");
    }
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
      if (!(knots[i] < knots[i + 1])) {
        throw std::invalid_argument("shape knots must be strictly increasing");
      }
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw std::invalid_argument("shape values must be finite");
    }
    for (double k : knots) {
      if (!std::isfinite(k)) throw std::invalid_argument("shape knots must be finite");
    }
    return;
  }
  switch (kind) {
    case Kind::Step:
    case Kind::PiecewiseLinear:
      if (jumps < 1) throw std::invalid_argument("shape needs at least one jump");
      break;
    case Kind::Sine:
      if (cycles < 1) throw std::invalid_argument("sine shape needs at least one cycle");
      break;
    case Kind::CustomTable:
      break;  // handled above
  }
}

std::vector<double> decaying_amplitudes(std::size_t count, double q, double scale) {
  if (!(q > 0.0) || !std::isfinite(q)) {
    throw std::invalid_argument("amplitude schedule needs q > 0");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("amplitude schedule needs a positive scale");
  }
  std::vector<double> out(count);
  const double expo = (1.0 / q) * 1.01;
  for (std::size_t j = 0; j < count; ++j) {
    out[j] = scale * std::pow(static_cast<double>(j + 1), -expo);
  }
  return out;
}

void Scenario::validate() const {
  if (n < 2) throw std::invalid_argument("scenario needs n >= 2");
  if (p < 1) throw std::invalid_argument("scenario needs p >= 1");
  if (shapes.size() != active.size()) {
    throw std::invalid_argument("scenario needs one shape per active component");
  }
  for (std::size_t k = 0; k < active.size(); ++k) {
    if (active[k] >= p) {
      throw std::invalid_argument("active component index out of range");
    }
    if (k > 0 && !(active[k - 1] < active[k])) {
      throw std::invalid_argument("active indices must be strictly increasing");
    }
  }
  if (!amplitudes.empty() && amplitudes.size() != active.size()) {
    throw std::invalid_argument("amplitudes must align with the active set");
  }
  for (double a : amplitudes) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw std::invalid_argument("amplitudes must be positive");
    }
  }
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("scenario q must lie in [0, 1]");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
    throw std::invalid_argument("noise_sd must be nonnegative");
  }
  for (const Shape& s : shapes) s.validate();
}

double dist_mean(const ComponentFit& fit, CovariateDist dist) {
  return panel_integrate(fit, dist, [](double g) { return g; });
}

double q_norm(const ComponentFit& fit, CovariateDist dist) {
  return std::sqrt(std::max(0.0, panel_integrate(fit, dist, square)));
}

ComponentFit build_truth_component(const Shape& shape, CovariateDist dist,
                                   double amplitude) {
  shape.validate();
  ComponentFit out;
  const bool tabular = !shape.knots.empty();
  switch (shape.kind) {
    case Shape::Kind::Step: {
      if (tabular) {
        out.knots = shape.knots;
        out.values = shape.values;
      } else {
        // jump points at i / (jumps + 1), levels alternating +-1
        const int k = shape.jumps;
        out.knots.resize(static_cast<std::size_t>(k) + 1);
        out.values.resize(static_cast<std::size_t>(k) + 1);
        for (int i = 0; i <= k; ++i) {
          out.knots[static_cast<std::size_t>(i)] = static_cast<double>(i) / (k + 1);
          out.values[static_cast<std::size_t>(i)] = (i % 2 == 0) ? 1.0 : -1.0;
        }
      }
      out.rule = EvalRule::StepRightContinuous;
      out.cls = ComponentClass{ClassKind::BoundedVariation, 1};
      break;
    }
    case Shape::Kind::PiecewiseLinear: {
      if (tabular) {
        out.knots = shape.knots;
        out.values = shape.values;
      } else {
        // zigzag: zero at the endpoints, alternating +-1 peaks between
        const int k = shape.jumps;
        out.knots.resize(static_cast<std::size_t>(k) + 2);
        out.values.resize(static_cast<std::size_t>(k) + 2);
        for (int i = 0; i <= k + 1; ++i) {
          out.knots[static_cast<std::size_t>(i)] = static_cast<double>(i) / (k + 1);
          double v = 0.0;
          if (i > 0 && i <= k) v = (i % 2 == 1) ? 1.0 : -1.0;
          out.values[static_cast<std::size_t>(i)] = v;
        }
      }
      out.rule = EvalRule::PiecewiseLinear;
      out.cls = ComponentClass{ClassKind::BoundedVariation, 2};
      break;
    }
    case Shape::Kind::Sine: {
      const std::size_t kGrid = 257;
      out.knots.resize(kGrid);
      out.values.resize(kGrid);
      for (std::size_t i = 0; i < kGrid; ++i) {
        const double x = static_cast<double>(i) / (kGrid - 1);
        out.knots[i] = x;
        out.values[i] = std::sin(2.0 * std::numbers::pi * shape.cycles * x);
      }
      out.rule = EvalRule::PiecewiseLinear;
      out.cls = ComponentClass{ClassKind::BoundedVariation, 2};
      break;
    }
    case Shape::Kind::CustomTable: {
      out.knots = shape.knots;
      out.values = shape.values;
      out.rule = shape.rule;
      out.cls = (shape.rule == EvalRule::NaturalSpline)
                    ? ComponentClass{ClassKind::SobolevL2, 2}
                    : ComponentClass{ClassKind::BoundedVariation,
                                     shape.rule == EvalRule::StepRightContinuous ? 1 : 2};
      break;
    }
  }

  out.multiplicities.assign(out.knots.size(), 1.0);

  const double shift = dist_mean(out, dist);
  for (double& v : out.values) v -= shift;

  if (amplitude > 0.0) {
    const double qn = q_norm(out, dist);
    if (!(qn > 0.0)) {
      throw std::invalid_argument("shape is constant under the covariate law; cannot scale");
    }
    const double scale = amplitude / qn;
    for (double& v : out.values) v *= scale;
  }

  out.seminorm_value = tv_seminorm(out.values, out.knots, 1);
  out.empnorm_value = empirical_norm(out.values, out.multiplicities);
  return out;
}

GeneratedData generate(const Scenario& scenario) {
  scenario.validate();
  Rng rng(scenario.seed);

  GeneratedData out;
  out.data.x.assign(scenario.p, std::vector<double>(scenario.n));
  out.data.column_names.resize(scenario.p);
  for (std::size_t j = 0; j < scenario.p; ++j) {
    out.data.column_names[j] = "x" + std::to_string(j + 1);
    for (std::size_t i = 0; i < scenario.n; ++i) {
      out.data.x[j][i] = dist_sample(scenario.covariate_dist, rng);
    }
  }

  out.truth.intercept = 0.0;
  out.truth.components.assign(scenario.p, std::nullopt);
  out.component_norms.resize(scenario.active.size());
  for (std::size_t k = 0; k < scenario.active.size(); ++k) {
    const double amp = scenario.amplitudes.empty() ? 0.0 : scenario.amplitudes[k];
    ComponentFit g =
        build_truth_component(scenario.shapes[k], scenario.covariate_dist, amp);
    const double qn = q_norm(g, scenario.covariate_dist);
    out.component_norms[k] = qn;
    out.mf += g.seminorm_value;
    out.mq += (scenario.q == 0.0) ? 1.0 : std::pow(qn, scenario.q);
    out.truth.components[scenario.active[k]] = std::move(g);
  }

  std::vector<double> signal = predict(out.truth, out.data.x);
  out.data.y.resize(scenario.n);
  const double sqrt3 = std::sqrt(3.0);
  for (std::size_t i = 0; i < scenario.n; ++i) {
    const double eps = scenario.bounded_noise ? sqrt3 * (2.0 * rng.uniform() - 1.0)
                                              : rng.normal();
    out.data.y[i] = signal[i] + scenario.noise_sd * eps;
  }
  out.data.validate();
  return out;
}

double error_n(const AdditiveFit& fit, const AdditiveFit& truth, const Dataset& data) {
  data.validate();
  const std::vector<double> yf = predict(fit, data.x);
  const std::vector<double> yt = predict(truth, data.x);
  double acc = 0.0;
  for (std::size_t i = 0; i < yf.size(); ++i) {
    const double d = yf[i] - yt[i];
    acc += d * d;
  }
  return acc / static_cast<double>(yf.size());
}

McEstimate error_Q_mc(const AdditiveFit& fit, const AdditiveFit& truth,
                      CovariateDist dist, std::size_t n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw std::invalid_argument("error_Q_mc needs at least one draw");
  const std::size_t p = std::max(fit.components.size(), truth.components.size());
  const std::vector<const ComponentFit*> fc = component_ptrs(fit, p);
  const std::vector<const ComponentFit*> tc = component_ptrs(truth, p);

  std::vector<std::optional<ComponentEvaluator>> fe(p), te(p);
  for (std::size_t j = 0; j < p; ++j) {
    if (fc[j]) fe[j].emplace(*fc[j]);
    if (tc[j]) te[j].emplace(*tc[j]);
  }

  // fixed-size blocks with their own engines: the combined sums do not
  // depend on how many threads processed the blocks
  constexpr std::size_t kBlock = 1024;
  const std::size_t nblocks = (n_mc + kBlock - 1) / kBlock;
  std::vector<double> sum1(nblocks, 0.0);
  std::vector<double> sum2(nblocks, 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(nblocks); ++bi) {
    const std::size_t b = static_cast<std::size_t>(bi);
    Rng rng(mix_seed(seed, b, 0x0badb10cULL));
    const std::size_t count = std::min(kBlock, n_mc - b * kBlock);
    double s1 = 0.0;
    double s2 = 0.0;
    for (std::size_t t = 0; t < count; ++t) {
      double d = fit.intercept - truth.intercept;
      for (std::size_t j = 0; j < p; ++j) {
        const double x = dist_sample(dist, rng);
        if (fe[j]) d += (*fe[j])(x);
        if (te[j]) d -= (*te[j])(x);
      }
      const double d2 = d * d;
      s1 += d2;
      s2 += d2 * d2;
    }
    sum1[b] = s1;
    sum2[b] = s2;
  }

  double s1 = 0.0;
  double s2 = 0.0;
  for (std::size_t b = 0; b < nblocks; ++b) {
    s1 += sum1[b];
    s2 += sum2[b];
  }
  const double nmc = static_cast<double>(n_mc);
  McEstimate est;
  est.n_draws = n_mc;
  est.value = s1 / nmc;
  const double var = std::max(0.0, s2 / nmc - est.value * est.value);
  est.stderr_value = std::sqrt(var / nmc);
  return est;
}

double q_norm_sq_additive(const AdditiveFit& fit, CovariateDist dist) {
  double acc = fit.intercept * fit.intercept;
  for (const auto& comp : fit.components) {
    if (comp) acc += panel_integrate(*comp, dist, square);
  }
  return acc;
}

SlopeFit loglog_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw std::invalid_argument("slope fit needs two or more matched points");
  }
  const std::size_t k = xs.size();
  std::vector<double> lx(k), ly(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) {
      throw std::invalid_argument("slope fit needs positive inputs");
    }
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(k);
  my /= static_cast<double>(k);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("slope fit needs distinct x values");

  SlopeFit out;
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double r = ly[i] - (out.intercept + out.slope * lx[i]);
    ssr += r * r;
  }
  out.stderr_value =
      (k > 2) ? std::sqrt(ssr / static_cast<double>(k - 2) / sxx) : 0.0;
  return out;
}

void RateStudyConfig::validate() const {
  if (n_grid.size() < 3) throw std::invalid_argument("rate study needs >= 3 grid points");
  for (std::size_t i = 0; i + 1 < n_grid.size(); ++i) {
    if (!(n_grid[i] < n_grid[i + 1])) {
      throw std::invalid_argument("rate study grid must be strictly increasing");
    }
  }
  if (reps < 3) throw std::invalid_argument("rate study needs >= 3 replicates");
  if (classes.size() != scenario.p) {
    throw std::invalid_argument("rate study needs one fitting class per covariate");
  }
  Scenario probe = scenario;
  probe.n = n_grid.front();
  probe.validate();
}

RateStudyResult rate_study(const RateStudyConfig& config) {
  config.validate();

  const std::size_t ng = config.n_grid.size();
  RateStudyResult res;
  res.grid = config.n_grid;
  res.reps = config.reps;
  res.errors_n.assign(ng, std::vector<double>(config.reps,
                                             std::numeric_limits<double>::quiet_NaN()));
  res.errors_q = res.errors_n;
  res.failures.assign(ng, std::vector<std::string>(config.reps));

  const std::ptrdiff_t cells = static_cast<std::ptrdiff_t>(ng * config.reps);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (config.parallel)
#endif
  for (std::ptrdiff_t c = 0; c < cells; ++c) {
    const std::size_t gi = static_cast<std::size_t>(c) / config.reps;
    const std::size_t rep = static_cast<std::size_t>(c) % config.reps;
    Scenario scn = config.scenario;
    scn.n = config.n_grid[gi];
    scn.seed = mix_seed(config.scenario.seed, scn.n, rep);
    try {
      const GeneratedData gen = generate(scn);
      const PenaltyPlan plan =
          build_plan(gen.data, config.classes, config.q, config.c1, config.epsilon,
                     config.a0, config.variant, config.b0star);
      const AdditiveFit fit = fit_additive(gen.data, plan, config.fit_options);
      res.errors_n[gi][rep] = error_n(fit, gen.truth, gen.data);
      res.errors_q[gi][rep] =
          error_Q_mc(fit, gen.truth, scn.covariate_dist, config.n_mc,
                     mix_seed(scn.seed, 0x5c02eULL, 1))
              .value;
    } catch (const std::exception& e) {
      res.failures[gi][rep] = e.what();
    } catch (...) {
      res.failures[gi][rep] = "unknown failure";
    }
  }

  // slope of log mean error on log n over grid points with usable cells
  std::vector<double> ns;
  std::vector<double> mean_n;
  std::vector<double> mean_q;
  bool zeroed = false;
  for (std::size_t gi = 0; gi < ng; ++gi) {
    double accn = 0.0;
    double accq = 0.0;
    std::size_t good = 0;
    for (std::size_t rep = 0; rep < config.reps; ++rep) {
      if (res.failures[gi][rep].empty() && std::isfinite(res.errors_n[gi][rep])) {
        accn += res.errors_n[gi][rep];
        accq += res.errors_q[gi][rep];
        ++good;
      }
    }
    if (good == 0) continue;
    const double en = accn / static_cast<double>(good);
    const double eq = accq / static_cast<double>(good);
    if (en <= 1e-20 || eq <= 1e-20) {
      zeroed = true;
      continue;
    }
    ns.push_back(static_cast<double>(config.n_grid[gi]));
    mean_n.push_back(en);
    mean_q.push_back(eq);
  }

  if (ns.size() < 2 || zeroed) {
    res.degenerate = true;
    res.slope_n.slope = std::numeric_limits<double>::quiet_NaN();
    res.slope_q.slope = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  res.slope_n = loglog_slope(ns, mean_n);
  res.slope_q = loglog_slope(ns, mean_q);
  return res;
}

}  // namespace addreg
