#include "addreg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace addreg {

void ComponentClass::validate() const {
  if (m < 1) throw std::invalid_argument("component class order must be >= 1");
  if (kind == ClassKind::SobolevL2 && m > 2)
    throw std::invalid_argument("SobolevL2 classes support m in {1,2} only");
}

std::string class_spec(const ComponentClass& cls) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%d",
                cls.kind == ClassKind::BoundedVariation ? "bv" : "sob", cls.m);
  return buf;
}

ComponentClass parse_class_spec(const std::string& spec) {
  ComponentClass cls;
  std::size_t pos = 0;
  if (spec.rfind("bv", 0) == 0) {
    cls.kind = ClassKind::BoundedVariation;
    pos = 2;
  } else if (spec.rfind("sob", 0) == 0) {
    cls.kind = ClassKind::SobolevL2;
    pos = 3;
  } else {
    throw std::invalid_argument("unknown component class spec: " + spec);
  }
  try {
    std::size_t used = 0;
    cls.m = std::stoi(spec.substr(pos), &used);
    if (pos + used != spec.size()) throw std::invalid_argument(spec);
  } catch (const std::exception&) {
    throw std::invalid_argument("unknown component class spec: " + spec);
  }
  cls.validate();
  return cls;
}

void Dataset::validate() const {
  if (y.size() < 2) throw std::invalid_argument("dataset needs n >= 2 rows");
  for (double v : y)
    if (!std::isfinite(v)) throw std::invalid_argument("response contains a non-finite value");
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j].size() != y.size())
      throw std::invalid_argument("covariate column " + std::to_string(j + 1) +
                                  " length does not match the response");
    for (double v : x[j]) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw std::invalid_argument("covariate column " + std::to_string(j + 1) +
                                    " has an entry outside [0,1]");
    }
  }
}

double empirical_norm(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("empirical_norm of an empty vector");
  double ss = 0.0;
  for (double v : values) ss += v * v;
  return std::sqrt(ss / static_cast<double>(values.size()));
}

double empirical_norm(std::span<const double> values, std::span<const double> weights) {
  if (values.empty()) throw std::invalid_argument("empirical_norm of an empty vector");
  if (values.size() != weights.size())
    throw std::invalid_argument("empirical_norm: values/weights length mismatch");
  double ss = 0.0, n = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ss += weights[i] * values[i] * values[i];
    n += weights[i];
  }
  return std::sqrt(ss / n);
}

double weighted_mean(std::span<const double> values, std::span<const double> weights) {
  if (values.empty()) throw std::invalid_argument("weighted_mean of an empty vector");
  if (values.size() != weights.size())
    throw std::invalid_argument("weighted_mean: values/weights length mismatch");
  double s = 0.0, n = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    s += weights[i] * values[i];
    n += weights[i];
  }
  return s / n;
}

std::vector<double> divided_differences(std::span<const double> values,
                                        std::span<const double> knots, int m) {
  if (values.size() != knots.size())
    throw std::invalid_argument("divided_differences: values/knots length mismatch");
  if (m < 1) throw std::invalid_argument("divided_differences: order must be >= 1");
  std::vector<double> d(values.begin(), values.end());
  std::size_t cur = d.size();
  for (int k = 1; k <= m; ++k) {
    if (cur < 2) return {};
    if (k > 1) {
      // rescale to divided differences of the previous order before
      // differencing again; entry i spans knots[i .. i+k-1]
      for (std::size_t i = 0; i < cur; ++i)
        d[i] = (k - 1) * d[i] / (knots[i + k - 1] - knots[i]);
    }
    for (std::size_t i = 0; i + 1 < cur; ++i) d[i] = d[i + 1] - d[i];
    --cur;
    d.resize(cur);
  }
  return d;
}

double tv_seminorm(std::span<const double> values, std::span<const double> knots, int m) {
  if (values.size() != knots.size())
    throw std::invalid_argument("tv_seminorm: values/knots length mismatch");
  if (values.size() < static_cast<std::size_t>(m) + 1) return 0.0;
  std::vector<double> d = divided_differences(values, knots, m);
  double s = 0.0;
  for (double v : d) s += std::fabs(v);
  return s;
}

double sobolev_seminorm(std::span<const double> values, std::span<const double> knots, int m) {
  if (values.size() != knots.size())
    throw std::invalid_argument("sobolev_seminorm: values/knots length mismatch");
  const std::size_t K = values.size();
  if (m == 1) {
    // piecewise-linear interpolant: int (g')^2 = sum (dv)^2 / h
    if (K < 2) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < K; ++i) {
      const double h = knots[i + 1] - knots[i];
      const double dv = values[i + 1] - values[i];
      s += dv * dv / h;
    }
    return std::sqrt(s);
  }
  if (m == 2) {
    // natural cubic spline: g'' is piecewise linear through the gamma_i, so
    // int (g'')^2 = sum h/3 (g_i^2 + g_i g_{i+1} + g_{i+1}^2)
    if (K < 3) return 0.0;
    std::vector<double> g = natural_spline_second_derivs(knots, values);
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < K; ++i) {
      const double h = knots[i + 1] - knots[i];
      s += h / 3.0 * (g[i] * g[i] + g[i] * g[i + 1] + g[i + 1] * g[i + 1]);
    }
    return std::sqrt(s);
  }
  throw std::invalid_argument("sobolev_seminorm supports m in {1,2}");
}

double class_seminorm(const ComponentClass& cls, std::span<const double> values,
                      std::span<const double> knots) {
  if (cls.kind == ClassKind::BoundedVariation) return tv_seminorm(values, knots, cls.m);
  return sobolev_seminorm(values, knots, cls.m);
}

std::vector<double> natural_spline_second_derivs(std::span<const double> knots,
                                                 std::span<const double> values) {
  const std::size_t K = knots.size();
  if (values.size() != K)
    throw std::invalid_argument("natural spline: values/knots length mismatch");
  std::vector<double> gamma(K, 0.0);
  if (K < 3) return gamma;
  // tridiagonal system for the interior second derivatives:
  //   h_{i-1}/6 g_{i-1} + (h_{i-1}+h_i)/3 g_i + h_i/6 g_{i+1} = s_i - s_{i-1}
  // with s_i the chord slopes and natural ends g_1 = g_K = 0.
  const std::size_t M = K - 2;
  std::vector<double> diag(M), off(M > 1 ? M - 1 : 0), rhs(M);
  for (std::size_t i = 0; i < M; ++i) {
    const double hl = knots[i + 1] - knots[i];
    const double hr = knots[i + 2] - knots[i + 1];
    diag[i] = (hl + hr) / 3.0;
    if (i + 1 < M) off[i] = hr / 6.0;
    const double sl = (values[i + 1] - values[i]) / hl;
    const double sr = (values[i + 2] - values[i + 1]) / hr;
    rhs[i] = sr - sl;
  }
  // Thomas algorithm (symmetric positive definite, no pivoting needed)
  std::vector<double> c(M, 0.0);
  c[0] = diag[0];
  for (std::size_t i = 1; i < M; ++i) {
    const double w = off[i - 1] / c[i - 1];
    c[i] = diag[i] - w * off[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  gamma[M] = rhs[M - 1] / c[M - 1];
  for (std::size_t i = M - 1; i >= 1; --i)
    gamma[i] = (rhs[i - 1] - (i < M ? off[i - 1] * gamma[i + 1] : 0.0)) / c[i - 1];
  return gamma;
}

namespace {

// index of the knot interval [k_i, k_{i+1}) containing xq, clamped to the
// valid range; requires at least two knots
std::size_t interval_index(const std::vector<double>& knots, double xq) {
  if (xq <= knots.front()) return 0;
  if (xq >= knots[knots.size() - 2]) return knots.size() - 2;
  auto it = std::upper_bound(knots.begin(), knots.end(), xq);
  return static_cast<std::size_t>(it - knots.begin()) - 1;
}

double eval_spline(const ComponentFit& fit, const std::vector<double>& gamma, double xq) {
  const auto& t = fit.knots;
  const auto& v = fit.values;
  const std::size_t K = t.size();
  if (K == 1) return v[0];
  if (xq < t.front()) {
    const double h = t[1] - t[0];
    // natural end: zero curvature at the first knot, so extend linearly
    const double slope = (v[1] - v[0]) / h - h / 6.0 * gamma[1];
    return v[0] + slope * (xq - t[0]);
  }
  if (xq > t.back()) {
    const double h = t[K - 1] - t[K - 2];
    const double slope = (v[K - 1] - v[K - 2]) / h + h / 6.0 * gamma[K - 2];
    return v[K - 1] + slope * (xq - t[K - 1]);
  }
  const std::size_t i = interval_index(t, xq);
  const double h = t[i + 1] - t[i];
  const double A = (t[i + 1] - xq) / h;
  const double B = (xq - t[i]) / h;
  return A * v[i] + B * v[i + 1] +
         ((A * A * A - A) * gamma[i] + (B * B * B - B) * gamma[i + 1]) * h * h / 6.0;
}

double eval_rule(const ComponentFit& fit, const std::vector<double>* gamma, double xq) {
  const auto& t = fit.knots;
  const auto& v = fit.values;
  if (t.empty()) return 0.0;
  switch (fit.rule) {
    case EvalRule::StepRightContinuous: {
      if (xq < t.front()) return v.front();
      if (xq >= t.back()) return v.back();
      return v[interval_index(t, xq)];
    }
    case EvalRule::PiecewiseLinear: {
      if (xq <= t.front()) return v.front();
      if (xq >= t.back()) return v.back();
      const std::size_t i = interval_index(t, xq);
      const double w = (xq - t[i]) / (t[i + 1] - t[i]);
      return v[i] + w * (v[i + 1] - v[i]);
    }
    case EvalRule::NaturalSpline: {
      std::vector<double> local;
      if (!gamma) {
        local = natural_spline_second_derivs(t, v);
        gamma = &local;
      }
      return eval_spline(fit, *gamma, xq);
    }
  }
  return 0.0;
}

}  // namespace

double evaluate_component(const ComponentFit& fit, double xq) {
  if (!std::isfinite(xq)) throw std::invalid_argument("evaluate_component: non-finite query");
  return eval_rule(fit, nullptr, xq);
}

ComponentEvaluator::ComponentEvaluator(const ComponentFit& fit) : fit_(&fit) {
  if (fit.rule == EvalRule::NaturalSpline && fit.knots.size() >= 3)
    gamma_ = natural_spline_second_derivs(fit.knots, fit.values);
  else if (fit.rule == EvalRule::NaturalSpline)
    gamma_.assign(fit.knots.size(), 0.0);
}

double ComponentEvaluator::operator()(double xq) const {
  return eval_rule(*fit_, gamma_.empty() ? nullptr : &gamma_, xq);
}

}  // namespace addreg
