#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "addreg/tuning.hpp"

namespace addreg {
namespace {

void check_rate_inputs(double q, double beta0, double b0star, std::size_t n) {
  if (!(q >= 0.0) || !(q <= 1.0)) throw std::invalid_argument("q must lie in [0, 1]");
  if (!(beta0 > 0.0) || !(beta0 < 2.0))
    throw std::invalid_argument("beta0 must lie in (0, 2)");
  if (!(b0star > 0.0)) throw std::invalid_argument("b0star must be positive");
  if (n < 1) throw std::invalid_argument("n must be at least 1");
}

double median_inplace(std::vector<double>& v) {
  const std::size_t k = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  const double upper = v[k];
  if (v.size() % 2 == 1) return upper;
  const double lower =
      *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k));
  return 0.5 * (lower + upper);
}

}  // namespace

ClassExponents class_exponents(const ComponentClass& cls) {
  cls.validate();
  return {cls.beta(), cls.tau()};
}

double nu_n(std::size_t n, std::size_t p, double epsilon) {
  if (n < 1 || p < 1) throw std::invalid_argument("nu_n needs n >= 1 and p >= 1");
  if (!(epsilon > 0.0) || !(epsilon < 1.0))
    throw std::invalid_argument("nu_n needs epsilon in (0, 1)");
  const double ratio = static_cast<double>(p) / epsilon;
  if (!(ratio > 1.0))
    throw std::invalid_argument("nu_n needs p / epsilon > 1 for a positive log");
  return std::sqrt(std::log(ratio) / static_cast<double>(n));
}

std::pair<double, double> gamma_homogeneous(double q, double beta0, double b0star,
                                            std::size_t n) {
  check_rate_inputs(q, beta0, b0star, n);
  const double denom = 2.0 + beta0 * (1.0 - q);
  const double gamma =
      std::pow(b0star, 2.0 / denom) * std::pow(static_cast<double>(n), -1.0 / denom);
  return {gamma, std::pow(gamma, 1.0 - q)};
}

RateParams rates_scale_adaptive(double q, double beta0, double b0star, std::size_t n,
                                std::size_t p, double epsilon) {
  RateParams rp;
  rp.q = q;
  rp.beta0 = beta0;
  rp.b0star = b0star;
  rp.n = n;
  rp.p = p;
  rp.epsilon = epsilon;
  rp.nu = nu_n(n, p, epsilon);
  const auto [gamma_q, w_q] = gamma_homogeneous(q, beta0, b0star, n);
  rp.gamma_q = gamma_q;
  rp.w_q = w_q;
  rp.w_star = std::max(w_q, std::pow(rp.nu, 1.0 - q));
  rp.gamma_star =
      std::min(gamma_q, b0star * std::pow(static_cast<double>(n), -0.5) *
                            std::pow(rp.nu, -(1.0 - q) * beta0 / 2.0));
  return rp;
}

RateParams rates_scale_dependent(double q, double beta0, double b0star, std::size_t n,
                                 std::size_t p, double epsilon, double mf, double mq) {
  if (!(mf > 0.0) || !(mq > 0.0))
    throw std::invalid_argument("scale bounds mf and mq must be positive");
  RateParams rp = rates_scale_adaptive(q, beta0, b0star, n, p, epsilon);
  rp.mf = mf;
  rp.mq = mq;
  const double ratio = mq / mf;
  const double denom = 2.0 + beta0 * (1.0 - q);
  const double gamma_dash = rp.gamma_q * std::pow(ratio, -beta0 / denom);
  const double w_dash = std::pow(gamma_dash, 1.0 - q) * ratio;
  rp.w_star = std::max(w_dash, std::pow(rp.nu, 1.0 - q) * ratio);
  rp.gamma_star =
      std::min(gamma_dash, b0star * std::pow(static_cast<double>(n), -0.5) *
                               std::pow(rp.nu, -(1.0 - q) * beta0 / 2.0) *
                               std::pow(ratio, -beta0 / 2.0));
  return rp;
}

PenaltyPlan build_plan(const Dataset& data, const std::vector<ComponentClass>& classes,
                       double q, double c1, double epsilon, double a0,
                       const TuningVariant& variant, double b0star) {
  data.validate();
  if (classes.size() != data.p())
    throw std::invalid_argument("build_plan: class list length disagrees with the data");
  if (!(c1 >= 0.0) || !std::isfinite(c1))
    throw std::invalid_argument("build_plan: c1 must be finite and nonnegative");
  if (!(a0 >= 1.0)) throw std::invalid_argument("build_plan: a0 must be at least 1");

  PenaltyPlan plan;
  plan.classes = classes;
  plan.c1 = c1;
  plan.epsilon = epsilon;
  plan.a0 = a0;
  plan.q = q;
  plan.b0star = b0star;
  const std::size_t p = classes.size();
  plan.lambda.resize(p);
  plan.rho.resize(p);
  plan.w.resize(p);
  plan.gamma.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    const double beta = class_exponents(classes[j]).beta;
    const RateParams rp =
        variant.kind == TuningVariant::Kind::Dependent
            ? rates_scale_dependent(q, beta, b0star, data.n(), p, epsilon, variant.mf,
                                    variant.mq)
            : rates_scale_adaptive(q, beta, b0star, data.n(), p, epsilon);
    plan.lambda[j] = c1 * (rp.gamma_star + rp.nu);
    // the weight is a penalty ratio; one is its natural ceiling and only
    // degenerate shapes (log(p/eps) > n) push the formula past it
    plan.w[j] = std::min(rp.w_star, 1.0);
    plan.rho[j] = plan.lambda[j] * plan.w[j];
    plan.gamma[j] = rp.gamma_star;
  }
  return plan;
}

double error_rate_exponent(double q, double beta0) {
  if (!(q >= 0.0) || !(q <= 1.0)) throw std::invalid_argument("q must lie in [0, 1]");
  if (!(beta0 > 0.0) || !(beta0 < 2.0))
    throw std::invalid_argument("beta0 must lie in (0, 2)");
  return -(2.0 - q) / (2.0 + beta0 * (1.0 - q));
}

double noise_scale_mad(std::span<const double> y) {
  if (y.size() < 2)
    throw std::invalid_argument("noise_scale_mad needs at least two observations");
  std::vector<double> diffs(y.size() - 1);
  for (std::size_t i = 0; i + 1 < y.size(); ++i) diffs[i] = y[i + 1] - y[i];
  std::vector<double> centered(diffs);
  const double med = median_inplace(centered);
  for (std::size_t i = 0; i < diffs.size(); ++i) diffs[i] = std::abs(diffs[i] - med);
  const double mad = median_inplace(diffs);
  // 1.4826 rescales a Gaussian MAD to sigma; sqrt(2) undoes the variance
  // doubling of successive differences
  return 1.4826 * mad / std::sqrt(2.0);
}

}  // namespace addreg
