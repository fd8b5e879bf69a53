#ifndef ADDREG_TUNING_HPP
#define ADDREG_TUNING_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "addreg/model.hpp"
#include "addreg/solver.hpp"

namespace addreg {

// Every ingredient of one component's penalty level: the dimension-driven
// noise floor nu, the entropy-balanced homogeneous rate (gamma_q, w_q), and
// the capped pair (gamma_star, w_star) actually used.  mf/mq are set when
// the scale-dependent variant produced the numbers.
struct RateParams {
  double q = 0.0;
  double beta0 = 1.0;
  double b0star = 1.0;
  std::size_t n = 0;
  std::size_t p = 0;
  double epsilon = 0.1;

  double nu = 0.0;
  double gamma_q = 0.0;
  double w_q = 0.0;
  double gamma_star = 0.0;
  double w_star = 0.0;
  std::optional<double> mf;
  std::optional<double> mq;
};

// Smoothness-class exponents: beta = 1/m drives the entropy rate, tau is
// the interpolation exponent tying the sup norm to the two penalty norms.
struct ClassExponents {
  double beta = 0.0;
  double tau = 0.0;
};
ClassExponents class_exponents(const ComponentClass& cls);

// Noise floor sqrt(log(p / epsilon) / n); the argument of the log must
// exceed one or the value would be imaginary.
double nu_n(std::size_t n, std::size_t p, double epsilon);

// Entropy-balanced rate pair: gamma_q = b0star^{2/(2+beta0(1-q))} *
// n^{-1/(2+beta0(1-q))} and its weight w_q = gamma_q^{1-q}.
std::pair<double, double> gamma_homogeneous(double q, double beta0, double b0star,
                                            std::size_t n);

// Scale-adaptive schedule: w_star = max(gamma_q, nu)^{1-q} branchwise and
// gamma_star = min(gamma_q, b0star n^{-1/2} nu^{-(1-q) beta0 / 2}).
RateParams rates_scale_adaptive(double q, double beta0, double b0star, std::size_t n,
                                std::size_t p, double epsilon);

// Scale-dependent schedule: the same structure with every branch tilted by
// the ratio mq / mf of the component-norm bounds; mq = mf collapses it to
// the adaptive schedule exactly.
RateParams rates_scale_dependent(double q, double beta0, double b0star, std::size_t n,
                                 std::size_t p, double epsilon, double mf, double mq);

struct TuningVariant {
  enum class Kind { Adaptive, Dependent };
  Kind kind = Kind::Adaptive;
  double mf = 1.0;
  double mq = 1.0;

  static TuningVariant adaptive() { return {}; }
  static TuningVariant dependent(double mf, double mq) {
    return {Kind::Dependent, mf, mq};
  }
};

// Assemble the per-component penalty levels for a dataset: each component
// gets beta from its own class, shares (q, b0star, epsilon), and receives
// lambda_j = c1 (gamma_star_j + nu), rho_j = lambda_j w_j.  c1 = 0 is the
// interpolation regime: all penalties zero.  Such a plan still fits (the
// solver checks only what it consumes) but fails the stored-document
// contract, which pins c1 > 0.
PenaltyPlan build_plan(const Dataset& data, const std::vector<ComponentClass>& classes,
                       double q, double c1, double epsilon, double a0,
                       const TuningVariant& variant, double b0star = 1.0);

// Predicted exponent of the squared-error rate in n: -(2-q)/(2+beta0(1-q)).
double error_rate_exponent(double q, double beta0);

// Robust noise-scale plug-in behind the default c1: successive differences
// of the centered response, their median absolute deviation rescaled to a
// Gaussian sigma (each difference carries twice the noise variance).
double noise_scale_mad(std::span<const double> y);

}  // namespace addreg

#endif
