#ifndef ADDREG_MODEL_HPP
#define ADDREG_MODEL_HPP

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace addreg {

// Thrown when an iterative solver cannot deliver its certificate (failed
// bracket, iteration cap with a large duality gap, singular system).
// Input validation problems throw std::invalid_argument instead; the CLI
// maps the two onto distinct exit codes.
class solver_error : public std::runtime_error {
 public:
  explicit solver_error(const std::string& what) : std::runtime_error(what) {}
};

enum class ClassKind { BoundedVariation, SobolevL2 };

// Functional class of one component on [0,1]: functions whose m-th
// derivative is measured either in total variation (r = 1) or in L2
// (r = 2).  beta and tau are the entropy/interpolation exponents the
// tuning schedules run on.
struct ComponentClass {
  ClassKind kind = ClassKind::BoundedVariation;
  int m = 1;

  int r() const { return kind == ClassKind::BoundedVariation ? 1 : 2; }
  double beta() const { return 1.0 / static_cast<double>(m); }
  double tau() const { return 1.0 / (2.0 * m + 1.0 - 2.0 / r()); }

  // m >= 3 bounded-variation components are solved by trend filtering,
  // which is a discretization rather than the exact variational problem;
  // they are marked approximate in every serialized output.
  bool approximate() const { return kind == ClassKind::BoundedVariation && m >= 3; }

  void validate() const;
  bool operator==(const ComponentClass&) const = default;
};

// short textual form used in CLI flags and model documents: bv1, bv2, sob2, ...
std::string class_spec(const ComponentClass& cls);
ComponentClass parse_class_spec(const std::string& spec);

// Design matrix (column-major: x[j] is covariate j over all rows) plus
// response.  Covariates must already live in [0,1]; the CLI offers min-max
// rescaling for raw data.
struct Dataset {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  std::vector<std::string> column_names;  // optional, may be empty

  std::size_t n() const { return y.size(); }
  std::size_t p() const { return x.size(); }
  void validate() const;
};

enum class EvalRule { StepRightContinuous, PiecewiseLinear, NaturalSpline };

// One fitted component: values at the distinct sorted design points of its
// covariate, an interpolation rule giving the function everywhere, and the
// two norms the penalty charges it for.  multiplicities hold the duplicate
// counts of the design points (they sum to n) so both norms are
// recomputable from the stored fields alone.
struct ComponentFit {
  ComponentClass cls;
  std::vector<double> knots;
  std::vector<double> values;
  std::vector<double> multiplicities;
  EvalRule rule = EvalRule::StepRightContinuous;
  double seminorm_value = 0.0;
  double empnorm_value = 0.0;
};

// sqrt(n^-1 sum w_i v_i^2); unit weights when none are given.
double empirical_norm(std::span<const double> values);
double empirical_norm(std::span<const double> values, std::span<const double> weights);

double weighted_mean(std::span<const double> values, std::span<const double> weights);

// Order-m divided differences on an unequal grid, defined recursively so
// that order 1 is the plain first difference and each further order first
// rescales by (k-1)/(t_{i+k-1} - t_i) and differences again.  For a
// function tabulated at the knots this approximates the jump sequence of
// the (m-1)-th derivative; orders 1 and 2 recover it exactly for step and
// piecewise-linear interpolants.
std::vector<double> divided_differences(std::span<const double> values,
                                        std::span<const double> knots, int m);

// l1 norm of the order-m divided differences: total variation of the
// function itself (m=1) or of the interpolant's slope sequence (m=2).
// Inputs shorter than m+1 sit in the null space and score 0.
double tv_seminorm(std::span<const double> values, std::span<const double> knots, int m);

// sqrt(int (g^(m))^2) of the canonical interpolant of the values: the
// piecewise-linear one for m=1, the natural cubic spline for m=2.
double sobolev_seminorm(std::span<const double> values, std::span<const double> knots, int m);

// seminorm matching the class: tv_seminorm for bounded variation,
// sobolev_seminorm for SobolevL2.
double class_seminorm(const ComponentClass& cls, std::span<const double> values,
                      std::span<const double> knots);

// Natural cubic spline second derivatives at the knots (zero at both ends),
// from the tridiagonal interpolation system.  Shared by evaluation and by
// the m=2 Sobolev seminorm.
std::vector<double> natural_spline_second_derivs(std::span<const double> knots,
                                                 std::span<const double> values);

// Evaluate one component anywhere.  Step: right-continuous, first value to
// the left of the first knot, last value from the last knot on.  Piecewise
// linear: interpolation inside, flat extension outside.  Natural spline:
// cubic inside, linear extension outside (zero second derivative at the
// boundary knots).
double evaluate_component(const ComponentFit& fit, double xq);

// Precomputed form of evaluate_component for tight loops: the spline rule
// needs its second derivatives only once.
class ComponentEvaluator {
 public:
  explicit ComponentEvaluator(const ComponentFit& fit);
  double operator()(double xq) const;

 private:
  const ComponentFit* fit_;
  std::vector<double> gamma_;  // spline rule only
};

}  // namespace addreg

#endif
