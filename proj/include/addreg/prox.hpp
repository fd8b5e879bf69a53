#ifndef ADDREG_PROX_HPP
#define ADDREG_PROX_HPP

#include <optional>
#include <span>
#include <vector>

#include "addreg/model.hpp"

namespace addreg {

// One univariate penalized-smoothing subproblem:
//   minimize (1/2n) sum_i w_i (r_i - theta_i)^2 + rho * seminorm(theta)
// over values theta at the distinct knots.  Weights are the duplicate
// multiplicities of the design points and sum to the sample size n.
struct ProxProblem {
  std::vector<double> targets;
  std::vector<double> knots;
  std::vector<double> weights;
  double rho = 0.0;
  ComponentClass cls;

  double n() const;
  void validate() const;
};

// Result of a KKT audit: the largest violation of the subgradient
// stationarity system at a candidate, together with the dual sequence that
// witnessed it.  A gap at zero (within tolerance) certifies optimality.
struct ProxCertificate {
  double kkt_gap = 0.0;
  std::vector<double> dual_witness;
};

// Exact weighted 1d total-variation prox (class BoundedVariation, m=1):
//   argmin (1/2n) sum w_i (r_i - theta_i)^2 + rho sum |theta_{i+1} - theta_i|
// via the dynamic-programming message algorithm (clipped piecewise-linear
// derivatives), O(K) after the knots are sorted.
std::vector<double> tv1_prox(const ProxProblem& prob);

// Trend filtering (BoundedVariation, m >= 2): ADMM with a primal-dual
// active-set polish, run to the given relative duality gap.  The polish
// normally lands on the exact sign pattern and certifies within a few
// iterations.  The certified gap cannot go below the rounding noise of the
// divided differences themselves, which grows with the knot count, so the
// default tolerance is chosen to be reachable at any problem size rather
// than as tight as small problems would allow.  K <= m falls back to the
// weighted degree-(m-1) polynomial fit.
struct TrendfilterInfo {
  double gap = 0.0;   // final duality gap, relative
  int iterations = 0;
  std::vector<double> dual;  // box-feasible dual variable at the gap check
};
std::vector<double> trendfilter_prox(const ProxProblem& prob, double gap_tol = 1e-9,
                                     TrendfilterInfo* info = nullptr);

// Internal ADMM core, exported for the midpoint-insertion audit: solves the
// same problem but tolerates zero weights (knots that carry no data) and an
// explicit sample size n.  Returns the best objective value seen and the
// minimizing iterate.
struct TfGeneralResult {
  std::vector<double> theta;
  double objective = 0.0;
};
TfGeneralResult trendfilter_general(std::span<const double> knots,
                                    std::span<const double> targets,
                                    std::span<const double> weights, double n, int m,
                                    double rho, int max_iter = 20000);

// Norm-penalized smoothing spline (SobolevL2, m in {1,2}):
//   argmin (1/2n) sum w_i (r_i - g(t_i))^2 + rho * sqrt(int (g^(m))^2)
// by the squared-penalty reduction: solve classical smoothing splines at
// parameter rho' and root-find the self-consistent rho' = rho / (2 s) with
// s the fitted seminorm.  When the degree-(m-1) polynomial fit already
// satisfies the dual-norm optimality condition the seminorm is exactly
// zero and the polynomial is returned (zero_curvature branch).
struct SobolevProx {
  ComponentFit fit;
  double rho_prime = 0.0;     // squared-penalty parameter at self-consistency
  bool zero_curvature = false;
  double dual_limit = 0.0;    // dual seminorm of the polynomial-fit residual
};
SobolevProx sobolev_prox(const ProxProblem& prob, double selfcons_tol = 1e-9);

// Class dispatch used by the block update: values + seminorm + evaluation rule.
struct FunctionalProx {
  std::vector<double> values;
  double seminorm = 0.0;
  EvalRule rule = EvalRule::StepRightContinuous;
};
FunctionalProx functional_prox(const ProxProblem& prob);

// Multiplicative group soft-threshold: (1 - lambda/||theta||_n)_+ theta,
// with the weighted empirical norm ||theta||_n^2 = n^-1 sum w_i theta_i^2.
std::vector<double> group_shrink(std::span<const double> theta,
                                 std::span<const double> weights, double n, double lambda);

// Optimality audit of the composite subproblem
//   (1/2n) sum w_i (r_i - theta_i)^2 + rho * seminorm + lambda ||theta||_n
// at an arbitrary candidate.  Builds the dual witness (cumulative residual
// sums for TV, a least-squares divided-difference dual for trend filtering,
// stationarity of the normal equations for splines, and the group-threshold
// condition at zero) and reports the largest violation.
ProxCertificate kkt_univariate(const ProxProblem& prob, std::span<const double> candidate,
                               double lambda);

}  // namespace addreg

#endif
