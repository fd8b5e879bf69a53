#ifndef ADDREG_SOLVER_HPP
#define ADDREG_SOLVER_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "addreg/model.hpp"
#include "addreg/prox.hpp"

namespace addreg {

// Per-component penalty levels plus the global constants they were derived
// from.  The derivation keeps lambda_j = c1 (gamma_j + nu) and
// rho_j = lambda_j w_j with nu the universal noise level for the dataset
// shape; both factors are stored so the derivation can be re-checked.  The
// fit applies the levels scaled by the common multiplier a0.
struct PenaltyPlan {
  std::vector<ComponentClass> classes;
  std::vector<double> lambda;
  std::vector<double> rho;
  std::vector<double> w;      // rho_j / lambda_j, in (0, 1]
  std::vector<double> gamma;  // scale component of lambda_j

  double c1 = 1.0;
  double epsilon = 0.05;
  double a0 = 1.0;
  double q = 0.0;
  double b0star = 1.0;

  std::size_t p() const { return classes.size(); }
  double effective_lambda(std::size_t j) const { return a0 * lambda[j]; }
  double effective_rho(std::size_t j) const { return a0 * rho[j]; }
  void validate() const;
};

struct FitOptions {
  double tol = 1e-8;    // relative objective change declaring a sweep idle
  int max_sweeps = 500;
  bool active_set = true;  // skip components that stay at zero, reverify before stopping
};

// Fitted additive model: an unpenalized intercept plus one component per
// covariate; a component pushed to exactly zero by the group penalty is
// absent.  objective_trace records the objective after every sweep.
struct AdditiveFit {
  double intercept = 0.0;
  std::vector<std::optional<ComponentFit>> components;
  std::vector<double> objective_trace;
  int sweeps = 0;
  bool converged = false;
  // the plan the fit was produced under, kept for reproducibility
  PenaltyPlan plan_snapshot;
};

// (1/2) |y - fit|_n^2 + a0 sum_j (rho_j F-seminorm + lambda_j |.|_n),
// recomputed from scratch.
double objective(const Dataset& data, const PenaltyPlan& plan, const AdditiveFit& fit);

// One exact block solve for component j against its partial residual
// y - intercept - sum of the other components at the rows: aggregate onto
// the covariate's distinct points, seminorm prox at a0 rho_j, center,
// group-shrink at a0 lambda_j.  Null when the shrink zeroes the block.
std::optional<ComponentFit> component_update(std::size_t j,
                                             std::span<const double> partial_residual,
                                             const Dataset& data, const PenaltyPlan& plan);

// Cyclic block minimization: each component solves its univariate composite
// subproblem exactly (seminorm prox, centering, group shrink), the intercept
// closes every sweep, and the loop stops when a full sweep moves the
// objective by less than tol relative.
AdditiveFit fit_additive(const Dataset& data, const PenaltyPlan& plan,
                         const FitOptions& options = {});

// Model evaluated at one point: intercept plus each present component at its
// coordinate of xrow.  xrow length must match the component count.
double evaluate_model(const AdditiveFit& fit, std::span<const double> xrow);

// Model evaluated at new points, columns in the same order as the training
// data.  Rowwise this agrees with evaluate_model; it just builds each
// component's evaluator once instead of per row.
std::vector<double> predict(const AdditiveFit& fit,
                            const std::vector<std::vector<double>>& x_columns);

// Stationarity gap of every component's subproblem at the fitted values
// (zero components included), each measured by the univariate audit against
// its own partial residual.
std::vector<double> kkt_residuals(const Dataset& data, const PenaltyPlan& plan,
                                  const AdditiveFit& fit);

// Representation audit for bounded-variation components: re-solves component
// j's subproblem with the knot set enriched by interval midpoints (weightless
// in the loss) and returns how much that larger search space improves the
// composite objective.  Zero, up to solver tolerance, certifies that values
// at the design points describe the solution completely.
double midpoint_insertion_improvement(const Dataset& data, const PenaltyPlan& plan,
                                      const AdditiveFit& fit, std::size_t j);

}  // namespace addreg

#endif
