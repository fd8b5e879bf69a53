#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "addreg/solver.hpp"

namespace addreg {
namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Distinct sorted design points of one covariate, their duplicate counts,
// and the knot index of every row.
struct ColumnIndex {
  std::vector<double> knots;
  std::vector<double> mult;
  std::vector<std::size_t> row2knot;
};

ColumnIndex build_column_index(const std::vector<double>& col) {
  const std::size_t n = col.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return col[a] < col[b]; });
  ColumnIndex idx;
  idx.row2knot.resize(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    const std::size_t row = order[pos];
    if (idx.knots.empty() || col[row] != idx.knots.back()) {
      idx.knots.push_back(col[row]);
      idx.mult.push_back(0.0);
    }
    idx.row2knot[row] = idx.knots.size() - 1;
    idx.mult.back() += 1.0;
  }
  return idx;
}

double penalty_total(const PenaltyPlan& plan, const AdditiveFit& fit) {
  double pen = 0.0;
  for (std::size_t j = 0; j < plan.p(); ++j) {
    if (!fit.components[j]) continue;
    pen += plan.effective_rho(j) * fit.components[j]->seminorm_value +
           plan.effective_lambda(j) * fit.components[j]->empnorm_value;
  }
  return pen;
}

// Value of one coordinate block at knot level: quadratic misfit against the
// knot-mean targets plus both penalties, in exactly the arithmetic the sweep
// objective uses.  The optional outputs hand back the penalty pieces so an
// accepted update stores the very numbers its acceptance was judged on.
double block_value(std::span<const double> th, std::span<const double> targets,
                   std::span<const double> mult, double dn, double rho_eff,
                   double lambda_eff, const ComponentClass& cls,
                   std::span<const double> knots, double* semi_out, double* emp_out) {
  double quad = 0.0;
  for (std::size_t k = 0; k < th.size(); ++k) {
    const double d = th[k] - targets[k];
    quad += mult[k] * d * d;
  }
  const bool nonzero =
      std::any_of(th.begin(), th.end(), [](double v) { return v != 0.0; });
  const double semi = nonzero ? class_seminorm(cls, th, knots) : 0.0;
  const double emp = nonzero ? empirical_norm(th, mult) : 0.0;
  if (semi_out) *semi_out = semi;
  if (emp_out) *emp_out = emp;
  return 0.5 * quad / dn + rho_eff * semi + lambda_eff * emp;
}

// what the fitting path actually consumes: array shapes, valid classes,
// usable penalty levels.  The full document contract (c1 > 0 and friends)
// is deliberately not enforced here, so all-zero penalty plans remain
// fittable for interpolation baselines.
void check_plan_usable(const PenaltyPlan& plan) {
  const std::size_t np = plan.classes.size();
  if (np == 0) throw std::invalid_argument("penalty plan has no components");
  if (plan.lambda.size() != np || plan.rho.size() != np)
    throw std::invalid_argument("penalty plan arrays disagree in length");
  for (std::size_t j = 0; j < np; ++j) {
    plan.classes[j].validate();
    if (!(plan.lambda[j] >= 0.0) || !std::isfinite(plan.lambda[j]) ||
        !(plan.rho[j] >= 0.0) || !std::isfinite(plan.rho[j]))
      throw std::invalid_argument("penalty levels must be finite and nonnegative");
  }
  if (!(plan.a0 >= 1.0)) throw std::invalid_argument("penalty plan needs a0 >= 1");
}

}  // namespace

void PenaltyPlan::validate() const {
  const std::size_t np = classes.size();
  if (np == 0) throw std::invalid_argument("penalty plan has no components");
  if (lambda.size() != np || rho.size() != np || w.size() != np || gamma.size() != np)
    throw std::invalid_argument("penalty plan arrays disagree in length");
  for (std::size_t j = 0; j < np; ++j) {
    classes[j].validate();
    if (!(lambda[j] >= 0.0) || !std::isfinite(lambda[j]))
      throw std::invalid_argument("penalty plan lambda must be finite and nonnegative");
    if (!(rho[j] >= 0.0) || !std::isfinite(rho[j]))
      throw std::invalid_argument("penalty plan rho must be finite and nonnegative");
    if (!(w[j] > 0.0) || !(w[j] <= 1.0))
      throw std::invalid_argument("penalty plan w must lie in (0, 1]");
    if (!(gamma[j] >= 0.0) || !std::isfinite(gamma[j]))
      throw std::invalid_argument("penalty plan gamma must be finite and nonnegative");
  }
  if (!(c1 > 0.0)) throw std::invalid_argument("penalty plan needs c1 > 0");
  if (!(epsilon > 0.0) || !(epsilon < 1.0))
    throw std::invalid_argument("penalty plan needs epsilon in (0, 1)");
  if (!(a0 >= 1.0)) throw std::invalid_argument("penalty plan needs a0 >= 1");
  if (!(q >= 0.0) || !(q <= 1.0)) throw std::invalid_argument("penalty plan needs q in [0, 1]");
  if (!(b0star > 0.0)) throw std::invalid_argument("penalty plan needs b0star > 0");
}

double objective(const Dataset& data, const PenaltyPlan& plan, const AdditiveFit& fit) {
  if (fit.components.size() != plan.p() || plan.p() != data.p())
    throw std::invalid_argument("objective: component count disagrees with plan or data");
  const std::vector<double> yhat = predict(fit, data.x);
  double ss = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double e = data.y[i] - yhat[i];
    ss += e * e;
  }
  return 0.5 * ss / static_cast<double>(data.n()) + penalty_total(plan, fit);
}

AdditiveFit fit_additive(const Dataset& data, const PenaltyPlan& plan,
                         const FitOptions& options) {
  data.validate();
  check_plan_usable(plan);
  if (plan.p() != data.p())
    throw std::invalid_argument("fit_additive: plan and data disagree on the component count");
  if (!(options.tol > 0.0) || options.max_sweeps < 1)
    throw std::invalid_argument("fit_additive needs tol > 0 and max_sweeps >= 1");
  const std::size_t n = data.n();
  const std::size_t p = data.p();
  const double dn = static_cast<double>(n);

  std::vector<ColumnIndex> index(p);
  for (std::size_t j = 0; j < p; ++j) index[j] = build_column_index(data.x[j]);

  AdditiveFit fit;
  fit.components.assign(p, std::nullopt);
  fit.intercept = mean_of(data.y);
  fit.plan_snapshot = plan;

  // per-row values of each component and the running residual
  std::vector<std::vector<double>> grows(p, std::vector<double>(n, 0.0));
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) resid[i] = data.y[i] - fit.intercept;

  std::vector<int> zero_streak(p, 0);
  bool force_full = false;

  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    bool skipped_any = false;
    for (std::size_t j = 0; j < p; ++j) {
      if (options.active_set && !force_full && zero_streak[j] >= 3) {
        skipped_any = true;
        ++zero_streak[j];
        continue;
      }
      const ColumnIndex& idx = index[j];
      const std::size_t K = idx.knots.size();

      // knot-level means of the partial residual r + g_j
      std::vector<double> targets(K, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        targets[idx.row2knot[i]] += resid[i] + grows[j][i];
      for (std::size_t k = 0; k < K; ++k) targets[k] /= idx.mult[k];

      ProxProblem prob;
      prob.targets = std::move(targets);
      prob.knots = idx.knots;
      prob.weights = idx.mult;
      prob.rho = plan.effective_rho(j);
      prob.cls = plan.classes[j];
      FunctionalProx fp = functional_prox(prob);
      // center in the multiplicity weighting so the intercept keeps sole
      // ownership of the constant direction (the seminorm cannot see it)
      const double shift = weighted_mean(fp.values, idx.mult);
      for (double& v : fp.values) v -= shift;
      const std::vector<double> theta =
          group_shrink(fp.values, idx.mult, dn, plan.effective_lambda(j));

      // accept only if the proposal lowers this block's computed value; the
      // update solvers are accurate far below the audit tolerance, but their
      // last digits are noise once divided differences amplify rounding, and
      // feeding a microscopic regression back into the sweep would leave the
      // objective milling around instead of settling at a fixed point
      double semi_new = 0.0, emp_new = 0.0;
      const double val_new =
          block_value(theta, prob.targets, idx.mult, dn, plan.effective_rho(j),
                      plan.effective_lambda(j), plan.classes[j], idx.knots,
                      &semi_new, &emp_new);
      const std::vector<double> incumbent_zero(K, 0.0);
      const std::vector<double>& incumbent =
          fit.components[j] ? fit.components[j]->values : incumbent_zero;
      const double val_old =
          block_value(incumbent, prob.targets, idx.mult, dn, plan.effective_rho(j),
                      plan.effective_lambda(j), plan.classes[j], idx.knots,
                      nullptr, nullptr);
      if (!(val_new < val_old)) {
        if (fit.components[j]) zero_streak[j] = 0;
        else ++zero_streak[j];
        continue;
      }

      const bool is_zero =
          std::all_of(theta.begin(), theta.end(), [](double v) { return v == 0.0; });
      for (std::size_t i = 0; i < n; ++i) {
        const double v = theta[idx.row2knot[i]];
        resid[i] += grows[j][i] - v;
        grows[j][i] = v;
      }
      if (is_zero) {
        fit.components[j].reset();
        ++zero_streak[j];
      } else {
        ComponentFit cf;
        cf.cls = plan.classes[j];
        cf.knots = idx.knots;
        cf.values = theta;
        cf.multiplicities = idx.mult;
        cf.rule = fp.rule;
        cf.seminorm_value = semi_new;
        cf.empnorm_value = emp_new;
        fit.components[j] = std::move(cf);
        zero_streak[j] = 0;
      }
    }

    // close the sweep on the intercept block and rebuild the residual from
    // the stored values so roundoff cannot accumulate across sweeps
    std::vector<double> partial(n, 0.0);
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t i = 0; i < n; ++i) partial[i] += grows[j][i];
    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n; ++i) centered[i] = data.y[i] - partial[i];
    fit.intercept = mean_of(centered);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      resid[i] = centered[i] - fit.intercept;
      ss += resid[i] * resid[i];
    }

    const double obj = 0.5 * ss / dn + penalty_total(plan, fit);
    fit.objective_trace.push_back(obj);
    ++fit.sweeps;

    if (fit.objective_trace.size() >= 2) {
      const double prev = fit.objective_trace[fit.objective_trace.size() - 2];
      if (std::abs(prev - obj) <= options.tol * std::max(1.0, std::abs(prev))) {
        if (!skipped_any) {
          fit.converged = true;
          break;
        }
        force_full = true;  // idle sweep, but some components were skipped
        continue;
      }
    }
    force_full = false;
  }
  return fit;
}

std::optional<ComponentFit> component_update(std::size_t j,
                                             std::span<const double> partial_residual,
                                             const Dataset& data, const PenaltyPlan& plan) {
  data.validate();
  check_plan_usable(plan);
  if (j >= plan.p() || plan.p() != data.p())
    throw std::invalid_argument("component_update: index or component count out of range");
  if (partial_residual.size() != data.n())
    throw std::invalid_argument("component_update: partial residual length disagrees with data");
  const ColumnIndex idx = build_column_index(data.x[j]);
  const std::size_t K = idx.knots.size();

  ProxProblem prob;
  prob.targets.assign(K, 0.0);
  for (std::size_t i = 0; i < data.n(); ++i)
    prob.targets[idx.row2knot[i]] += partial_residual[i];
  for (std::size_t k = 0; k < K; ++k) prob.targets[k] /= idx.mult[k];
  prob.knots = idx.knots;
  prob.weights = idx.mult;
  prob.rho = plan.effective_rho(j);
  prob.cls = plan.classes[j];

  FunctionalProx fp = functional_prox(prob);
  const double shift = weighted_mean(fp.values, idx.mult);
  for (double& v : fp.values) v -= shift;
  const std::vector<double> theta = group_shrink(fp.values, idx.mult,
                                                 static_cast<double>(data.n()),
                                                 plan.effective_lambda(j));
  if (std::all_of(theta.begin(), theta.end(), [](double v) { return v == 0.0; }))
    return std::nullopt;
  ComponentFit cf;
  cf.cls = plan.classes[j];
  cf.knots = idx.knots;
  cf.values = theta;
  cf.multiplicities = idx.mult;
  cf.rule = fp.rule;
  cf.seminorm_value = class_seminorm(cf.cls, cf.values, cf.knots);
  cf.empnorm_value = empirical_norm(cf.values, cf.multiplicities);
  return cf;
}

double evaluate_model(const AdditiveFit& fit, std::span<const double> xrow) {
  if (xrow.size() != fit.components.size())
    throw std::invalid_argument("evaluate_model: point length disagrees with the fitted model");
  double out = fit.intercept;
  for (std::size_t j = 0; j < xrow.size(); ++j)
    if (fit.components[j]) out += evaluate_component(*fit.components[j], xrow[j]);
  return out;
}

std::vector<double> predict(const AdditiveFit& fit,
                            const std::vector<std::vector<double>>& x_columns) {
  const std::size_t p = fit.components.size();
  if (x_columns.size() != p)
    throw std::invalid_argument("predict: column count disagrees with the fitted model");
  std::size_t n = x_columns.empty() ? 0 : x_columns.front().size();
  for (const auto& col : x_columns)
    if (col.size() != n) throw std::invalid_argument("predict: columns differ in length");

  std::vector<double> out(n, fit.intercept);
  for (std::size_t j = 0; j < p; ++j) {
    if (!fit.components[j]) continue;
    const ComponentEvaluator eval(*fit.components[j]);
    const std::vector<double>& col = x_columns[j];
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
      out[static_cast<std::size_t>(i)] += eval(col[static_cast<std::size_t>(i)]);
  }
  return out;
}

namespace {

// partial residual of component j aggregated to its knots, reusing the
// fitted values of every other component
ProxProblem partial_residual_problem(const Dataset& data, const PenaltyPlan& plan,
                                     const AdditiveFit& fit, std::size_t j,
                                     const std::vector<ColumnIndex>& index) {
  const std::size_t n = data.n();
  std::vector<double> resid(data.y);
  for (double& v : resid) v -= fit.intercept;
  for (std::size_t k = 0; k < plan.p(); ++k) {
    if (k == j || !fit.components[k]) continue;
    const std::vector<double>& values = fit.components[k]->values;
    const ColumnIndex& idx = index[k];
    for (std::size_t i = 0; i < n; ++i) resid[i] -= values[idx.row2knot[i]];
  }
  const ColumnIndex& idx = index[j];
  const std::size_t K = idx.knots.size();
  ProxProblem prob;
  prob.targets.assign(K, 0.0);
  for (std::size_t i = 0; i < n; ++i) prob.targets[idx.row2knot[i]] += resid[i];
  for (std::size_t k = 0; k < K; ++k) prob.targets[k] /= idx.mult[k];
  prob.knots = idx.knots;
  prob.weights = idx.mult;
  prob.rho = plan.effective_rho(j);
  prob.cls = plan.classes[j];
  return prob;
}

}  // namespace

std::vector<double> kkt_residuals(const Dataset& data, const PenaltyPlan& plan,
                                  const AdditiveFit& fit) {
  data.validate();
  check_plan_usable(plan);
  if (fit.components.size() != plan.p() || plan.p() != data.p())
    throw std::invalid_argument("kkt_residuals: component count disagrees with plan or data");
  std::vector<ColumnIndex> index(plan.p());
  for (std::size_t j = 0; j < plan.p(); ++j) index[j] = build_column_index(data.x[j]);

  std::vector<double> gaps(plan.p(), 0.0);
  for (std::size_t j = 0; j < plan.p(); ++j) {
    const ProxProblem prob = partial_residual_problem(data, plan, fit, j, index);
    std::vector<double> candidate(prob.knots.size(), 0.0);
    if (fit.components[j]) candidate = fit.components[j]->values;
    gaps[j] = kkt_univariate(prob, candidate, plan.effective_lambda(j)).kkt_gap;
  }
  return gaps;
}

double midpoint_insertion_improvement(const Dataset& data, const PenaltyPlan& plan,
                                      const AdditiveFit& fit, std::size_t j) {
  data.validate();
  check_plan_usable(plan);
  if (j >= plan.p())
    throw std::invalid_argument("midpoint_insertion_improvement: component index out of range");
  const ComponentClass cls = plan.classes[j];
  if (cls.kind != ClassKind::BoundedVariation || cls.m > 2)
    throw std::invalid_argument(
        "midpoint_insertion_improvement audits the exactly-representable bounded-variation "
        "classes");

  std::vector<ColumnIndex> index(plan.p());
  for (std::size_t k = 0; k < plan.p(); ++k) index[k] = build_column_index(data.x[k]);
  const ProxProblem prob = partial_residual_problem(data, plan, fit, j, index);
  const std::size_t K = prob.knots.size();
  std::vector<double> theta(K, 0.0);
  if (fit.components[j]) theta = fit.components[j]->values;
  const double n = static_cast<double>(data.n());
  const double lambda = plan.effective_lambda(j);
  const double rho = prob.rho;

  auto composite = [&](std::span<const double> vals, std::span<const double> knots,
                       std::span<const double> weights, std::span<const double> targets) {
    double ss = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double e = targets[i] - vals[i];
      ss += weights[i] * e * e;
    }
    return 0.5 * ss / n + rho * tv_seminorm(vals, knots, cls.m) +
           lambda * empirical_norm(vals, weights);
  };

  const double j_orig = composite(theta, prob.knots, prob.weights, prob.targets);
  if (K < 2 || cls.m + 1 > static_cast<int>(K)) return 0.0;

  // interleave weightless midpoints, seeding their targets (and the solver
  // start) with the fitted function's own values there
  std::vector<double> aknots, atargets, aweights;
  aknots.reserve(2 * K - 1);
  for (std::size_t k = 0; k < K; ++k) {
    aknots.push_back(prob.knots[k]);
    atargets.push_back(theta[k]);
    aweights.push_back(prob.weights[k]);
    if (k + 1 < K) {
      aknots.push_back(0.5 * (prob.knots[k] + prob.knots[k + 1]));
      atargets.push_back(cls.m == 1 ? theta[k] : 0.5 * (theta[k] + theta[k + 1]));
      aweights.push_back(0.0);
    }
  }
  // the augmented quadratic term only sees the original points, so targets
  // at midpoints are free; the seeded start makes the search begin at the
  // current solution's extension
  std::vector<double> afull(atargets);
  for (std::size_t k = 0; k < K; ++k) afull[2 * k] = prob.targets[k];

  const TfGeneralResult res =
      trendfilter_general(aknots, afull, aweights, n, cls.m, rho);

  double best = composite(atargets, aknots, aweights, afull);
  best = std::min(best, composite(res.theta, aknots, aweights, afull));
  const std::vector<double> shrunk = group_shrink(res.theta, aweights, n, lambda);
  best = std::min(best, composite(shrunk, aknots, aweights, afull));
  const std::vector<double> shrunk0 = group_shrink(atargets, aweights, n, lambda);
  best = std::min(best, composite(shrunk0, aknots, aweights, afull));

  return j_orig - best;
}

}  // namespace addreg
