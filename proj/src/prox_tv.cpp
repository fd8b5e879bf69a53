#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "addreg/prox.hpp"

namespace addreg {

double ProxProblem::n() const {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

void ProxProblem::validate() const {
  cls.validate();
  const std::size_t k = knots.size();
  if (k == 0) throw std::invalid_argument("prox problem has no knots");
  if (targets.size() != k || weights.size() != k)
    throw std::invalid_argument("prox problem arrays disagree in length");
  for (std::size_t i = 0; i + 1 < k; ++i)
    if (!(knots[i] < knots[i + 1]))
      throw std::invalid_argument("prox knots must be strictly increasing");
  for (std::size_t i = 0; i < k; ++i) {
    if (!std::isfinite(targets[i]) || !std::isfinite(knots[i]))
      throw std::invalid_argument("prox problem has non-finite entries");
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
      throw std::invalid_argument("prox weights must be positive and finite");
  }
  if (!(rho >= 0.0) || !std::isfinite(rho))
    throw std::invalid_argument("prox penalty must be finite and nonnegative");
}

// Weighted fused-lasso signal approximator.  The forward pass maintains the
// derivative of the running Bellman message, clipped to [-lam, lam], as a
// sorted breakpoint list (x: locations, a/b: slope and intercept increments
// when crossing a breakpoint left to right).  Point i contributes the
// derivative term w_i (theta - r_i), so against the classical unit-weight
// recursion every coefficient pair picks up the local weight.  The backward
// pass clamps each coefficient to the stored clip interval [tm_k, tp_k].
// O(K) total: each breakpoint is inserted once and consumed at most once.
std::vector<double> tv1_prox(const ProxProblem& prob) {
  prob.validate();
  if (prob.cls.kind != ClassKind::BoundedVariation || prob.cls.m != 1)
    throw std::invalid_argument("tv1_prox expects the first-order bounded-variation class");
  const std::size_t K = prob.knots.size();
  const std::vector<double>& r = prob.targets;
  const std::vector<double>& w = prob.weights;
  // the DP works on the objective scaled by n: (1/2) sum w_i (.)^2 + lam * TV
  const double lam = prob.n() * prob.rho;
  std::vector<double> theta(K);
  if (K == 1 || lam == 0.0) {
    std::copy(r.begin(), r.end(), theta.begin());
    return theta;
  }

  std::vector<double> x(2 * K), a(2 * K), b(2 * K);
  std::vector<double> tm(K - 1), tp(K - 1);

  std::ptrdiff_t l = static_cast<std::ptrdiff_t>(K) - 1;
  std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(K);
  tm[0] = r[0] - lam / w[0];
  tp[0] = r[0] + lam / w[0];
  x[l] = tm[0];
  x[rr] = tp[0];
  a[l] = w[0];
  b[l] = -w[0] * r[0] + lam;
  a[rr] = -w[0];
  b[rr] = w[0] * r[0] + lam;
  double afirst = w[1];
  double bfirst = -w[1] * r[1] - lam;
  double alast = -w[1];
  double blast = w[1] * r[1] - lam;

  for (std::size_t k = 1; k + 1 < K; ++k) {
    // walk in from the left until the accumulated derivative rises above -lam
    double alo = afirst, blo = bfirst;
    std::ptrdiff_t lo = l;
    for (; lo <= rr; ++lo) {
      if (alo * x[lo] + blo > -lam) break;
      alo += a[lo];
      blo += b[lo];
    }
    // and in from the right until it falls below +lam
    double ahi = alast, bhi = blast;
    std::ptrdiff_t hi = rr;
    for (; hi >= lo; --hi) {
      if (-ahi * x[hi] - bhi < lam) break;
      ahi += a[hi];
      bhi += b[hi];
    }

    tm[k] = (-lam - blo) / alo;
    l = lo - 1;
    x[l] = tm[k];
    tp[k] = (lam + bhi) / (-ahi);
    rr = hi + 1;
    x[rr] = tp[k];

    a[l] = alo;
    b[l] = blo + lam;
    a[rr] = ahi;
    b[rr] = bhi + lam;
    afirst = w[k + 1];
    bfirst = -w[k + 1] * r[k + 1] - lam;
    alast = -w[k + 1];
    blast = w[k + 1] * r[k + 1] - lam;
  }

  // rightmost coefficient sits at the zero of the final message derivative
  double alo = afirst, blo = bfirst;
  std::ptrdiff_t lo = l;
  for (; lo <= rr; ++lo) {
    if (alo * x[lo] + blo > 0.0) break;
    alo += a[lo];
    blo += b[lo];
  }
  theta[K - 1] = -blo / alo;
  for (std::size_t k = K - 1; k-- > 0;)
    theta[k] = std::clamp(theta[k + 1], tm[k], tp[k]);
  return theta;
}

std::vector<double> group_shrink(std::span<const double> theta,
                                 std::span<const double> weights, double n, double lambda) {
  if (theta.size() != weights.size())
    throw std::invalid_argument("group_shrink arrays disagree in length");
  if (!(n > 0.0) || !(lambda >= 0.0))
    throw std::invalid_argument("group_shrink needs n > 0 and lambda >= 0");
  double ss = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) ss += weights[i] * theta[i] * theta[i];
  const double norm = std::sqrt(ss / n);
  std::vector<double> out(theta.begin(), theta.end());
  if (norm <= lambda) {
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }
  const double scale = 1.0 - lambda / norm;
  for (double& v : out) v *= scale;
  return out;
}

FunctionalProx functional_prox(const ProxProblem& prob) {
  prob.validate();
  FunctionalProx out;
  if (prob.cls.kind == ClassKind::BoundedVariation) {
    if (prob.cls.m == 1) {
      out.values = tv1_prox(prob);
      out.rule = EvalRule::StepRightContinuous;
    } else {
      out.values = trendfilter_prox(prob);
      out.rule = EvalRule::PiecewiseLinear;
    }
    out.seminorm = tv_seminorm(out.values, prob.knots, prob.cls.m);
  } else {
    SobolevProx sp = sobolev_prox(prob);
    out.values = std::move(sp.fit.values);
    out.rule = sp.fit.rule;
    out.seminorm = sp.fit.seminorm_value;
  }
  return out;
}

}  // namespace addreg
