#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "addreg/prox.hpp"
#include "operators.hpp"

namespace addreg {
namespace detail {

Eigen::SparseMatrix<double> path_laplacian(std::span<const double> knots) {
  const auto K = static_cast<std::ptrdiff_t>(knots.size());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(4 * (K - 1)));
  for (std::ptrdiff_t i = 0; i + 1 < K; ++i) {
    const double c = 1.0 / (knots[static_cast<std::size_t>(i) + 1] -
                            knots[static_cast<std::size_t>(i)]);
    trips.emplace_back(i, i, c);
    trips.emplace_back(i + 1, i + 1, c);
    trips.emplace_back(i, i + 1, -c);
    trips.emplace_back(i + 1, i, -c);
  }
  Eigen::SparseMatrix<double> G(K, K);
  G.setFromTriplets(trips.begin(), trips.end());
  return G;
}

Eigen::SparseMatrix<double> second_diff_map(std::span<const double> knots) {
  const auto K = static_cast<std::ptrdiff_t>(knots.size());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(3 * (K - 2)));
  for (std::ptrdiff_t j = 0; j + 2 < K; ++j) {
    const double hl = knots[static_cast<std::size_t>(j) + 1] - knots[static_cast<std::size_t>(j)];
    const double hr = knots[static_cast<std::size_t>(j) + 2] - knots[static_cast<std::size_t>(j) + 1];
    trips.emplace_back(j, j, 1.0 / hl);
    trips.emplace_back(j + 1, j, -1.0 / hl - 1.0 / hr);
    trips.emplace_back(j + 2, j, 1.0 / hr);
  }
  Eigen::SparseMatrix<double> Q(K, K - 2);
  Q.setFromTriplets(trips.begin(), trips.end());
  return Q;
}

Eigen::SparseMatrix<double> curvature_gram(std::span<const double> knots) {
  const auto K = static_cast<std::ptrdiff_t>(knots.size());
  std::vector<Eigen::Triplet<double>> trips;
  for (std::ptrdiff_t j = 0; j + 2 < K; ++j) {
    const double hl = knots[static_cast<std::size_t>(j) + 1] - knots[static_cast<std::size_t>(j)];
    const double hr = knots[static_cast<std::size_t>(j) + 2] - knots[static_cast<std::size_t>(j) + 1];
    trips.emplace_back(j, j, (hl + hr) / 3.0);
    if (j + 3 < K) {
      trips.emplace_back(j, j + 1, hr / 6.0);
      trips.emplace_back(j + 1, j, hr / 6.0);
    }
  }
  Eigen::SparseMatrix<double> R(K - 2, K - 2);
  R.setFromTriplets(trips.begin(), trips.end());
  return R;
}

}  // namespace detail

// The seminorm penalty rho * s(theta) is handled through the classical
// squared form rho' * s(theta)^2: for any minimizer with s > 0 the two
// problems share their solution exactly when 2 rho' s(rho') = rho, and the
// map rho' -> 2 rho' s(rho') increases from 0 to the dual limit
//   L_inf = lim 2 rho' s(rho'),
// the dual seminorm of the residual left by the weighted polynomial fit.
// So: if rho >= L_inf the polynomial fit is optimal and s = 0 (the group
// penalty's screening analogue for curvature); otherwise the self-consistent
// rho' is found by bracketed bisection, which the convexity of the problem
// makes globally reliable.  Each evaluation of s(rho') is one banded solve:
// m = 1 fits theta directly, m = 2 uses the second-derivative reduction
//   (R + alpha Q' W^-1 Q) gamma = Q' r,   theta = r - alpha W^-1 Q gamma
// with alpha = 2 n rho'.
SobolevProx sobolev_prox(const ProxProblem& prob, double selfcons_tol) {
  prob.validate();
  if (prob.cls.kind != ClassKind::SobolevL2)
    throw std::invalid_argument("sobolev_prox expects a Sobolev class");
  const int m = prob.cls.m;
  const auto K = static_cast<std::ptrdiff_t>(prob.knots.size());
  const double n = prob.n();
  const double rho = prob.rho;
  Eigen::Map<const Eigen::VectorXd> r(prob.targets.data(), K);
  Eigen::Map<const Eigen::VectorXd> w(prob.weights.data(), K);

  SobolevProx out;
  out.fit.cls = prob.cls;
  out.fit.knots = prob.knots;
  out.fit.multiplicities = prob.weights;
  out.fit.rule = m == 1 ? EvalRule::PiecewiseLinear : EvalRule::NaturalSpline;

  auto finish = [&](std::vector<double> vals, double s) -> SobolevProx& {
    out.fit.values = std::move(vals);
    out.fit.seminorm_value = s;
    out.fit.empnorm_value = empirical_norm(out.fit.values, prob.weights);
    return out;
  };

  if (K <= m) {
    // too few points for the derivative energy to see anything
    out.zero_curvature = true;
    return finish(prob.targets, 0.0);
  }
  if (rho == 0.0)
    return finish(prob.targets, sobolev_seminorm(prob.targets, prob.knots, m));

  // weighted polynomial fit of degree m-1 and the dual limit it induces
  std::vector<double> poly(static_cast<std::size_t>(K));
  double dual_limit = 0.0;
  Eigen::SparseMatrix<double> G, Q, R, QtWinvQ;
  if (m == 1) {
    G = detail::path_laplacian(prob.knots);
    const double mean = weighted_mean(prob.targets, prob.weights);
    std::fill(poly.begin(), poly.end(), mean);
    // L_inf^2 = c' G^+ c with c = W (r - mean) / n; c sums to zero, so one
    // coordinate of the representative can be pinned to zero
    Eigen::VectorXd c = (w.array() * (r.array() - mean) / n).matrix();
    Eigen::SparseMatrix<double> G22 = G.bottomRightCorner(K - 1, K - 1);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldl(G22);
    if (ldl.info() != Eigen::Success)
      throw solver_error("derivative-energy system could not be factorized");
    const Eigen::VectorXd d2 = ldl.solve(c.tail(K - 1));
    dual_limit = std::sqrt(std::max(0.0, d2.dot(c.tail(K - 1))));
  } else {
    Q = detail::second_diff_map(prob.knots);
    R = detail::curvature_gram(prob.knots);
    QtWinvQ = Eigen::SparseMatrix<double>(
        Q.transpose() * Eigen::SparseMatrix<double>(w.cwiseInverse().asDiagonal() * Q));
    // weighted straight-line fit
    const double sw = w.sum();
    const double sx = w.dot(Eigen::Map<const Eigen::VectorXd>(prob.knots.data(), K));
    Eigen::Map<const Eigen::VectorXd> t(prob.knots.data(), K);
    const double sxx = (w.array() * t.array().square()).sum();
    const double sy = w.dot(r);
    const double sxy = (w.array() * t.array() * r.array()).sum();
    const double det = sw * sxx - sx * sx;
    const double slope = (sw * sxy - sx * sy) / det;
    const double icept = (sy - slope * sx) / sw;
    for (std::ptrdiff_t i = 0; i < K; ++i)
      poly[static_cast<std::size_t>(i)] = icept + slope * prob.knots[static_cast<std::size_t>(i)];
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldl(QtWinvQ);
    if (ldl.info() != Eigen::Success)
      throw solver_error("curvature system could not be factorized");
    const Eigen::VectorXd xi = ldl.solve(Eigen::VectorXd(Q.transpose() * r));
    dual_limit = std::sqrt(std::max(0.0, xi.dot(R * xi))) / n;
  }
  out.dual_limit = dual_limit;

  if (rho >= dual_limit) {
    out.zero_curvature = true;
    return finish(std::move(poly), 0.0);
  }

  // one squared-penalty solve; returns the fitted values and their seminorm.
  // Both systems mix entry scales across many orders of magnitude when knots
  // nearly coincide, so one pass of iterative refinement on the factorized
  // system is kept in to pull the residual back toward rounding level.
  auto solve_at = [&](double alpha, std::vector<double>* vals_out) -> double {
    if (m == 1) {
      Eigen::SparseMatrix<double> A = G * alpha;
      for (std::ptrdiff_t i = 0; i < K; ++i) A.coeffRef(i, i) += w[i];
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldl(A);
      if (ldl.info() != Eigen::Success)
        throw solver_error("derivative-energy system could not be factorized");
      const Eigen::VectorXd rhs = (w.array() * r.array()).matrix();
      Eigen::VectorXd th = ldl.solve(rhs);
      th += ldl.solve(Eigen::VectorXd(rhs - A * th));
      if (vals_out) vals_out->assign(th.data(), th.data() + K);
      return std::sqrt(std::max(0.0, th.dot(G * th)));
    }
    Eigen::SparseMatrix<double> B = R + alpha * QtWinvQ;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldl(B);
    if (ldl.info() != Eigen::Success)
      throw solver_error("curvature system could not be factorized");
    const Eigen::VectorXd rhs = Q.transpose() * r;
    Eigen::VectorXd gamma = ldl.solve(rhs);
    gamma += ldl.solve(Eigen::VectorXd(rhs - B * gamma));
    if (vals_out) {
      const Eigen::VectorXd th = r - alpha * (Q * gamma).cwiseQuotient(w);
      vals_out->assign(th.data(), th.data() + K);
    }
    return std::sqrt(std::max(0.0, gamma.dot(R * gamma)));
  };
  // rho' and the classical parameter differ by the fixed factor 2n
  auto fval = [&](double rho_prime) { return 2.0 * rho_prime * solve_at(2.0 * n * rho_prime, nullptr); };

  // s(rho') never exceeds the interpolant's seminorm, which brackets the
  // crossing from below; double until the other side is found
  const double s_interp = sobolev_seminorm(prob.targets, prob.knots, m);
  double lo = rho / (2.0 * s_interp);
  double flo = fval(lo);
  while (flo > rho) {  // numerical safety, the bound above says <= rho
    lo *= 0.5;
    flo = fval(lo);
    if (lo < 1e-280) break;
  }
  double hi = lo;
  double fhi = flo;
  int guard = 0;
  while (fhi < rho && guard++ < 2000) {
    hi *= 2.0;
    fhi = fval(hi);
    if (hi > 1e290) break;
  }

  double rho_prime = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    rho_prime = 0.5 * (lo + hi);
    const double f = fval(rho_prime);
    if (std::abs(f - rho) <= selfcons_tol * rho) break;
    (f < rho ? lo : hi) = rho_prime;
    if (hi - lo <= 1e-15 * hi) break;
  }

  std::vector<double> vals;
  const double s = solve_at(2.0 * n * rho_prime, &vals);
  out.rho_prime = rho_prime;
  return finish(std::move(vals), s);
}

}  // namespace addreg
