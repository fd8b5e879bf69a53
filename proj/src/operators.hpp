#ifndef ADDREG_SRC_OPERATORS_HPP
#define ADDREG_SRC_OPERATORS_HPP

#include <Eigen/SparseCore>
#include <span>

namespace addreg::detail {

// Order-m divided-difference operator on a strictly increasing knot vector,
// (K - m) x K.  Row i applied to values theta gives the m-th divided
// difference spanning knots[i .. i+m], scaled so that it annihilates exactly
// the polynomials of degree m-1 sampled at the knots.  m = 1 is the plain
// first-difference matrix; higher orders follow the recursion
//   D_m = D_1 * diag((m-1) / (t[i+m-1] - t[i])) * D_{m-1}.
Eigen::SparseMatrix<double> difference_operator(std::span<const double> knots, int m);

// Gram of the first-derivative energy of the piecewise-linear interpolant,
// K x K: int (g')^2 = theta' G theta, the path Laplacian with conductances
// 1 / h over each knot gap.
Eigen::SparseMatrix<double> path_laplacian(std::span<const double> knots);

// Second divided-difference map, K x (K-2): column j pairs with interior
// knot j+1 and (Q' theta)_j is the slope change across that knot.
Eigen::SparseMatrix<double> second_diff_map(std::span<const double> knots);

// Natural-spline curvature Gram, (K-2) x (K-2) tridiagonal: gamma' R gamma
// integrates the squared second derivative of the spline whose interior
// second derivatives are gamma (zero at both ends).
Eigen::SparseMatrix<double> curvature_gram(std::span<const double> knots);

}  // namespace addreg::detail

#endif
