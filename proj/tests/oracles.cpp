#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace oracle {

std::vector<std::vector<double>> penalty_rows(std::span<const double> knots, int m) {
  const std::size_t K = knots.size();
  if (m < 1) throw std::invalid_argument("penalty_rows: order must be >= 1");
  // run the divided-difference recurrence on the rows of the identity, so
  // row i of the result expresses entry i of the order-m difference as a
  // linear functional of theta
  std::vector<std::vector<double>> rows(K, std::vector<double>(K, 0.0));
  for (std::size_t i = 0; i < K; ++i) rows[i][i] = 1.0;
  std::size_t cur = K;
  for (int k = 1; k <= m; ++k) {
    if (cur < 2) return {};
    if (k > 1) {
      for (std::size_t i = 0; i < cur; ++i) {
        const double scale = (k - 1) / (knots[i + k - 1] - knots[i]);
        for (double& c : rows[i]) c *= scale;
      }
    }
    for (std::size_t i = 0; i + 1 < cur; ++i) {
      for (std::size_t j = 0; j < K; ++j) rows[i][j] = rows[i + 1][j] - rows[i][j];
    }
    --cur;
    rows.resize(cur);
  }
  return rows;
}

double seminorm_by_rows(std::span<const double> values, std::span<const double> knots,
                        int m) {
  double total = 0.0;
  for (const auto& row : penalty_rows(knots, m)) {
    double dot = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) dot += row[j] * values[j];
    total += std::abs(dot);
  }
  return total;
}

double prox_objective(const addreg::ProxProblem& prob, std::span<const double> theta) {
  const double n = prob.n();
  double ss = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double d = prob.targets[k] - theta[k];
    ss += prob.weights[k] * d * d;
  }
  double pen = 0.0;
  if (prob.cls.kind == addreg::ClassKind::BoundedVariation) {
    pen = seminorm_by_rows(theta, prob.knots, prob.cls.m);
  } else {
    pen = addreg::sobolev_seminorm(theta, prob.knots, prob.cls.m);
  }
  return ss / (2.0 * n) + prob.rho * pen;
}

double dual_box_prox_oracle(const addreg::ProxProblem& prob, double pg_tol, int max_iter,
                            std::vector<double>* theta_out) {
  prob.validate();
  if (prob.cls.kind != addreg::ClassKind::BoundedVariation)
    throw std::invalid_argument("dual_box_prox_oracle covers the TV-type classes only");
  const std::size_t K = prob.targets.size();
  const double n = prob.n();
  const auto rows = penalty_rows(prob.knots, prob.cls.m);
  const std::size_t R = rows.size();

  if (R == 0 || prob.rho == 0.0) {
    // no active penalty: the loss is minimized by the targets themselves
    if (theta_out) theta_out->assign(prob.targets.begin(), prob.targets.end());
    std::vector<double> theta(prob.targets.begin(), prob.targets.end());
    return prox_objective(prob, theta);
  }

  Eigen::MatrixXd D(R, K);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < K; ++j) D(static_cast<Eigen::Index>(i),
                                          static_cast<Eigen::Index>(j)) = rows[i][j];
  Eigen::VectorXd r(K), winv(K);
  for (std::size_t j = 0; j < K; ++j) {
    r(static_cast<Eigen::Index>(j)) = prob.targets[j];
    winv(static_cast<Eigen::Index>(j)) = 1.0 / prob.weights[j];
  }
  const Eigen::MatrixXd H = n * (D * winv.asDiagonal() * D.transpose());
  const Eigen::VectorXd g0 = D * r;

  // Lipschitz constant of the dual gradient by power iteration
  Eigen::VectorXd pv = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(R));
  double L = 0.0;
  for (int it = 0; it < 200; ++it) {
    pv = H * pv;
    const double norm = pv.norm();
    if (norm == 0.0) break;
    L = norm;
    pv /= norm;
  }
  if (L <= 0.0) L = 1.0;
  const double step = 1.0 / (1.05 * L);

  const auto clip = [&](Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
      v(i) = std::clamp(v(i), -prob.rho, prob.rho);
  };
  const auto primal_from_dual = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd theta = r - n * (winv.asDiagonal() * (D.transpose() * v));
    return theta;
  };

  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(R));
  Eigen::VectorXd y = v;
  double t_acc = 1.0;
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta = r;
  double phi_prev = -std::numeric_limits<double>::infinity();

  std::vector<double> theta_std(K);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd grad = g0 - H * y;  // ascent direction
    Eigen::VectorXd v_next = y + step * grad;
    clip(v_next);

    // track the primal objective along the way; its minimum certifies
    const Eigen::VectorXd theta = primal_from_dual(v_next);
    for (std::size_t j = 0; j < K; ++j) theta_std[j] = theta(static_cast<Eigen::Index>(j));
    const double J = prox_objective(prob, theta_std);
    if (J < best) {
      best = J;
      best_theta = theta;
    }

    // gradient mapping at the new point decides convergence
    const Eigen::VectorXd grad_v = g0 - H * v_next;
    Eigen::VectorXd probe = v_next + step * grad_v;
    clip(probe);
    const double pg = (probe - v_next).lpNorm<Eigen::Infinity>() / step;
    if (pg <= pg_tol) {
      v = v_next;
      break;
    }

    // monotone restart keeps the acceleration honest on the box
    const double phi = v_next.dot(g0) - 0.5 * v_next.dot(H * v_next);
    if (phi < phi_prev) {
      t_acc = 1.0;
      y = v_next;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
      y = v_next + ((t_acc - 1.0) / t_next) * (v_next - v);
      t_acc = t_next;
    }
    phi_prev = phi;
    v = v_next;
  }

  if (theta_out) {
    theta_out->resize(K);
    for (std::size_t j = 0; j < K; ++j)
      (*theta_out)[j] = best_theta(static_cast<Eigen::Index>(j));
  }
  return best;
}

double simpson_moment(const addreg::ComponentFit& fit, addreg::CovariateDist dist,
                      int power, std::size_t min_nodes) {
  if (power < 1) throw std::invalid_argument("simpson_moment: power must be >= 1");
  std::vector<double> cuts{0.0};
  for (double t : fit.knots)
    if (t > 0.0 && t < 1.0) cuts.push_back(t);
  cuts.push_back(1.0);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const addreg::ComponentEvaluator eval(fit);
  const auto f = [&](double x) {
    double g = eval(x);
    double val = g;
    for (int k = 1; k < power; ++k) val *= g;
    return val * addreg::dist_density(dist, x);
  };

  double total = 0.0;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double a = cuts[s];
    const double b = cuts[s + 1];
    const double len = b - a;
    // spread the node budget by length, always an even subinterval count
    std::size_t sub = static_cast<std::size_t>(
        std::ceil(len * static_cast<double>(min_nodes)));
    sub = std::max<std::size_t>(sub, 2);
    if (sub % 2 == 1) ++sub;
    const double h = len / static_cast<double>(sub);
    // segment ends sit on jump knots of step components; evaluate a hair
    // inside so each one-sided limit is integrated over its own segment
    const double nudge = 1e-10 * len;
    double acc = f(a + nudge) + f(b - nudge);
    for (std::size_t i = 1; i < sub; ++i) {
      acc += (i % 2 == 1 ? 4.0 : 2.0) * f(a + h * static_cast<double>(i));
    }
    total += acc * h / 3.0;
  }
  return total;
}

std::vector<double> kernel_ridge_fit(std::span<const double> knots,
                                     std::span<const double> targets,
                                     std::span<const double> weights, int m,
                                     double rho_prime) {
  const std::size_t K = knots.size();
  if (m != 1 && m != 2)
    throw std::invalid_argument("kernel_ridge_fit covers m = 1 and m = 2 only");
  if (targets.size() != K || weights.size() != K)
    throw std::invalid_argument("kernel_ridge_fit: input lengths disagree");
  double n = 0.0;
  for (double w : weights) n += w;

  const auto kern = [&](double s, double t) {
    if (s > t) std::swap(s, t);
    if (m == 1) return s;                     // min(s, t)
    return s * s * (3.0 * t - s) / 6.0;       // int (s-u)+ (t-u)+ du
  };

  // bordered system: (K + 2 rho' n W^-1) c + P a = r,  P' c = 0
  const std::size_t dim = K + static_cast<std::size_t>(m);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                            static_cast<Eigen::Index>(dim));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j)
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          kern(knots[i], knots[j]);
    A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) +=
        2.0 * rho_prime * n / weights[i] + 1e-12;
    double poly = 1.0;
    for (int d = 0; d < m; ++d) {
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(K + static_cast<std::size_t>(d))) = poly;
      A(static_cast<Eigen::Index>(K + static_cast<std::size_t>(d)), static_cast<Eigen::Index>(i)) = poly;
      poly *= knots[i];
    }
    rhs(static_cast<Eigen::Index>(i)) = targets[i];
  }
  const Eigen::VectorXd sol = A.fullPivLu().solve(rhs);

  std::vector<double> fitted(K, 0.0);
  for (std::size_t i = 0; i < K; ++i) {
    double g = 0.0;
    for (std::size_t j = 0; j < K; ++j)
      g += kern(knots[i], knots[j]) * sol(static_cast<Eigen::Index>(j));
    double poly = 1.0;
    for (int d = 0; d < m; ++d) {
      g += sol(static_cast<Eigen::Index>(K + static_cast<std::size_t>(d))) * poly;
      poly *= knots[i];
    }
    fitted[i] = g;
  }
  return fitted;
}

}  // namespace oracle
