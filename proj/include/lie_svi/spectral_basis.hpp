#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace lie_svi {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Stage times on [0, h]: n + 1 Chebyshev-Lobatto points in ascending order,
/// nodes(0) == 0 and nodes(n) == h exactly.
template <typename Scalar>
struct StageNodes {
  Scalar h{};
  VectorX<Scalar> nodes;

  Eigen::Index degree() const { return nodes.size() - 1; }
};

/// Gauss-Legendre rule on [0, 1].
template <typename Scalar>
struct QuadratureRule {
  VectorX<Scalar> points;
  VectorX<Scalar> weights;

  Eigen::Index size() const { return points.size(); }
};

template <typename Scalar = double>
StageNodes<Scalar> chebyshev_lobatto_nodes(int n, Scalar h) {
  if (n < 1) throw std::invalid_argument("chebyshev_lobatto_nodes: n must be >= 1");
  if (!(h > Scalar(0))) throw std::invalid_argument("chebyshev_lobatto_nodes: h must be positive");
  StageNodes<Scalar> out;
  out.h = h;
  out.nodes.resize(n + 1);
  const Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar half = h / Scalar(2);
  // ascending order: node k is the (n - k)-th point of (h/2) cos(i pi / n) + h/2
  for (int k = 0; k <= n; ++k) {
    out.nodes(k) = half * std::cos(Scalar(n - k) * pi / Scalar(n)) + half;
  }
  out.nodes(0) = Scalar(0);
  out.nodes(n) = h;
  if (n % 2 == 0) out.nodes(n / 2) = half;
  return out;
}

/// Barycentric weights 1 / prod_{j != i}(x_i - x_j) for nodes rescaled to [0, 1].
template <typename Scalar>
VectorX<Scalar> barycentric_weights(const StageNodes<Scalar>& stage) {
  const Eigen::Index count = stage.nodes.size();
  const VectorX<Scalar> x = stage.nodes / stage.h;
  VectorX<Scalar> w(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    Scalar prod(1);
    for (Eigen::Index j = 0; j < count; ++j) {
      if (j == i) continue;
      const Scalar d = x(i) - x(j);
      if (d == Scalar(0)) throw std::invalid_argument("lagrange basis: duplicate nodes");
      prod *= d;
    }
    w(i) = Scalar(1) / prod;
  }
  return w;
}

/// Differentiation matrix D(k, i) = phi_i'(t_k).
template <typename Scalar>
MatrixX<Scalar> differentiation_matrix(const StageNodes<Scalar>& stage) {
  const Eigen::Index count = stage.nodes.size();
  const VectorX<Scalar> w = barycentric_weights(stage);
  MatrixX<Scalar> d = MatrixX<Scalar>::Zero(count, count);
  for (Eigen::Index k = 0; k < count; ++k) {
    Scalar diag(0);
    for (Eigen::Index i = 0; i < count; ++i) {
      if (i == k) continue;
      d(k, i) = (w(i) / w(k)) / (stage.nodes(k) - stage.nodes(i));
      diag -= d(k, i);
    }
    d(k, k) = diag;
  }
  return d;
}

template <typename Scalar>
struct LagrangeMatrices {
  MatrixX<Scalar> phi;   // phi(i, j) = phi_i(s_j)
  MatrixX<Scalar> dphi;  // dphi(i, j) = phi_i'(s_j)
};

/// Lagrange basis values and derivatives at `points` (each in [0, h]).
template <typename Scalar>
LagrangeMatrices<Scalar> lagrange_matrices(const StageNodes<Scalar>& stage,
                                           const VectorX<Scalar>& points) {
  const Eigen::Index count = stage.nodes.size();
  const VectorX<Scalar> w = barycentric_weights(stage);
  const Scalar slack = Scalar(64) * std::numeric_limits<Scalar>::epsilon() * stage.h;
  LagrangeMatrices<Scalar> out;
  out.phi.resize(count, points.size());
  for (Eigen::Index j = 0; j < points.size(); ++j) {
    const Scalar s = points(j);
    if (s < -slack || s > stage.h + slack) {
      throw std::invalid_argument("lagrange_matrices: evaluation point outside [0, h]");
    }
    Eigen::Index hit = -1;
    for (Eigen::Index i = 0; i < count; ++i) {
      if (s == stage.nodes(i)) hit = i;
    }
    if (hit >= 0) {
      out.phi.col(j).setZero();
      out.phi(hit, j) = Scalar(1);
      continue;
    }
    // second barycentric form
    Scalar denom(0);
    for (Eigen::Index i = 0; i < count; ++i) {
      out.phi(i, j) = w(i) / (s - stage.nodes(i));
      denom += out.phi(i, j);
    }
    out.phi.col(j) /= denom;
  }
  // phi_i' has degree below the node count, so it is reproduced exactly by
  // interpolating its nodal values: phi_i'(s) = sum_k phi_k(s) D(k, i).
  out.dphi = differentiation_matrix(stage).transpose() * out.phi;
  return out;
}

/// Gauss-Legendre rule with m points on [0, 1]. Nodes come from the
/// eigenvalues of the Jacobi matrix and are polished by Newton iteration on
/// the Legendre polynomial; weights use 2 / ((1 - x^2) P_m'(x)^2) on [-1, 1].
template <typename Scalar = double>
QuadratureRule<Scalar> gauss_legendre_rule(int m) {
  if (m < 1) throw std::invalid_argument("gauss_legendre_rule: m must be >= 1");
  MatrixX<Scalar> jacobi = MatrixX<Scalar>::Zero(m, m);
  for (int k = 1; k < m; ++k) {
    const Scalar beta = Scalar(k) / std::sqrt(Scalar(4) * k * k - Scalar(1));
    jacobi(k, k - 1) = beta;
    jacobi(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(jacobi);
  VectorX<Scalar> x = eig.eigenvalues();

  auto legendre = [m](Scalar t, Scalar& dp) {
    Scalar p0(1), p1 = t;
    for (int k = 2; k <= m; ++k) {
      const Scalar p2 = ((Scalar(2) * k - 1) * t * p1 - Scalar(k - 1) * p0) / Scalar(k);
      p0 = p1;
      p1 = p2;
    }
    dp = Scalar(m) * (t * p1 - p0) / (t * t - Scalar(1));
    return p1;
  };

  QuadratureRule<Scalar> rule;
  rule.points.resize(m);
  rule.weights.resize(m);
  for (int i = 0; i < m; ++i) {
    Scalar t = x(i);
    Scalar dp{};
    for (int it = 0; it < 3; ++it) {
      const Scalar p = legendre(t, dp);
      t -= p / dp;
    }
    legendre(t, dp);
    x(i) = t;
    rule.points(i) = (t + Scalar(1)) / Scalar(2);
    rule.weights(i) = Scalar(1) / ((Scalar(1) - t * t) * dp * dp);  // half of the [-1,1] weight
  }
  // symmetric rule: enforce mirror symmetry exactly
  for (int i = 0; i < m / 2; ++i) {
    const int k = m - 1 - i;
    const Scalar c = (rule.points(i) + (Scalar(1) - rule.points(k))) / Scalar(2);
    const Scalar b = (rule.weights(i) + rule.weights(k)) / Scalar(2);
    rule.points(i) = c;
    rule.points(k) = Scalar(1) - c;
    rule.weights(i) = b;
    rule.weights(k) = b;
  }
  if (m % 2 == 1) rule.points(m / 2) = Scalar(0.5);
  return rule;
}

/// Precomputed basis data for one step length: stage nodes, quadrature rule,
/// and Lagrange values/derivatives at the quadrature points and endpoints.
template <typename Scalar>
struct BasisTableau {
  StageNodes<Scalar> stage;
  QuadratureRule<Scalar> quad;
  MatrixX<Scalar> phi;   // (n + 1) x m at c_j h
  MatrixX<Scalar> dphi;  // (n + 1) x m at c_j h
  VectorX<Scalar> phi_at_0, phi_at_h, dphi_at_0, dphi_at_h;

  Scalar h() const { return stage.h; }
  int degree() const { return static_cast<int>(stage.nodes.size()) - 1; }
  Eigen::Index stage_count() const { return stage.nodes.size(); }
};

/// Tableau for degree n on [0, h] with m Gauss points (m <= 0 selects n + 1).
template <typename Scalar = double>
BasisTableau<Scalar> make_tableau(int n, Scalar h, int m = 0) {
  BasisTableau<Scalar> tab;
  tab.stage = chebyshev_lobatto_nodes<Scalar>(n, h);
  tab.quad = gauss_legendre_rule<Scalar>(m > 0 ? m : n + 1);
  const VectorX<Scalar> at_quad = tab.quad.points * h;
  auto interior = lagrange_matrices(tab.stage, at_quad);
  tab.phi = std::move(interior.phi);
  tab.dphi = std::move(interior.dphi);
  VectorX<Scalar> ends(2);
  ends << Scalar(0), h;
  auto edge = lagrange_matrices(tab.stage, ends);
  tab.phi_at_0 = edge.phi.col(0);
  tab.phi_at_h = edge.phi.col(1);
  tab.dphi_at_0 = edge.dphi.col(0);
  tab.dphi_at_h = edge.dphi.col(1);
  return tab;
}

}  // namespace lie_svi
