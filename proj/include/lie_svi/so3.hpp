#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace lie_svi {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix3X = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

/// Raised when a rotation lies on the Cayley chart boundary (angle pi) or a
/// chart transition has a vanishing denominator.
class ChartSingularity : public std::runtime_error {
public:
  explicit ChartSingularity(const std::string& what) : std::runtime_error(what) {}
};

/// Skew matrix of v, so that hat(v) * w == v.cross(w).
template <typename Derived>
Matrix3<typename Derived::Scalar> hat(const Eigen::MatrixBase<Derived>& v) {
  EIGEN_STATIC_ASSERT_VECTOR_SPECIFIC_SIZE(Derived, 3);
  using Scalar = typename Derived::Scalar;
  Matrix3<Scalar> s;
  s << Scalar(0), -v(2), v(1),
       v(2), Scalar(0), -v(0),
       -v(1), v(0), Scalar(0);
  return s;
}

/// Inverse of hat. Throws std::invalid_argument if S is not skew-symmetric
/// to 1e-12 in the Frobenius norm.
template <typename Derived>
Vector3<typename Derived::Scalar> vee(const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  if ((s + s.transpose()).norm() > Scalar(1e-12)) {
    throw std::invalid_argument("vee: not skew-symmetric");
  }
  return Vector3<Scalar>(s(2, 1), s(0, 2), s(1, 0));
}

/// Unscaled matrix Cayley map M -> (I - M)(I + M)^{-1}. It is an involution
/// and maps skew matrices to rotations.
template <typename Derived>
Matrix3<typename Derived::Scalar> cayley_matrix(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const Matrix3<Scalar> id = Matrix3<Scalar>::Identity();
  // (I - M) and (I + M)^{-1} commute, so X = (I + M)^{-1}(I - M) solves
  // (I + M) X = (I - M) column by column.
  return (id + m).partialPivLu().solve(id - m);
}

template <typename Derived>
Matrix3<typename Derived::Scalar> cay(const Eigen::MatrixBase<Derived>& v) {
  return cayley_matrix(hat(v));
}

/// Chart coordinates of R. Throws ChartSingularity when R is a rotation by
/// pi, where I + R is singular.
template <typename Derived>
Vector3<typename Derived::Scalar> cay_inv(const Eigen::MatrixBase<Derived>& r) {
  using Scalar = typename Derived::Scalar;
  const Matrix3<Scalar> id = Matrix3<Scalar>::Identity();
  if (std::abs((id + r).determinant()) < Scalar(1e-12)) {
    throw ChartSingularity("cay_inv: chart singularity (rotation angle pi)");
  }
  const Matrix3<Scalar> q = cayley_matrix(r);
  const Matrix3<Scalar> skew = Scalar(0.5) * (q - q.transpose());
  return Vector3<Scalar>(skew(2, 1), skew(0, 2), skew(1, 0));
}

/// Directional derivative of Cay at hat(x) along hat(y):
///   -Y (I + X)^{-1} - (I - X)(I + X)^{-1} Y (I + X)^{-1}.
template <typename DerivedX, typename DerivedY>
Matrix3<typename DerivedX::Scalar> dcay(const Eigen::MatrixBase<DerivedX>& x,
                                        const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  const Matrix3<Scalar> id = Matrix3<Scalar>::Identity();
  const Matrix3<Scalar> xh = hat(x);
  const Matrix3<Scalar> yh = hat(y);
  const Matrix3<Scalar> inv = (id + xh).inverse();
  return -yh * inv - (id - xh) * inv * yh * inv;
}

/// Body velocity vee(Cay(x)^T d/dt Cay(x(t))) for chart velocity xdot.
/// Closed form of Cay(x)^T dcay(x, xdot): -2 (xdot + x cross xdot) / (1 + |x|^2).
template <typename DerivedX, typename DerivedY>
Vector3<typename DerivedX::Scalar> chart_body_velocity(const Eigen::MatrixBase<DerivedX>& x,
                                                       const Eigen::MatrixBase<DerivedY>& xdot) {
  using Scalar = typename DerivedX::Scalar;
  const Vector3<Scalar> xv = x;
  const Vector3<Scalar> xd = xdot;
  return Scalar(-2) * (xd + xv.cross(xd)) / (Scalar(1) + xv.squaredNorm());
}

/// Matrix A(x) with body velocity = A(x) * xdot.
template <typename Derived>
Matrix3<typename Derived::Scalar> chart_velocity_map(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return Scalar(-2) * (Matrix3<Scalar>::Identity() + hat(x)) / (Scalar(1) + x.squaredNorm());
}

/// Spectral norm of R1 - R2 in the 3x3 embedding space.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar group_error(const Eigen::MatrixBase<DerivedA>& r1,
                                      const Eigen::MatrixBase<DerivedB>& r2) {
  using Scalar = typename DerivedA::Scalar;
  const Matrix3<Scalar> diff = r1 - r2;
  Eigen::JacobiSVD<Matrix3<Scalar>> svd(diff);
  return svd.singularValues()(0);
}

/// ||R^T R - I||_F
template <typename Derived>
typename Derived::Scalar orthogonality_defect(const Eigen::MatrixBase<Derived>& r) {
  using Scalar = typename Derived::Scalar;
  return (r.transpose() * r - Matrix3<Scalar>::Identity()).norm();
}

enum class ChartStatus { ok, near_singular };

struct ChartHealth {
  double max_stage_norm = 0.0;
  double warn_threshold = 1.0;
  ChartStatus status = ChartStatus::ok;
};

inline constexpr double kDefaultChartWarnThreshold = 1.0;

/// Largest stage coordinate norm (columns of `stages`) against a threshold.
template <typename Derived>
ChartHealth chart_guard(const Eigen::MatrixBase<Derived>& stages,
                        double warn_threshold = kDefaultChartWarnThreshold) {
  if (!(warn_threshold > 0.0)) {
    throw std::invalid_argument("chart_guard: warn_threshold must be positive");
  }
  ChartHealth health;
  health.warn_threshold = warn_threshold;
  for (Eigen::Index i = 0; i < stages.cols(); ++i) {
    health.max_stage_norm = std::max<double>(health.max_stage_norm, stages.col(i).norm());
  }
  health.status = health.max_stage_norm >= warn_threshold ? ChartStatus::near_singular
                                                          : ChartStatus::ok;
  return health;
}

// Change of natural chart. With base g0 = Cay(xi0), a point g0 * Cay(xi) of
// the new chart has coordinates lambda in the old chart:
//   Cay(lambda) = Cay(xi0) Cay(xi).

template <typename Scalar>
Vector3<Scalar> chart_transition(const Vector3<Scalar>& xi0, const Vector3<Scalar>& xi) {
  const Scalar den = Scalar(-1) + xi0.dot(xi);
  if (std::abs(den) <= Scalar(1e-12)) {
    throw ChartSingularity("chart_transition: transition singularity");
  }
  Vector3<Scalar> lam;
  lam(0) = -xi(0) - xi0(0) + xi(2) * xi0(1) - xi(1) * xi0(2);
  lam(1) = -xi(1) - xi0(1) + xi(0) * xi0(2) - xi(2) * xi0(0);
  lam(2) = -xi(2) - xi0(2) + xi(1) * xi0(0) - xi(0) * xi0(1);
  return lam / den;
}

template <typename Scalar>
Vector3<Scalar> chart_transition_inv(const Vector3<Scalar>& xi0, const Vector3<Scalar>& lam) {
  const Scalar den = Scalar(1) + lam.dot(xi0);
  if (std::abs(den) <= Scalar(1e-12)) {
    throw ChartSingularity("chart_transition_inv: transition singularity");
  }
  Vector3<Scalar> xi;
  xi(0) = lam(0) - xi0(0) + lam(2) * xi0(1) - lam(1) * xi0(2);
  xi(1) = lam(1) - xi0(1) + lam(0) * xi0(2) - lam(2) * xi0(0);
  xi(2) = lam(2) - xi0(2) + lam(1) * xi0(0) - lam(0) * xi0(1);
  return xi / den;
}

/// d xi / d lambda of chart_transition_inv, entry (a, b) = d xi_a / d lambda_b.
template <typename Scalar>
Matrix3<Scalar> transition_jacobian(const Vector3<Scalar>& xi0, const Vector3<Scalar>& lam) {
  const Scalar den = Scalar(1) + lam.dot(xi0);
  if (std::abs(den) <= Scalar(1e-12)) {
    throw ChartSingularity("transition_jacobian: transition singularity");
  }
  // numerator N(lambda) = lambda - xi0 + xi0 x lambda, so dN/dlambda = I + hat(xi0)
  const Vector3<Scalar> num = lam - xi0 + xi0.cross(lam);
  const Matrix3<Scalar> dnum = Matrix3<Scalar>::Identity() + hat(xi0);
  return dnum / den - num * xi0.transpose() / (den * den);
}

/// d/d xi0 of chart_transition_inv(xi0, lambda) at fixed lambda: how the new
/// chart's coordinates of a fixed point move when the chart base moves.
template <typename Scalar>
Matrix3<Scalar> transition_base_jacobian(const Vector3<Scalar>& xi0, const Vector3<Scalar>& lam) {
  const Scalar den = Scalar(1) + lam.dot(xi0);
  if (std::abs(den) <= Scalar(1e-12)) {
    throw ChartSingularity("transition_base_jacobian: transition singularity");
  }
  // N(xi0) = lambda - xi0 - lambda x xi0, so dN/dxi0 = -I - hat(lambda)
  const Vector3<Scalar> num = lam - xi0 + xi0.cross(lam);
  const Matrix3<Scalar> dnum = -Matrix3<Scalar>::Identity() - hat(lam);
  return dnum / den - num * lam.transpose() / (den * den);
}

}  // namespace lie_svi
