#pragma once

#include "lie_svi/so3.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace lie_svi {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Nonstandard inertia J_d, the standard inertia J = tr(J_d) I - J_d, and
/// the coefficients I_i = sum_{j != i} (J_d)_jj (which equal diag(J)).
struct InertiaSpec {
  Vec3 jd = Vec3::Ones();
  Vec3 j = Vec3::Constant(2.0);
  Vec3 coeffs = Vec3::Constant(2.0);
};

InertiaSpec inertia_from_jd(const Vec3& jd);

/// Gravity term m g e3^T R rho of the pendulum Lagrangian.
struct PotentialSpec {
  double gravity = 1.0;
  double mass = 1.0;
  Vec3 rho = Vec3::UnitZ();
  Vec3 up = Vec3::UnitZ();
};

enum class ModelKind { rigid_body, pendulum };

struct ModelSpec {
  ModelKind kind = ModelKind::rigid_body;
  InertiaSpec inertia;
  std::optional<PotentialSpec> potential;
  /// Factor in front of tr(Rdot^T R J_d R^T Rdot) in the matrix Lagrangian:
  /// 1 for the free rigid body, 1/2 for the pendulum.
  double matrix_kinetic_scale = 1.0;
  /// Global factor applied to the coordinate Lagrangian. The stationary stage
  /// configuration does not depend on it.
  double coordinate_scale = 1.0;
};

ModelSpec make_rigid_body(const Vec3& jd);
ModelSpec make_pendulum(const Vec3& jd, double mass, double gravity, const Vec3& rho);

const char* model_name(ModelKind kind);

/// Matrix-form Lagrangian. Throws std::invalid_argument if R^T Rdot is not
/// skew to 1e-10.
double lagrangian_matrix(const ModelSpec& model, const Mat3& r, const Mat3& rdot);

/// Kinetic part of lagrangian_matrix at body velocity omega.
double kinetic_matrix(const ModelSpec& model, const Vec3& omega);

/// m g e3^T R rho, or 0 without a potential.
double potential_term_matrix(const ModelSpec& model, const Mat3& r);

/// Chart-coordinate kinetic energy
///   2 / (1 + |xi|^2)^2 * (I_1 f_a^2 + I_2 f_b^2 + I_3 f_c^2),
/// with f = xidot + xi x xidot, i.e. f_a = xidot_a + xi_b xidot_c - xi_c xidot_b.
template <typename Scalar>
Scalar kinetic_coords(const ModelSpec& model, const Vector3<Scalar>& xi,
                      const Vector3<Scalar>& xidot) {
  const Vector3<Scalar> f = xidot + xi.cross(xidot);
  const Vector3<Scalar> coeff = model.inertia.coeffs.cast<Scalar>();
  const Scalar s = Scalar(1) + xi.squaredNorm();
  return Scalar(model.coordinate_scale) * Scalar(2) / (s * s) *
         (coeff.array() * f.array().square()).sum();
}

/// m g e3^T (base Cay(xi)) rho, the potential term as it enters the
/// Lagrangian. Throws std::logic_error if the model has no potential.
double potential_coords(const ModelSpec& model, const Mat3& base, const Vec3& xi);

struct CoordinateGradients {
  Vec3 d_xi;     // dL/dxi
  Vec3 d_xidot;  // dL/dxidot
};

/// Coordinate Lagrangian kinetic_coords + potential_coords.
double lagrangian_coords(const ModelSpec& model, const Mat3& base, const Vec3& xi,
                         const Vec3& xidot);

/// Analytic partials of lagrangian_coords.
CoordinateGradients coordinate_gradients(const ModelSpec& model, const Mat3& base,
                                         const Vec3& xi, const Vec3& xidot);

/// Left-trivialized derivative of potential_coords with respect to the chart
/// base: d/d eta P(base exp(hat(eta)), xi) at eta = 0. Zero without a potential.
Vec3 potential_base_gradient(const ModelSpec& model, const Mat3& base, const Vec3& xi);

/// Left-trivialized momentum dK/dOmega of the coordinate kinetic energy.
Vec3 body_momentum_from_velocity(const ModelSpec& model, const Vec3& omega);
Vec3 body_velocity_from_momentum(const ModelSpec& model, const Vec3& mu);

}  // namespace lie_svi
