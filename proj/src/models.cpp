#include "lie_svi/models.hpp"

#include <stdexcept>

namespace lie_svi {

InertiaSpec inertia_from_jd(const Vec3& jd) {
  if ((jd.array() <= 0.0).any() || !jd.allFinite()) {
    throw std::invalid_argument("inertia_from_jd: J_d entries must be positive");
  }
  InertiaSpec out;
  out.jd = jd;
  out.j = Vec3::Constant(jd.sum()) - jd;
  for (int i = 0; i < 3; ++i) {
    out.coeffs(i) = jd((i + 1) % 3) + jd((i + 2) % 3);
  }
  return out;
}

ModelSpec make_rigid_body(const Vec3& jd) {
  ModelSpec m;
  m.kind = ModelKind::rigid_body;
  m.inertia = inertia_from_jd(jd);
  m.matrix_kinetic_scale = 1.0;
  return m;
}

ModelSpec make_pendulum(const Vec3& jd, double mass, double gravity, const Vec3& rho) {
  if (!(std::isfinite(mass) && std::isfinite(gravity) && mass >= 0.0 && gravity >= 0.0)) {
    throw std::invalid_argument("make_pendulum: mass and gravity must be finite and nonnegative");
  }
  if (!rho.allFinite()) throw std::invalid_argument("make_pendulum: rho must be finite");
  ModelSpec m;
  m.kind = ModelKind::pendulum;
  m.inertia = inertia_from_jd(jd);
  m.matrix_kinetic_scale = 0.5;
  PotentialSpec p;
  p.mass = mass;
  p.gravity = gravity;
  p.rho = rho;
  m.potential = p;
  return m;
}

const char* model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::rigid_body: return "rigid_body";
    case ModelKind::pendulum: return "pendulum";
  }
  return "unknown";
}

double potential_term_matrix(const ModelSpec& model, const Mat3& r) {
  if (!model.potential) return 0.0;
  const auto& p = *model.potential;
  return p.mass * p.gravity * p.up.dot(r * p.rho);
}

double lagrangian_matrix(const ModelSpec& model, const Mat3& r, const Mat3& rdot) {
  const Mat3 body = r.transpose() * rdot;
  if ((body + body.transpose()).norm() > 1e-10) {
    throw std::invalid_argument("lagrangian_matrix: Rdot is not tangent to SO(3) at R");
  }
  const Mat3 jd = model.inertia.jd.asDiagonal();
  const double kinetic = (rdot.transpose() * r * jd * r.transpose() * rdot).trace();
  return model.matrix_kinetic_scale * kinetic + potential_term_matrix(model, r);
}

double kinetic_matrix(const ModelSpec& model, const Vec3& omega) {
  // tr(hat(w)^T J_d hat(w)) = w^T J w
  return model.matrix_kinetic_scale * omega.dot(model.inertia.j.cwiseProduct(omega));
}

double potential_coords(const ModelSpec& model, const Mat3& base, const Vec3& xi) {
  if (!model.potential) {
    throw std::logic_error("potential_coords: model has no potential");
  }
  return model.coordinate_scale * potential_term_matrix(model, base * cay(xi));
}

double lagrangian_coords(const ModelSpec& model, const Mat3& base, const Vec3& xi,
                         const Vec3& xidot) {
  double value = kinetic_coords<double>(model, xi, xidot);
  if (model.potential) value += potential_coords(model, base, xi);
  return value;
}

CoordinateGradients coordinate_gradients(const ModelSpec& model, const Mat3& base,
                                         const Vec3& xi, const Vec3& xidot) {
  const Vec3 f = xidot + xi.cross(xidot);
  const Vec3 weighted = model.inertia.coeffs.cwiseProduct(f);
  const double s = 1.0 + xi.squaredNorm();
  const double scale = model.coordinate_scale;
  const double pre = 4.0 * scale / (s * s);

  CoordinateGradients g;
  // df/dxidot = I + hat(xi), df/dxi = -hat(xidot)
  g.d_xidot = pre * (Mat3::Identity() + hat(xi)).transpose() * weighted;
  g.d_xi = pre * (-hat(xidot)).transpose() * weighted -
           8.0 * scale / (s * s * s) * f.dot(weighted) * xi;

  if (model.potential) {
    const auto& p = *model.potential;
    const Vec3 lever = base.transpose() * p.up;
    for (int k = 0; k < 3; ++k) {
      g.d_xi(k) += scale * p.mass * p.gravity *
                   lever.dot(dcay(xi, Vec3::Unit(k)) * p.rho);
    }
  }
  return g;
}

Vec3 potential_base_gradient(const ModelSpec& model, const Mat3& base, const Vec3& xi) {
  if (!model.potential) return Vec3::Zero();
  const auto& p = *model.potential;
  const Vec3 arm = cay(xi) * p.rho;
  return model.coordinate_scale * p.mass * p.gravity * arm.cross(base.transpose() * p.up);
}

Vec3 body_momentum_from_velocity(const ModelSpec& model, const Vec3& omega) {
  // coordinate kinetic energy is (scale / 2) omega^T J omega
  return model.coordinate_scale * model.inertia.coeffs.cwiseProduct(omega);
}

Vec3 body_velocity_from_momentum(const ModelSpec& model, const Vec3& mu) {
  return mu.cwiseQuotient(model.inertia.coeffs) / model.coordinate_scale;
}

}  // namespace lie_svi
