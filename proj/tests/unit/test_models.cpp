#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lie_svi/models.hpp"

#include <random>

using namespace lie_svi;

namespace {

Vec3 random_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(u(rng), u(rng), u(rng));
  } while (v.norm() >= 1.0);
  return radius * v;
}

const Vec3 kJd(1.3, 2.1, 1.2);

}  // namespace

TEST_CASE("inertia_from_jd") {
  const InertiaSpec in = inertia_from_jd(kJd);
  CHECK((in.coeffs - Vec3(3.3, 2.5, 3.4)).norm() < 1e-15);
  CHECK((in.coeffs - in.j).norm() <= 1e-15);

  const InertiaSpec iso = inertia_from_jd(Vec3::Ones());
  CHECK(iso.coeffs == Vec3::Constant(2.0));
  CHECK(iso.j == Vec3::Constant(2.0));

  // J_d = tr(J)/2 I - J
  const Vec3 back = Vec3::Constant(0.5 * in.j.sum()) - in.j;
  CHECK((back - kJd).norm() <= 1e-15);

  CHECK_THROWS_AS(inertia_from_jd(Vec3(1.0, 0.0, 2.0)), std::invalid_argument);
  CHECK_THROWS_AS(inertia_from_jd(Vec3(1.0, -1.0, 2.0)), std::invalid_argument);
}

TEST_CASE("lagrangian_matrix") {
  const ModelSpec rb = make_rigid_body(kJd);
  CHECK(lagrangian_matrix(rb, Mat3::Identity(), Mat3::Zero()) == 0.0);
  // tr(hat(e1)^T diag(jd) hat(e1)) = jd_2 + jd_3
  CHECK(lagrangian_matrix(rb, Mat3::Identity(), hat(Vec3(1, 0, 0))) == doctest::Approx(3.3).epsilon(1e-15));

  const Mat3 r = cay(Vec3(0.2, -0.4, 0.3));
  const Vec3 w(0.7, -0.2, 1.1);
  CHECK(lagrangian_matrix(rb, r, r * hat(w)) ==
        doctest::Approx(w.dot(rb.inertia.j.cwiseProduct(w))).epsilon(1e-14));

  const ModelSpec pd = make_pendulum(Vec3(1, 2.8, 2), 1.0, 1.0, Vec3(0, 0, 1));
  CHECK(lagrangian_matrix(pd, Mat3::Identity(), Mat3::Zero()) == doctest::Approx(1.0));

  CHECK_THROWS_AS(lagrangian_matrix(rb, Mat3::Identity(), Mat3::Identity()), std::invalid_argument);
}

TEST_CASE("kinetic_coords") {
  const ModelSpec rb = make_rigid_body(kJd);
  // With xi = 0 only f_a = 1 survives, and it is weighted by I_1.
  CHECK(kinetic_coords<double>(rb, Vec3::Zero(), Vec3(1, 0, 0)) == doctest::Approx(2.0 * 3.3).epsilon(1e-15));
  CHECK(kinetic_coords<double>(rb, Vec3::Zero(), Vec3(0, 0, 1)) == doctest::Approx(2.0 * 3.4).epsilon(1e-15));
  CHECK(kinetic_coords<double>(rb, Vec3(0.3, 0.1, -0.2), Vec3::Zero()) == 0.0);

  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    const Vec3 xi = random_ball(rng, 0.9), xd = random_ball(rng, 2.0);
    CHECK(kinetic_coords<double>(rb, xi, Vec3(2.0 * xd)) ==
          doctest::Approx(4.0 * kinetic_coords<double>(rb, xi, xd)).epsilon(1e-14));
  }
}

TEST_CASE("coordinate and matrix kinetic energies differ by the printed prefactor") {
  const ModelSpec rb = make_rigid_body(kJd);
  const ModelSpec pd = make_pendulum(Vec3(1, 2.8, 2), 1.0, 9.81, Vec3(0, 0, 1));
  std::mt19937_64 rng(12);
  for (int i = 0; i < 50; ++i) {
    const Mat3 base = cay(random_ball(rng, 2.0));
    const Vec3 xi = random_ball(rng, 0.9), xd = random_ball(rng, 2.0);
    const Mat3 r = base * cay(xi);
    const Mat3 rdot = base * dcay(xi, xd);
    const double coord = lagrangian_coords(rb, base, xi, xd);
    CHECK(coord / lagrangian_matrix(rb, r, rdot) == doctest::Approx(0.5).epsilon(1e-12));
    // the pendulum carries the 1/2 in its matrix form, so the two agree
    CHECK(lagrangian_coords(pd, base, xi, xd) ==
          doctest::Approx(lagrangian_matrix(pd, r, rdot)).epsilon(1e-12));
  }
}

TEST_CASE("potential_coords") {
  const ModelSpec pd = make_pendulum(Vec3(1, 2.8, 2), 1.0, 1.0, Vec3(0, 0, 1));
  CHECK(potential_coords(pd, Mat3::Identity(), Vec3::Zero()) == doctest::Approx(1.0));
  const Mat3 flip = Vec3(-1, 1, -1).asDiagonal();
  CHECK(potential_coords(pd, flip, Vec3::Zero()) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(potential_coords(make_rigid_body(kJd), Mat3::Identity(), Vec3::Zero()), std::logic_error);
}

TEST_CASE("coordinate_gradients match central differences") {
  const ModelSpec rb = make_rigid_body(kJd);
  const ModelSpec pd = make_pendulum(Vec3(1, 2.8, 2), 1.0, 9.81, Vec3(0.1, -0.2, 1.0));
  const CoordinateGradients zero = coordinate_gradients(rb, Mat3::Identity(), Vec3::Zero(), Vec3::Zero());
  CHECK(zero.d_xi == Vec3::Zero());
  CHECK(zero.d_xidot == Vec3::Zero());

  std::mt19937_64 rng(13);
  const double eps = 1e-6;
  for (const ModelSpec* model : {&rb, &pd}) {
    for (int i = 0; i < 100; ++i) {
      const Mat3 base = cay(random_ball(rng, 3.0));
      const Vec3 xi = random_ball(rng, 0.9), xd = random_ball(rng, 2.0);
      const CoordinateGradients g = coordinate_gradients(*model, base, xi, xd);
      Vec3 fd_xi, fd_xd;
      for (int k = 0; k < 3; ++k) {
        const Vec3 e = eps * Vec3::Unit(k);
        fd_xi(k) = (lagrangian_coords(*model, base, xi + e, xd) - lagrangian_coords(*model, base, xi - e, xd)) /
                   (2 * eps);
        fd_xd(k) = (lagrangian_coords(*model, base, xi, xd + e) - lagrangian_coords(*model, base, xi, xd - e)) /
                   (2 * eps);
      }
      CHECK((g.d_xi - fd_xi).norm() <= 1e-6 * std::max(1.0, fd_xi.norm()));
      CHECK((g.d_xidot - fd_xd).norm() <= 1e-6 * std::max(1.0, fd_xd.norm()));
    }
  }
}

TEST_CASE("momentum is linear in the chart velocity") {
  const ModelSpec rb = make_rigid_body(kJd);
  const Vec3 xi(0.2, -0.1, 0.4), a(0.5, 1.0, -0.3), b(-1.2, 0.2, 0.8);
  const Vec3 pa = coordinate_gradients(rb, Mat3::Identity(), xi, a).d_xidot;
  const Vec3 pb = coordinate_gradients(rb, Mat3::Identity(), xi, b).d_xidot;
  const Vec3 pab = coordinate_gradients(rb, Mat3::Identity(), xi, Vec3(2.0 * a - b)).d_xidot;
  CHECK((pab - (2.0 * pa - pb)).norm() < 1e-13);
}

TEST_CASE("potential_base_gradient is the left-trivialized derivative") {
  const ModelSpec pd = make_pendulum(Vec3(1, 2.8, 2), 2.0, 9.81, Vec3(0.3, 0.1, 0.9));
  CHECK(potential_base_gradient(make_rigid_body(kJd), Mat3::Identity(), Vec3::Zero()) == Vec3::Zero());
  std::mt19937_64 rng(14);
  const double eps = 1e-6;
  for (int i = 0; i < 20; ++i) {
    const Mat3 base = cay(random_ball(rng, 2.0));
    const Vec3 xi = random_ball(rng, 0.8);
    Vec3 fd;
    for (int k = 0; k < 3; ++k) {
      const Mat3 plus = base * Eigen::AngleAxisd(eps, Vec3::Unit(k)).toRotationMatrix();
      const Mat3 minus = base * Eigen::AngleAxisd(-eps, Vec3::Unit(k)).toRotationMatrix();
      fd(k) = (potential_coords(pd, plus, xi) - potential_coords(pd, minus, xi)) / (2 * eps);
    }
    CHECK((potential_base_gradient(pd, base, xi) - fd).norm() < 1e-7 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("body momentum conversions") {
  ModelSpec rb = make_rigid_body(kJd);
  const Vec3 w(0.3, -1.0, 2.0);
  CHECK((body_velocity_from_momentum(rb, body_momentum_from_velocity(rb, w)) - w).norm() < 1e-15);
  rb.coordinate_scale = 7.3;
  CHECK((body_momentum_from_velocity(rb, w) - 7.3 * rb.inertia.coeffs.cwiseProduct(w)).norm() < 1e-13);
  CHECK(std::string(model_name(ModelKind::pendulum)) == "pendulum");
}

TEST_CASE("make_pendulum validates its arguments") {
  CHECK_THROWS_AS(make_pendulum(kJd, -1.0, 9.81, Vec3::UnitZ()), std::invalid_argument);
  CHECK_THROWS_AS(make_pendulum(kJd, 1.0, std::nan(""), Vec3::UnitZ()), std::invalid_argument);
}
