#include "lie_svi/diagnostics.hpp"

#include "lie_svi/so3.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lie_svi {

Vec3 body_momentum(const ModelSpec& model, const Mat3& /*r*/, const Vec3& omega) {
  return model.inertia.coeffs.cwiseProduct(omega);
}

Invariants invariants(const Vec3& y, const Vec3& coeffs) {
  if ((coeffs.array() <= 0.0).any()) {
    throw std::invalid_argument("invariants: inertia coefficients must be positive");
  }
  Invariants out;
  out.casimir = 0.5 * y.squaredNorm();
  out.energy = 0.5 * (y.array().square() / coeffs.array()).sum();
  return out;
}

double energy(const ModelSpec& model, const Mat3& r, const Vec3& omega) {
  return kinetic_matrix(model, omega) - potential_term_matrix(model, r);
}

InvariantSample invariant_sample(const ModelSpec& model, const TrajectorySample& s) {
  InvariantSample out;
  out.t = s.t;
  out.energy = energy(model, s.rotation, s.omega);
  out.y = body_momentum(model, s.rotation, s.omega);
  const Invariants inv = invariants(out.y, model.inertia.coeffs);
  out.casimir = inv.casimir;
  out.hamiltonian = inv.energy;
  out.orthogonality_defect = orthogonality_defect(s.rotation);
  return out;
}

namespace {

// Exact flow of the kinetic energy restricted to body axis `axis`.
void free_axis_flow(int axis, double tau, const Vec3& inertia, Mat3& r, Vec3& y) {
  const double rate = y(axis) / inertia(axis);
  const Eigen::AngleAxisd rot(rate * tau, Vec3::Unit(axis));
  r = r * rot.toRotationMatrix();
  y = rot.inverse().toRotationMatrix() * y;
}

}  // namespace

Trajectory splitting_oracle(const ModelSpec& model, const Mat3& r0, const Vec3& omega0,
                            double h_small, long steps, long record_every) {
  if (!(h_small > 0.0)) throw std::invalid_argument("splitting_oracle: h_small must be positive");
  if (steps < 0) throw std::invalid_argument("splitting_oracle: steps must be >= 0");
  if (record_every < 1) throw std::invalid_argument("splitting_oracle: record_every must be >= 1");

  // Momentum conjugate to Omega for L = s tr(...) + P is y = 2 s J Omega.
  const Vec3 inertia = 2.0 * model.matrix_kinetic_scale * model.inertia.j;
  Mat3 r = r0;
  Vec3 y = inertia.cwiseProduct(omega0);

  auto torque = [&](const Mat3& rot) -> Vec3 {
    if (!model.potential) return Vec3::Zero();
    const auto& p = *model.potential;
    return p.mass * p.gravity * p.rho.cross(rot.transpose() * p.up);
  };

  Trajectory out;
  out.reserve(static_cast<std::size_t>(steps / record_every + 2));
  out.push_back({0.0, r, omega0});
  const double half = 0.5 * h_small;
  for (long k = 1; k <= steps; ++k) {
    y += half * torque(r);
    free_axis_flow(0, half, inertia, r, y);
    free_axis_flow(1, half, inertia, r, y);
    free_axis_flow(2, h_small, inertia, r, y);
    free_axis_flow(1, half, inertia, r, y);
    free_axis_flow(0, half, inertia, r, y);
    y += half * torque(r);
    if (k % record_every == 0 || k == steps) {
      out.push_back({static_cast<double>(k) * h_small, r, y.cwiseQuotient(inertia)});
    }
  }
  return out;
}

double trajectory_error(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("trajectory_error: trajectories have different sample counts");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::abs(a[i].t), std::abs(b[i].t)});
    if (std::abs(a[i].t - b[i].t) > 1e-9 * scale) {
      throw std::invalid_argument("trajectory_error: sample times do not match");
    }
    worst = std::max(worst, group_error(a[i].rotation, b[i].rotation));
  }
  return worst;
}

double shared_time_error(const Trajectory& a, const Trajectory& b, double time_tol) {
  double worst = 0.0;
  std::size_t shared = 0;
  std::size_t j = 0;
  for (const auto& sa : a) {
    while (j < b.size() && b[j].t < sa.t - time_tol) ++j;
    if (j < b.size() && std::abs(b[j].t - sa.t) <= time_tol) {
      worst = std::max(worst, group_error(sa.rotation, b[j].rotation));
      ++shared;
    }
  }
  if (shared == 0) throw std::invalid_argument("shared_time_error: no shared sample times");
  return worst;
}

void ConvergenceTable::sort() {
  std::sort(rows.begin(), rows.end(),
            [](const ConvergenceRow& l, const ConvergenceRow& r) { return l.parameter < r.parameter; });
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("least_squares_slope: need at least two paired values");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("least_squares_slope: degenerate abscissae");
  return sxy / sxx;
}

double fit_rate(const ConvergenceTable& table, RateMode mode, double error_floor, int min_rows) {
  std::vector<double> xs, ys;
  for (const auto& row : table.rows) {
    if (!row.converged || !(row.step_error >= error_floor) || !std::isfinite(row.step_error)) {
      continue;
    }
    xs.push_back(mode == RateMode::geometric_in_n ? row.parameter : std::log(row.parameter));
    ys.push_back(std::log(row.step_error));
  }
  if (static_cast<int>(xs.size()) < std::max(min_rows, 2)) {
    throw std::invalid_argument("fit_rate: too few rows above the error floor");
  }
  return least_squares_slope(xs, ys);
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman_correlation: need at least two paired values");
  }
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace lie_svi
