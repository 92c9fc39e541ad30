#pragma once

#include "lie_svi/models.hpp"
#include "lie_svi/trajectory.hpp"

#include <Eigen/Dense>

#include <vector>

namespace lie_svi {

/// Body angular momentum y = I o Omega (elementwise).
Vec3 body_momentum(const ModelSpec& model, const Mat3& r, const Vec3& omega);

struct Invariants {
  double casimir = 0.0;  // C = 1/2 sum y_i^2
  double energy = 0.0;   // H = 1/2 sum y_i^2 / I_i
};

Invariants invariants(const Vec3& y, const Vec3& coeffs);

/// Total energy from the matrix-form Lagrangian L = K + P: E = K - P.
double energy(const ModelSpec& model, const Mat3& r, const Vec3& omega);

struct InvariantSample {
  double t = 0.0;
  double energy = 0.0;
  Vec3 y = Vec3::Zero();
  double casimir = 0.0;
  double hamiltonian = 0.0;
  double orthogonality_defect = 0.0;
};

InvariantSample invariant_sample(const ModelSpec& model, const TrajectorySample& s);

/// Strang splitting of the rigid body (exact single-axis rotations) with a
/// gravity kick for the pendulum. Second order. Records every
/// `record_every`-th state, always including t = 0 and the final state.
Trajectory splitting_oracle(const ModelSpec& model, const Mat3& r0, const Vec3& omega0,
                            double h_small, long steps, long record_every = 1);

/// Max group error over samples with matching times. Throws
/// std::invalid_argument if the sample times differ.
double trajectory_error(const Trajectory& a, const Trajectory& b);

/// Max group error over the times present in both trajectories (matched to
/// `time_tol`). Throws if no time is shared.
double shared_time_error(const Trajectory& a, const Trajectory& b, double time_tol = 1e-9);

struct ConvergenceRow {
  double parameter = 0.0;  // n or h
  double step_error = 0.0;
  double curve_error = 0.0;
  bool converged = true;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;

  void sort();
};

enum class RateMode { geometric_in_n, algebraic_in_h };

/// Least-squares slope of log(step_error) against n (geometric) or log(h)
/// (algebraic), ignoring nonconverged rows and rows below `error_floor`.
/// Throws std::invalid_argument with fewer than `min_rows` usable rows.
double fit_rate(const ConvergenceTable& table, RateMode mode, double error_floor,
                int min_rows = 3);

/// Least-squares slope of y against x.
double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Spearman rank correlation (average ranks for ties).
double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace lie_svi
