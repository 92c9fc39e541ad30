#pragma once

#include "lie_svi/models.hpp"
#include "lie_svi/so3.hpp"
#include "lie_svi/spectral_basis.hpp"
#include "lie_svi/trajectory.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace lie_svi {

using Tableau = BasisTableau<double>;

/// Stage coordinates xi^0..xi^n (columns) of one Galerkin step in the natural
/// chart at `base`. Column 0 is pinned to zero.
struct StageConfiguration {
  Mat3 base = Mat3::Identity();
  Eigen::Matrix3Xd xis;
};

enum class InitialGuessMode { zero, constant_velocity };

/// How D1 L_d of the current step is formed in the previous chart.
///  stage_pattern: dS/dxi^0 in the current chart, pulled back through
///    transition_jacobian (the explicit Cayley construction).
///  envelope: derivative of the extremal action when the chart base itself
///    moves, i.e. the endpoint coordinates xi^n and the base are both carried
///    along. This is the exact derivative of the discrete Lagrangian.
enum class MomentumMatching { stage_pattern, envelope };

struct SolverOptions {
  double residual_tol = 1e-12;  // infinity norm
  int max_iters = 50;
  double fd_step = std::sqrt(std::numeric_limits<double>::epsilon());
  InitialGuessMode initial_guess = InitialGuessMode::constant_velocity;
  MomentumMatching matching = MomentumMatching::envelope;
  int max_halvings = 8;
  double chart_warn_threshold = kDefaultChartWarnThreshold;

  void validate() const;
};

struct SolverStats {
  int iterations = 0;
  double residual_norm = 0.0;
  std::vector<double> history;  // residual infinity norm before each update and at exit
};

/// Discrete momentum entering a step: D2 L_d of the previous step expressed
/// in the previous chart, together with the previous chart's coordinates of
/// the current base point. For the first step the offset is zero.
struct IncomingMomentum {
  Vec3 momentum = Vec3::Zero();
  Vec3 chart_offset = Vec3::Zero();
};

struct StepResult {
  Mat3 next = Mat3::Identity();
  StageConfiguration stages;
  Vec3 boundary_momentum_plus = Vec3::Zero();  // D2 L_d in this step's chart
  Vec3 next_body_momentum = Vec3::Zero();       // left-trivialized momentum at next
  Vec3 next_velocity = Vec3::Zero();            // body angular velocity at next
  SolverStats solver_stats;
  ChartHealth chart_health;

  IncomingMomentum outgoing() const;
};

class NonConvergence : public std::runtime_error {
public:
  NonConvergence(const std::string& what, double last_residual, int iterations)
      : std::runtime_error(what), last_residual_(last_residual), iterations_(iterations) {}
  double last_residual() const { return last_residual_; }
  int iterations() const { return iterations_; }

private:
  double last_residual_;
  int iterations_;
};

/// Failure of step `step_index` (1-based) during integrate().
class StepFailure : public std::runtime_error {
public:
  enum class Kind { nonconvergence, chart_singularity, other };
  StepFailure(const std::string& what, int step_index, Kind kind, double last_residual)
      : std::runtime_error(what), step_index_(step_index), kind_(kind),
        last_residual_(last_residual) {}
  int step_index() const { return step_index_; }
  Kind kind() const { return kind_; }
  double last_residual() const { return last_residual_; }

private:
  int step_index_;
  Kind kind_;
  double last_residual_;
};

/// h sum_j b_j L(xi(c_j h), xidot(c_j h)) with xi(t) = sum_i xi^i phi_i(t).
double discrete_action(const ModelSpec& model, const Tableau& tab, const StageConfiguration& stages);

/// Gradient of discrete_action with respect to every stage coordinate,
/// column i = dS/dxi^i (including the pinned and final stages).
Eigen::Matrix3Xd action_gradient(const ModelSpec& model, const Tableau& tab,
                                 const StageConfiguration& stages);

/// Internal-stage discrete Euler-Poincare residual: dS/dxi^i for interior
/// stages i = 1..n-1, stacked (3(n - 1) entries).
Eigen::VectorXd internal_residual(const ModelSpec& model, const Tableau& tab,
                                  const StageConfiguration& stages);

struct BoundaryMomenta {
  Vec3 d1 = Vec3::Zero();  // D1 L_d in the previous chart's coordinates
  Vec3 d2 = Vec3::Zero();  // D2 L_d = dS/dxi^n
};

BoundaryMomenta boundary_momenta(const ModelSpec& model, const Tableau& tab,
                                 const StageConfiguration& stages,
                                 const Vec3& chart_offset = Vec3::Zero(),
                                 MomentumMatching matching = MomentumMatching::stage_pattern);

/// Newton system for one step; unknowns are xi^1..xi^n stacked. The first
/// 3(n - 1) entries are internal_residual, the last three incoming + d1.
Eigen::VectorXd step_residual(const ModelSpec& model, const Tableau& tab,
                              const IncomingMomentum& incoming, const StageConfiguration& stages,
                              MomentumMatching matching = MomentumMatching::stage_pattern);

/// Stage guess in the chart at `base` for incoming body velocity `omega`.
StageConfiguration initial_guess(const Tableau& tab, const Mat3& base, const Vec3& omega,
                                 InitialGuessMode mode);

/// Solve one step. Throws NonConvergence or ChartSingularity.
StepResult step(const ModelSpec& model, const Tableau& tab, const IncomingMomentum& incoming,
                const Mat3& base, const StageConfiguration& guess, const SolverOptions& opts);

/// dL/dxidot at the chart origin with chart velocity -omega0 / 2, used as the
/// incoming discrete momentum of the first step.
Vec3 initialize_first_step(const ModelSpec& model, const Mat3& r0, const Vec3& omega0);

struct CurvePoint {
  Mat3 rotation;
  Vec3 omega;
};

/// Galerkin curve base * Cay(xi(t)) and its body velocity, t in [0, h].
CurvePoint eval_curve(const StepResult& result, const Tableau& tab, double t);

struct GalerkinTrajectory {
  Tableau tableau;
  Mat3 r0 = Mat3::Identity();
  Vec3 omega0 = Vec3::Zero();
  std::vector<StepResult> steps;

  double h() const { return tableau.h(); }
  /// Step points, including t = 0.
  Trajectory samples() const;
  /// `per_step` equally spaced samples inside each step (plus t = 0) taken
  /// from the Galerkin curves.
  Trajectory dense_samples(int per_step) const;
};

/// Sequential one-step map driver with chart re-basing at each step.
class GalerkinIntegrator {
public:
  GalerkinIntegrator(ModelSpec model, Tableau tab, const Mat3& r0, const Vec3& omega0,
                     SolverOptions opts = {});

  /// Advance one step; throws StepFailure carrying the 1-based step index.
  const StepResult& advance();

  const ModelSpec& model() const { return model_; }
  const GalerkinTrajectory& trajectory() const { return traj_; }
  GalerkinTrajectory release() { return std::move(traj_); }
  const Mat3& current_rotation() const { return current_; }
  const Vec3& current_velocity() const { return velocity_; }
  int steps_taken() const { return static_cast<int>(traj_.steps.size()); }

private:
  ModelSpec model_;
  SolverOptions opts_;
  GalerkinTrajectory traj_;
  Mat3 current_;
  Vec3 velocity_;
  IncomingMomentum incoming_;
};

GalerkinTrajectory integrate(const ModelSpec& model, const Mat3& r0, const Vec3& omega0, double h,
                             int n, int steps, const SolverOptions& opts = {}, int quad_points = 0);

}  // namespace lie_svi
