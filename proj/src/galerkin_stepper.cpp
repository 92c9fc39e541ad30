#include "lie_svi/galerkin_stepper.hpp"

#include <algorithm>
#include <sstream>

namespace lie_svi {

namespace {

void check_dimensions(const Tableau& tab, const StageConfiguration& stages) {
  if (stages.xis.cols() != tab.stage_count()) {
    std::ostringstream msg;
    msg << "stage configuration has " << stages.xis.cols() << " stages, tableau expects "
        << tab.stage_count();
    throw std::invalid_argument(msg.str());
  }
}

Eigen::VectorXd pack_unknowns(const StageConfiguration& stages) {
  const Eigen::Index n = stages.xis.cols() - 1;
  Eigen::VectorXd x(3 * n);
  for (Eigen::Index i = 1; i <= n; ++i) x.segment<3>(3 * (i - 1)) = stages.xis.col(i);
  return x;
}

void unpack_unknowns(const Eigen::VectorXd& x, StageConfiguration& stages) {
  const Eigen::Index n = stages.xis.cols() - 1;
  stages.xis.col(0).setZero();
  for (Eigen::Index i = 1; i <= n; ++i) stages.xis.col(i) = x.segment<3>(3 * (i - 1));
}

}  // namespace

void SolverOptions::validate() const {
  if (!(residual_tol > 0.0)) throw std::invalid_argument("solver: residual_tol must be positive");
  if (max_iters < 1) throw std::invalid_argument("solver: max_iters must be >= 1");
  if (!(fd_step > 0.0)) throw std::invalid_argument("solver: fd_step must be positive");
  if (max_halvings < 0) throw std::invalid_argument("solver: max_halvings must be >= 0");
  if (!(chart_warn_threshold > 0.0)) {
    throw std::invalid_argument("solver: chart_warn_threshold must be positive");
  }
}

IncomingMomentum StepResult::outgoing() const {
  IncomingMomentum out;
  out.momentum = boundary_momentum_plus;
  out.chart_offset = stages.xis.col(stages.xis.cols() - 1);
  return out;
}

double discrete_action(const ModelSpec& model, const Tableau& tab, const StageConfiguration& stages) {
  check_dimensions(tab, stages);
  const Eigen::Matrix3Xd xi_q = stages.xis * tab.phi;
  const Eigen::Matrix3Xd xidot_q = stages.xis * tab.dphi;
  double sum = 0.0;
  for (Eigen::Index j = 0; j < tab.quad.size(); ++j) {
    sum += tab.quad.weights(j) *
           lagrangian_coords(model, stages.base, xi_q.col(j), xidot_q.col(j));
  }
  return tab.h() * sum;
}

Eigen::Matrix3Xd action_gradient(const ModelSpec& model, const Tableau& tab,
                                 const StageConfiguration& stages) {
  check_dimensions(tab, stages);
  const Eigen::Index m = tab.quad.size();
  const Eigen::Matrix3Xd xi_q = stages.xis * tab.phi;
  const Eigen::Matrix3Xd xidot_q = stages.xis * tab.dphi;
  Eigen::Matrix3Xd d_xi(3, m), d_xidot(3, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const CoordinateGradients g =
        coordinate_gradients(model, stages.base, xi_q.col(j), xidot_q.col(j));
    const double w = tab.h() * tab.quad.weights(j);
    d_xi.col(j) = w * g.d_xi;
    d_xidot.col(j) = w * g.d_xidot;
  }
  return d_xi * tab.phi.transpose() + d_xidot * tab.dphi.transpose();
}

Eigen::VectorXd internal_residual(const ModelSpec& model, const Tableau& tab,
                                  const StageConfiguration& stages) {
  const Eigen::Matrix3Xd grad = action_gradient(model, tab, stages);
  const Eigen::Index n = grad.cols() - 1;
  Eigen::VectorXd out(3 * std::max<Eigen::Index>(n - 1, 0));
  for (Eigen::Index i = 1; i < n; ++i) out.segment<3>(3 * (i - 1)) = grad.col(i);
  return out;
}

namespace {

Vec3 left_momentum(const ModelSpec& model, const Tableau& tab, const StageConfiguration& stages,
                   const Eigen::Matrix3Xd& grad, const Vec3& chart_offset,
                   MomentumMatching matching) {
  if (matching == MomentumMatching::stage_pattern) {
    // dS/dlambda = (dxi/dlambda)^T dS/dxi^0 at xi^0 = 0, lambda = offset
    const Mat3 jac = transition_jacobian<double>(chart_offset, chart_offset);
    return jac.transpose() * grad.col(0);
  }
  // Base moves to prev * Cay(lambda) while the end point stays put; interior
  // stages are stationary so only xi^n and the base contribute.
  const Eigen::Index n = stages.xis.cols() - 1;
  const Vec3 xi_end = stages.xis.col(n);
  const Vec3 end_old_chart = chart_transition<double>(chart_offset, xi_end);
  const Mat3 moves = transition_base_jacobian<double>(chart_offset, end_old_chart);
  Vec3 d1 = moves.transpose() * grad.col(n);
  if (model.potential) {
    const Eigen::Matrix3Xd xi_q = stages.xis * tab.phi;
    Vec3 base_grad = Vec3::Zero();
    for (Eigen::Index j = 0; j < tab.quad.size(); ++j) {
      base_grad += tab.quad.weights(j) * potential_base_gradient(model, stages.base, xi_q.col(j));
    }
    d1 += chart_velocity_map(chart_offset).transpose() * (tab.h() * base_grad);
  }
  return d1;
}

}  // namespace

BoundaryMomenta boundary_momenta(const ModelSpec& model, const Tableau& tab,
                                 const StageConfiguration& stages, const Vec3& chart_offset,
                                 MomentumMatching matching) {
  const Eigen::Matrix3Xd grad = action_gradient(model, tab, stages);
  BoundaryMomenta out;
  out.d1 = left_momentum(model, tab, stages, grad, chart_offset, matching);
  out.d2 = grad.col(grad.cols() - 1);
  return out;
}

Eigen::VectorXd step_residual(const ModelSpec& model, const Tableau& tab,
                              const IncomingMomentum& incoming, const StageConfiguration& stages,
                              MomentumMatching matching) {
  const Eigen::Matrix3Xd grad = action_gradient(model, tab, stages);
  const Eigen::Index n = grad.cols() - 1;
  Eigen::VectorXd f(3 * n);
  for (Eigen::Index i = 1; i < n; ++i) f.segment<3>(3 * (i - 1)) = grad.col(i);
  f.tail<3>() = incoming.momentum +
                left_momentum(model, tab, stages, grad, incoming.chart_offset, matching);
  return f;
}

StageConfiguration initial_guess(const Tableau& tab, const Mat3& base, const Vec3& omega,
                                 InitialGuessMode mode) {
  StageConfiguration guess;
  guess.base = base;
  guess.xis = Eigen::Matrix3Xd::Zero(3, tab.stage_count());
  if (mode == InitialGuessMode::constant_velocity) {
    // chart velocity at the origin is -omega / 2
    for (Eigen::Index i = 1; i < tab.stage_count(); ++i) {
      guess.xis.col(i) = -0.5 * omega * tab.stage.nodes(i);
    }
  }
  return guess;
}

StepResult step(const ModelSpec& model, const Tableau& tab, const IncomingMomentum& incoming,
                const Mat3& base, const StageConfiguration& guess, const SolverOptions& opts) {
  opts.validate();
  check_dimensions(tab, guess);
  if (tab.degree() < 1) throw std::invalid_argument("step: degree must be >= 1");
  if (!guess.xis.col(0).isZero(0.0)) {
    throw std::invalid_argument("step: guess stage 0 must be zero");
  }

  StageConfiguration stages = guess;
  stages.base = base;
  Eigen::VectorXd x = pack_unknowns(stages);
  const Eigen::Index dim = x.size();

  auto residual_at = [&](const Eigen::VectorXd& at) {
    StageConfiguration trial = stages;
    unpack_unknowns(at, trial);
    return step_residual(model, tab, incoming, trial, opts.matching);
  };

  SolverStats stats;
  Eigen::VectorXd f = residual_at(x);
  double norm = f.lpNorm<Eigen::Infinity>();
  stats.history.push_back(norm);

  Eigen::MatrixXd jac(dim, dim);
  while (!(norm <= opts.residual_tol)) {
    if (stats.iterations >= opts.max_iters || !std::isfinite(norm)) {
      std::ostringstream msg;
      msg << "Newton solver did not converge after " << stats.iterations
          << " iterations (residual " << norm << ")";
      throw NonConvergence(msg.str(), norm, stats.iterations);
    }
    // forward-difference Jacobian
    for (Eigen::Index c = 0; c < dim; ++c) {
      Eigen::VectorXd xp = x;
      const double delta = opts.fd_step * (1.0 + std::abs(x(c)));
      xp(c) += delta;
      jac.col(c) = (residual_at(xp) - f) / (xp(c) - x(c));
    }
    const Eigen::VectorXd dx = jac.partialPivLu().solve(-f);
    if (!dx.allFinite()) {
      throw NonConvergence("Newton solver: singular Jacobian", norm, stats.iterations);
    }

    double scale = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= opts.max_halvings; ++halving, scale *= 0.5) {
      const Eigen::VectorXd trial = x + scale * dx;
      Eigen::VectorXd ft;
      try {
        ft = residual_at(trial);
      } catch (const ChartSingularity&) {
        continue;
      }
      const double trial_norm = ft.lpNorm<Eigen::Infinity>();
      if (trial_norm < norm) {
        x = trial;
        f = std::move(ft);
        norm = trial_norm;
        accepted = true;
        break;
      }
    }
    ++stats.iterations;
    stats.history.push_back(norm);
    if (!accepted) {
      std::ostringstream msg;
      msg << "Newton solver stalled at residual " << norm << " after " << stats.iterations
          << " iterations";
      throw NonConvergence(msg.str(), norm, stats.iterations);
    }
  }
  stats.residual_norm = norm;

  unpack_unknowns(x, stages);
  const Eigen::Index n = stages.xis.cols() - 1;
  const Vec3 xi_end = stages.xis.col(n);

  StepResult result;
  result.stages = stages;
  result.next = base * cay(xi_end);
  result.boundary_momentum_plus = action_gradient(model, tab, stages).col(n);
  // left-trivialized momentum from dS/dxi^n = A(xi^n)^T mu
  result.next_body_momentum =
      chart_velocity_map(xi_end).transpose().partialPivLu().solve(result.boundary_momentum_plus);
  result.next_velocity = body_velocity_from_momentum(model, result.next_body_momentum);
  result.solver_stats = std::move(stats);
  result.chart_health = chart_guard(stages.xis, opts.chart_warn_threshold);
  return result;
}

Vec3 initialize_first_step(const ModelSpec& model, const Mat3& r0, const Vec3& omega0) {
  return coordinate_gradients(model, r0, Vec3::Zero(), -0.5 * omega0).d_xidot;
}

CurvePoint eval_curve(const StepResult& result, const Tableau& tab, double t) {
  const double h = tab.h();
  if (!(t >= 0.0 && t <= h)) throw std::invalid_argument("eval_curve: t outside [0, h]");
  Eigen::VectorXd at(1);
  at(0) = t;
  const auto basis = lagrange_matrices(tab.stage, at);
  const Vec3 xi = result.stages.xis * basis.phi.col(0);
  const Vec3 xidot = result.stages.xis * basis.dphi.col(0);
  const Mat3 c = cay(xi);
  CurvePoint out;
  out.rotation = result.stages.base * c;
  const Mat3 body = c.transpose() * dcay(xi, xidot);
  const Mat3 skew = 0.5 * (body - body.transpose());
  out.omega = vee(skew);
  return out;
}

Trajectory GalerkinTrajectory::samples() const {
  Trajectory out;
  out.reserve(steps.size() + 1);
  out.push_back({0.0, r0, omega0});
  for (std::size_t k = 0; k < steps.size(); ++k) {
    out.push_back({static_cast<double>(k + 1) * h(), steps[k].next, steps[k].next_velocity});
  }
  return out;
}

Trajectory GalerkinTrajectory::dense_samples(int per_step) const {
  if (per_step < 1) throw std::invalid_argument("dense_samples: per_step must be >= 1");
  Trajectory out;
  out.reserve(steps.size() * per_step + 1);
  out.push_back({0.0, r0, omega0});
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const double t0 = static_cast<double>(k) * h();
    for (int s = 1; s <= per_step; ++s) {
      const double local = s == per_step ? h() : h() * s / per_step;
      const CurvePoint p = eval_curve(steps[k], tableau, local);
      out.push_back({t0 + local, p.rotation, p.omega});
    }
  }
  return out;
}

GalerkinIntegrator::GalerkinIntegrator(ModelSpec model, Tableau tab, const Mat3& r0,
                                       const Vec3& omega0, SolverOptions opts)
    : model_(std::move(model)), opts_(opts), current_(r0), velocity_(omega0) {
  opts_.validate();
  if (orthogonality_defect(r0) > 1e-10 || r0.determinant() <= 0.0) {
    throw std::invalid_argument("initial rotation is not in SO(3)");
  }
  traj_.tableau = std::move(tab);
  traj_.r0 = r0;
  traj_.omega0 = omega0;
  incoming_.momentum = initialize_first_step(model_, r0, omega0);
  incoming_.chart_offset.setZero();
}

const StepResult& GalerkinIntegrator::advance() {
  const int index = steps_taken() + 1;
  try {
    const StageConfiguration guess =
        initial_guess(traj_.tableau, current_, velocity_, opts_.initial_guess);
    StepResult result = step(model_, traj_.tableau, incoming_, current_, guess, opts_);
    current_ = result.next;
    velocity_ = result.next_velocity;
    incoming_ = result.outgoing();
    traj_.steps.push_back(std::move(result));
  } catch (const NonConvergence& e) {
    std::ostringstream msg;
    msg << "step " << index << ": " << e.what();
    throw StepFailure(msg.str(), index, StepFailure::Kind::nonconvergence, e.last_residual());
  } catch (const ChartSingularity& e) {
    std::ostringstream msg;
    msg << "step " << index << ": " << e.what();
    throw StepFailure(msg.str(), index, StepFailure::Kind::chart_singularity,
                      std::numeric_limits<double>::quiet_NaN());
  }
  return traj_.steps.back();
}

GalerkinTrajectory integrate(const ModelSpec& model, const Mat3& r0, const Vec3& omega0, double h,
                             int n, int steps, const SolverOptions& opts, int quad_points) {
  if (steps < 1) throw std::invalid_argument("integrate: steps must be >= 1");
  GalerkinIntegrator integrator(model, make_tableau<double>(n, h, quad_points), r0, omega0, opts);
  for (int k = 0; k < steps; ++k) integrator.advance();
  return integrator.release();
}

}  // namespace lie_svi
