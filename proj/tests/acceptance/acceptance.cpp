// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include "lie_svi/diagnostics.hpp"
#include "lie_svi/experiment.hpp"
#include "lie_svi/galerkin_stepper.hpp"
#include "lie_svi/so3.hpp"
#include "lie_svi/spectral_basis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace lie_svi;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double g_max_defect = 0.0;

void track_defect(const Mat3& r) { g_max_defect = std::max(g_max_defect, orthogonality_defect(r)); }

Vec3 random_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(u(rng), u(rng), u(rng));
  } while (v.norm() >= 1.0);
  return radius * v;
}

std::string sci(double v) {
  std::ostringstream os;
  os.precision(2);
  os << std::scientific << v;
  return os.str();
}

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lie_svi_acceptance_" + name);
  fs::remove_all(dir);
  return dir;
}

const Vec3 kJd(1.3, 2.1, 1.2);
const Vec3 kOmega0(2.0, -1.9, 1.0);

void algebra_suite(Outcome& o) {
  std::mt19937_64 rng(101);
  bool roundtrip = true;
  double ortho = 0.0, involution = 0.0, group_law = 0.0, worst_ratio_dev = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 v = random_ball(rng, 10.0);
    roundtrip = roundtrip && vee(hat(v)) == v;
    const Vec3 w = random_ball(rng, 5.0);
    ortho = std::max(ortho, orthogonality_defect(cay(w)));
    const Mat3 q = hat(random_ball(rng, 2.0));
    involution = std::max(involution, (cayley_matrix(cayley_matrix(q)) - q).norm());
  }
  for (int i = 0; i < 20; ++i) {
    const Vec3 x = random_ball(rng, 1.0), y = random_ball(rng, 1.0);
    const Mat3 exact = dcay(x, y);
    auto err = [&](double eps) {
      return ((cay(Vec3(x + eps * y)) - cay(Vec3(x - eps * y))) / (2 * eps) - exact).norm();
    };
    worst_ratio_dev = std::max(worst_ratio_dev, std::abs(std::log2(err(1e-3) / err(5e-4)) - 2.0));
  }
  for (int i = 0; i < 100; ++i) {
    const Vec3 a = random_ball(rng, 0.5), b = random_ball(rng, 0.5);
    group_law = std::max(group_law, (cay(chart_transition<double>(a, b)) - cay(a) * cay(b)).norm());
  }
  o.detail << "orthogonality " << sci(ortho) << ", involution " << sci(involution) << ", dcay order 2+-"
           << sci(worst_ratio_dev) << ", group law " << sci(group_law);
  o.require(roundtrip, "hat/vee roundtrip");
  o.require(ortho <= 1e-13, "cay orthogonality");
  o.require(involution <= 1e-12, "involution");
  o.require(worst_ratio_dev < 0.1, "dcay second order");
  o.require(group_law <= 1e-12, "group law");
}

void basis_suite(Outcome& o) {
  bool delta = true;
  double exactness = 0.0, product = 0.0;
  for (int n = 1; n <= 26; ++n) {
    const auto s = chebyshev_lobatto_nodes(n, 0.5);
    delta = delta && lagrange_matrices(s, s.nodes).phi == Eigen::MatrixXd::Identity(n + 1, n + 1);
  }
  for (int m = 1; m <= 30; ++m) {
    const auto r = gauss_legendre_rule(m);
    for (int k = 0; k <= 2 * m - 1; ++k) {
      exactness = std::max(exactness,
                           std::abs(r.weights.dot(Eigen::VectorXd(r.points.array().pow(k))) - 1.0 / (k + 1)));
    }
  }
  for (int n = 1; n <= 12; ++n) {
    const auto tab = make_tableau(n, 1.0);
    const auto fine = make_tableau(n, 1.0, 60);
    // phi_i phi_k and phi_i' phi_k' need order 2n + 1; m = n + 1 has order 2n + 2
    const Eigen::MatrixXd a = tab.phi * tab.quad.weights.asDiagonal() * tab.phi.transpose();
    const Eigen::MatrixXd b = fine.phi * fine.quad.weights.asDiagonal() * fine.phi.transpose();
    const Eigen::MatrixXd c = tab.dphi * tab.quad.weights.asDiagonal() * tab.dphi.transpose();
    const Eigen::MatrixXd d = fine.dphi * fine.quad.weights.asDiagonal() * fine.dphi.transpose();
    product = std::max({product, (a - b).cwiseAbs().maxCoeff(),
                        (c - d).cwiseAbs().maxCoeff() / std::max(1.0, d.cwiseAbs().maxCoeff())});
  }
  o.detail << "quadrature exactness " << sci(exactness) << ", product exactness " << sci(product);
  o.require(delta, "delta property");
  o.require(exactness <= 1e-12, "degree 2m-1 exactness");
  o.require(product <= 1e-12, "product exactness with m = n + 1");
}

void residual_suite(Outcome& o) {
  std::mt19937_64 rng(103);
  const ModelSpec models[] = {make_rigid_body(kJd), make_pendulum(Vec3(1, 2.8, 2), 1.0, 9.81, Vec3(0, 0, 1))};
  const double eps = 1e-6;
  double worst = 0.0;
  for (const auto& model : models) {
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 2 + trial % 11;
      const auto tab = make_tableau(n, 0.2 + 0.02 * trial);
      StageConfiguration st{cay(random_ball(rng, 2.0)), Eigen::Matrix3Xd::Zero(3, n + 1)};
      for (int i = 1; i <= n; ++i) st.xis.col(i) = random_ball(rng, 0.5);
      auto fd = [&](int stage, int comp) {
        StageConfiguration s = st;
        s.xis(comp, stage) += eps;
        const double plus = discrete_action(model, tab, s);
        s.xis(comp, stage) -= 2 * eps;
        return (plus - discrete_action(model, tab, s)) / (2 * eps);
      };
      const Eigen::VectorXd res = internal_residual(model, tab, st);
      Eigen::VectorXd res_fd(res.size());
      for (int i = 1; i < n; ++i)
        for (int k = 0; k < 3; ++k) res_fd(3 * (i - 1) + k) = fd(i, k);
      worst = std::max(worst, (res - res_fd).norm() / std::max(1.0, res_fd.norm()));

      Vec3 d0, dn;
      for (int k = 0; k < 3; ++k) {
        d0(k) = fd(0, k);
        dn(k) = fd(n, k);
      }
      const auto bm = boundary_momenta(model, tab, st, Vec3::Zero(), MomentumMatching::stage_pattern);
      worst = std::max(worst, (bm.d1 - d0).norm() / std::max(1.0, d0.norm()));
      worst = std::max(worst, (bm.d2 - dn).norm() / std::max(1.0, dn.norm()));

      // envelope form: derivative of the action when the chart base moves
      const Vec3 end = st.xis.col(n);
      auto moved = [&](const Vec3& eta) {
        StageConfiguration s = st;
        s.base = st.base * cay(eta);
        s.xis.col(n) = chart_transition_inv<double>(eta, end);
        return discrete_action(model, tab, s);
      };
      Vec3 db;
      for (int k = 0; k < 3; ++k) {
        const Vec3 e = eps * Vec3::Unit(k);
        db(k) = (moved(e) - moved(-e)) / (2 * eps);
      }
      const auto env = boundary_momenta(model, tab, st, Vec3::Zero(), MomentumMatching::envelope);
      worst = std::max(worst, (env.d1 - db).norm() / std::max(1.0, db.norm()));
    }
  }
  o.detail << "worst relative mismatch " << sci(worst) << " over 100 configurations";
  o.require(worst <= 1e-6, "finite-difference agreement");
}

void oracle_equivalence(Outcome& o) {
  const ModelSpec rb = make_rigid_body(kJd);
  const auto traj = integrate(rb, Mat3::Identity(), kOmega0, 0.5, 8, 10);
  const Trajectory oracle = splitting_oracle(rb, Mat3::Identity(), kOmega0, 1e-5, 500000, 50000);
  const double err = trajectory_error(traj.samples(), oracle);
  for (const auto& s : traj.dense_samples(10)) track_defect(s.rotation);
  o.detail << "max group error " << sci(err);
  o.require(err < 1e-5, "group error < 1e-5");
}

ExperimentConfig rigid_config(int steps) {
  ExperimentConfig cfg = parse_config(R"({"preset": "rigid-body"})");
  cfg.steps = steps;
  return cfg;
}

void geometric_convergence(Outcome& o) {
  ExperimentConfig cfg = rigid_config(10);
  cfg.n_list = {4, 6, 8, 10, 12, 14};
  cfg.reference.n_ref = 26;
  cfg.error_floor = 1e-10;
  std::ostringstream log;
  const auto out = cmd_converge_n(cfg, work_dir("converge_n").string(), log);
  bool monotone = true, curve_ok = true;
  double prev = INFINITY;
  for (const auto& r : out.table.rows) {
    o.detail << "n=" << r.parameter << ": " << sci(r.step_error) << "/" << sci(r.curve_error) << "; ";
    if (!r.converged) monotone = false;
    if (prev >= cfg.error_floor && !(r.step_error < prev)) monotone = false;
    prev = r.step_error;
    if (!(r.curve_error <= 10.0 * r.step_error)) curve_ok = false;
  }
  o.detail << "slope " << (out.fitted_rate ? sci(*out.fitted_rate) : "n/a");
  o.require(monotone, "monotone decrease above the floor");
  o.require(out.fitted_rate && *out.fitted_rate < -0.5, "slope < -0.5 per unit n");
  o.require(curve_ok, "curve error within 10x of step error");
}

void order_convergence(Outcome& o) {
  ExperimentConfig cfg = rigid_config(10);
  cfg.h_list = {0.5, 0.25, 0.125, 0.0625};
  cfg.reference.n_ref = 26;
  std::ostringstream log;
  double rates[2] = {NAN, NAN};
  const int ns[2] = {4, 3};
  for (int i = 0; i < 2; ++i) {
    cfg.n = ns[i];
    const auto out = cmd_converge_h(cfg, work_dir("converge_h").string(), log);
    o.detail << "n=" << ns[i] << " errors";
    for (const auto& r : out.table.rows) o.detail << " " << sci(r.step_error);
    if (out.fitted_rate) rates[i] = *out.fitted_rate;
    o.detail << " order " << rates[i] << "; ";
  }
  o.require(rates[0] >= 3.5, "n=4 order >= 3.5");
  o.require(rates[1] >= 1.5 && rates[1] <= 2.5, "n=3 order in [1.5, 2.5]");
}

void invariant_conservation(Outcome& o) {
  ExperimentConfig cfg = rigid_config(200);
  cfg.n = 8;
  cfg.m = 9;
  // five initial momenta with C(y) = 1/2
  std::mt19937_64 rng(107);
  std::normal_distribution<double> g;
  for (int i = 0; i < 5; ++i) cfg.initial_momenta.push_back(Vec3(g(rng), g(rng), g(rng)).normalized());
  std::ostringstream log;
  const auto out = cmd_invariants(cfg, work_dir("invariants").string(), log);
  double worst_c = 0.0, worst_h = 0.0;
  bool done = true;
  for (const auto& r : out.runs) {
    worst_c = std::max(worst_c, r.drift_casimir);
    worst_h = std::max(worst_h, r.drift_hamiltonian);
    done = done && r.completed;
  }
  o.detail << "max drift C " << sci(worst_c) << ", H " << sci(worst_h);
  o.require(done, "all runs completed");
  o.require(worst_c < 1e-8 && worst_h < 1e-8, "relative drift < 1e-8");
}

struct EnergyStats {
  double max_rel = 0.0;
  double slope_t = 0.0;
  double max_abs = 0.0;
};

EnergyStats energy_stats(const ExperimentConfig& cfg, const std::string& name) {
  std::ostringstream log;
  const auto out = cmd_simulate(cfg, work_dir(name).string(), log);
  const double e0 = energy(cfg.model_spec(), cfg.r0, cfg.omega0);
  std::vector<double> t, de;
  EnergyStats s;
  for (const auto& row : out.record.rows) {
    track_defect(row.rotation);
    t.push_back(row.t);
    de.push_back(row.energy - e0);
    s.max_abs = std::max(s.max_abs, std::abs(row.energy - e0));
  }
  s.max_rel = s.max_abs / std::abs(e0);
  s.slope_t = std::abs(least_squares_slope(t, de)) * t.back();
  if (out.exit_code != exit_ok) s.max_rel = INFINITY;
  return s;
}

void energy_boundedness(Outcome& o) {
  ExperimentConfig rb = rigid_config(500);
  rb.n = 12;
  rb.m = 13;
  ExperimentConfig pd = parse_config(R"({"preset": "pendulum-stable", "steps": 500})");
  const auto a = energy_stats(rb, "energy_rigid");
  const auto b = energy_stats(pd, "energy_pendulum");
  o.detail << "rigid max " << sci(a.max_rel) << " slope*T " << sci(a.slope_t) << " vs " << sci(0.1 * a.max_abs)
           << "; pendulum max " << sci(b.max_rel) << " slope*T " << sci(b.slope_t) << " vs "
           << sci(0.1 * b.max_abs);
  o.require(a.max_rel < 1e-6, "rigid body max relative energy error");
  o.require(a.slope_t < 0.1 * a.max_abs, "rigid body drift slope");
  o.require(b.max_rel < 1e-6, "pendulum max relative energy error");
  o.require(b.slope_t < 0.1 * b.max_abs, "pendulum drift slope");
}

void unstable_pendulum(Outcome& o) {
  const ExperimentConfig cfg = parse_config(R"({"preset": "pendulum-unstable"})");
  std::ostringstream log;
  const auto out = cmd_simulate(cfg, work_dir("unstable").string(), log);
  const double e0 = energy(cfg.model_spec(), cfg.r0, cfg.omega0);
  std::vector<double> jumps, norms;
  double prev = 0.0, worst = 0.0;
  for (const auto& row : out.record.rows) {
    track_defect(row.rotation);
    const double err = row.energy - e0;
    jumps.push_back(std::abs(err - prev));
    norms.push_back(row.max_stage_norm);
    worst = std::max(worst, std::abs(err));
    prev = err;
  }
  const double rho = jumps.size() >= 2 ? spearman_correlation(jumps, norms) : 0.0;
  o.detail << out.record.rows.size() << " steps, " << out.record.near_singular_steps << " near-limit, max |dE| "
           << sci(worst) << ", spearman " << rho;
  o.require(out.exit_code == exit_ok && out.record.rows.size() == 50, "50 steps without failure");
  o.require(out.record.near_singular_steps > 0, "chart guard reports near-limit steps");
  o.require(rho > 0.5, "spearman > 0.5");
}

void structural(Outcome& o) {
  const char* ops[] = {"hat", "vee", "cay", "cay_inv", "dcay", "group_error", "chart_guard",
                       "chebyshev_lobatto_nodes", "lagrange_matrices", "gauss_legendre_rule",
                       "inertia_from_jd", "lagrangian_matrix", "kinetic_coords", "potential_coords",
                       "coordinate_gradients", "discrete_action", "internal_residual", "chart_transition",
                       "chart_transition_inv", "transition_jacobian", "boundary_momenta", "step",
                       "initialize_first_step", "eval_curve", "integrate", "body_momentum", "invariants",
                       "energy", "splitting_oracle", "trajectory_error", "fit_rate", "parse_config",
                       "cmd_simulate", "cmd_reference", "cmd_converge_n", "cmd_converge_h", "cmd_invariants"};
  std::string corpus;
  for (const auto& entry : fs::directory_iterator(fs::path(LIE_SVI_TEST_DIR))) {
    if (entry.path().extension() != ".cpp") continue;
    std::ifstream is(entry.path());
    std::ostringstream text;
    text << is.rdbuf();
    corpus += text.str();
  }
  std::vector<std::string> missing;
  for (const char* op : ops) {
    if (corpus.find(std::string(op) + "(") == std::string::npos &&
        corpus.find(std::string(op) + "<") == std::string::npos) {
      missing.push_back(op);
    }
  }
  o.detail << sizeof(ops) / sizeof(ops[0]) - missing.size() << "/" << sizeof(ops) / sizeof(ops[0])
           << " operations exercised, max orthogonality defect " << sci(g_max_defect);
  for (const auto& m : missing) o.detail << " missing:" << m;
  o.require(missing.empty(), "every operation tested");
  o.require(g_max_defect <= 1e-12, "orthogonality defect <= 1e-12");
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "algebra and chart suite", 1.0, algebra_suite},
      {2, "basis and quadrature suite", 1.0, basis_suite},
      {3, "residual correctness", 10.0, residual_suite},
      {4, "oracle equivalence", 120.0, oracle_equivalence},
      {5, "geometric convergence in n", 300.0, geometric_convergence},
      {6, "order-optimal convergence in h", 300.0, order_convergence},
      {7, "invariant conservation", 120.0, invariant_conservation},
      {8, "energy boundedness", 300.0, energy_boundedness},
      {9, "unstable pendulum stress", 300.0, unstable_pendulum},
      {10, "structural coverage and orthogonality", 60.0, structural},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(seconds < c.budget_seconds, "runtime budget");
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): "
              << o.detail.str() << " [" << std::fixed << std::setprecision(2) << seconds << " s]"
              << std::defaultfloat << std::setprecision(6) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
