#pragma once

#include "lie_svi/diagnostics.hpp"
#include "lie_svi/galerkin_stepper.hpp"
#include "lie_svi/models.hpp"

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lie_svi {

/// Invalid configuration. `field()` names the offending key (dotted path).
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

private:
  std::string field_;
};

struct ReferenceSpec {
  int n_ref = 26;
  std::optional<double> h_ref;  // defaults to the config step size
  double oracle_h = 1e-5;
  double tolerance = 1e-6;      // spectral vs splitting cross-check
  std::string file;             // external trajectory CSV instead of a spectral run
};

struct ExperimentConfig {
  std::string preset;
  ModelKind model = ModelKind::rigid_body;
  Vec3 jd = Vec3::Ones();
  double mass = 1.0;
  double gravity = 9.81;
  Vec3 rho = Vec3::UnitZ();
  Mat3 r0 = Mat3::Identity();
  Vec3 omega0 = Vec3::Zero();
  double h = 0.5;
  int n = 8;
  int m = 0;  // quadrature points, n + 1 unless given
  bool m_explicit = false;
  int steps = 10;
  SolverOptions solver;
  std::vector<int> n_list;
  std::vector<double> h_list;
  ReferenceSpec reference;
  int dense_per_step = 0;          // simulate: extra curve samples per step
  int curve_samples_per_step = 4;  // converge-*: Galerkin-curve error sampling
  double error_floor = 1e-11;  // 10x the default Newton tolerance
  std::vector<Vec3> initial_momenta;  // invariants: body momenta y, one run each

  ModelSpec model_spec() const;
  double horizon() const { return h * steps; }
};

/// Parse and validate a JSON config. Throws ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

struct RunRow {
  int k = 0;
  double t = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 omega = Vec3::Zero();
  double energy = 0.0;
  Vec3 y = Vec3::Zero();
  double casimir = 0.0;
  double hamiltonian = 0.0;
  double orthogonality_defect = 0.0;
  int newton_iterations = 0;
  double residual = 0.0;
  double max_stage_norm = 0.0;
};

struct RunRecord {
  std::vector<RunRow> rows;
  std::optional<std::string> failure;
  int near_singular_steps = 0;
};

RunRow make_run_row(const ModelSpec& model, int k, double t, const StepResult& result);
const std::vector<std::string>& run_record_columns();
void write_run_header(std::ostream& os);
void write_run_row(std::ostream& os, const RunRow& row);

/// "%.17g"
std::string format_real(double value);

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::string& path);

/// Sweep parallelism from LIE_SVI_THREADS, falling back to the hardware count.
int sweep_threads();

enum ExitCode : int {
  exit_ok = 0,
  exit_config = 1,
  exit_nonconvergence = 2,
  exit_reference_mismatch = 3,
};

struct SimulateOutcome {
  RunRecord record;
  int exit_code = exit_ok;
};

SimulateOutcome cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir,
                             std::ostream& log);

struct ReferenceOutcome {
  double mutual_error = 0.0;
  int exit_code = exit_ok;
};

ReferenceOutcome cmd_reference(const ExperimentConfig& cfg, const std::string& out_dir,
                               std::ostream& log);

struct ConvergenceOutcome {
  ConvergenceTable table;
  std::optional<double> fitted_rate;  // slope per unit n, or algebraic order in h
  std::optional<int> expected_order;  // converge-h only
  int exit_code = exit_ok;
};

ConvergenceOutcome cmd_converge_n(const ExperimentConfig& cfg, const std::string& out_dir,
                                  std::ostream& log);
ConvergenceOutcome cmd_converge_h(const ExperimentConfig& cfg, const std::string& out_dir,
                                  std::ostream& log);

struct InvariantRun {
  Vec3 y0 = Vec3::Zero();
  double drift_casimir = 0.0;
  double drift_hamiltonian = 0.0;
  double energy_error = 0.0;
  bool completed = true;
};

struct InvariantsOutcome {
  std::vector<InvariantRun> runs;
  int exit_code = exit_ok;
};

InvariantsOutcome cmd_invariants(const ExperimentConfig& cfg, const std::string& out_dir,
                                 std::ostream& log);

/// Order observed for odd n is one less than for even n.
int expected_h_order(int n);

/// Dispatch by command name; maps errors to exit codes and reports on `log`.
int run_command(const std::string& command, const std::string& config_path,
                const std::string& out_dir, std::ostream& log);

}  // namespace lie_svi
