#include "lie_svi/experiment.hpp"

#include "lie_svi/so3.hpp"
#include "lie_svi/spectral_basis.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace lie_svi {

namespace {

using nlohmann::json;

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string join(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

void reject_unknown(const json& obj, const std::string& parent,
                    const std::unordered_set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(join(parent, it.key()), "unknown key");
  }
}

double read_real(const json& v, const std::string& field) {
  if (!v.is_number()) throw ConfigError(field, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(field, "must be finite");
  return x;
}

int read_int(const json& v, const std::string& field) {
  if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
  const auto x = v.get<long long>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ConfigError(field, "out of range");
  }
  return static_cast<int>(x);
}

std::string read_string(const json& v, const std::string& field) {
  if (!v.is_string()) throw ConfigError(field, "expected a string");
  return v.get<std::string>();
}

Eigen::VectorXd read_reals(const json& v, const std::string& field, int count) {
  if (!v.is_array() || static_cast<int>(v.size()) != count) {
    throw ConfigError(field, "expected an array of " + std::to_string(count) + " numbers");
  }
  Eigen::VectorXd out(count);
  for (int i = 0; i < count; ++i) {
    out(i) = read_real(v[i], field + "[" + std::to_string(i) + "]");
  }
  return out;
}

Vec3 read_vec3(const json& v, const std::string& field) { return read_reals(v, field, 3); }

Mat3 read_mat3(const json& v, const std::string& field) {
  const Eigen::VectorXd flat = read_reals(v, field, 9);
  Mat3 out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = flat(3 * i + j);
  return out;
}

void apply_preset(ExperimentConfig& cfg, const std::string& name) {
  if (name == "rigid-body") {
    cfg.model = ModelKind::rigid_body;
    cfg.jd = Vec3(1.3, 2.1, 1.2);
    cfg.r0.setIdentity();
    cfg.omega0 = Vec3(2.0, -1.9, 1.0);
    cfg.h = 0.5;
    cfg.n = 8;
    cfg.steps = 10;
  } else if (name == "pendulum-stable" || name == "pendulum-unstable") {
    cfg.model = ModelKind::pendulum;
    cfg.jd = Vec3(1.0, 2.8, 2.0);
    cfg.rho = Vec3(0.0, 0.0, 1.0);
    cfg.mass = 1.0;
    cfg.gravity = 9.81;
    cfg.omega0 = Vec3(0.5, -0.5, 0.4);
    if (name == "pendulum-stable") {
      cfg.r0.setIdentity();
      cfg.h = 1.5;
      cfg.n = 8;
      cfg.steps = 500;
    } else {
      cfg.r0 = Vec3(-1.0, 1.0, -1.0).asDiagonal();
      cfg.h = 0.6;
      cfg.n = 20;
      cfg.steps = 50;
    }
  } else {
    throw ConfigError("preset", "unknown preset '" + name +
                                    "' (expected rigid-body, pendulum-stable or pendulum-unstable)");
  }
  cfg.preset = name;
}

void parse_solver(const json& obj, SolverOptions& opts) {
  const std::string p = "solver";
  if (!obj.is_object()) throw ConfigError(p, "expected an object");
  reject_unknown(obj, p,
                 {"residual_tol", "max_iters", "fd_step", "initial_guess", "momentum_matching",
                  "max_halvings", "chart_warn_threshold"});
  if (obj.contains("residual_tol")) opts.residual_tol = read_real(obj["residual_tol"], p + ".residual_tol");
  if (obj.contains("max_iters")) opts.max_iters = read_int(obj["max_iters"], p + ".max_iters");
  if (obj.contains("fd_step")) opts.fd_step = read_real(obj["fd_step"], p + ".fd_step");
  if (obj.contains("max_halvings")) opts.max_halvings = read_int(obj["max_halvings"], p + ".max_halvings");
  if (obj.contains("chart_warn_threshold")) {
    opts.chart_warn_threshold = read_real(obj["chart_warn_threshold"], p + ".chart_warn_threshold");
  }
  if (obj.contains("initial_guess")) {
    const auto mode = read_string(obj["initial_guess"], p + ".initial_guess");
    if (mode == "zero") opts.initial_guess = InitialGuessMode::zero;
    else if (mode == "constant-velocity") opts.initial_guess = InitialGuessMode::constant_velocity;
    else throw ConfigError(p + ".initial_guess", "expected zero or constant-velocity");
  }
  if (obj.contains("momentum_matching")) {
    const auto mode = read_string(obj["momentum_matching"], p + ".momentum_matching");
    if (mode == "envelope") opts.matching = MomentumMatching::envelope;
    else if (mode == "stage-pattern") opts.matching = MomentumMatching::stage_pattern;
    else throw ConfigError(p + ".momentum_matching", "expected envelope or stage-pattern");
  }
  try {
    opts.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(p, e.what());
  }
}

void parse_reference(const json& obj, ReferenceSpec& ref) {
  const std::string p = "reference";
  if (!obj.is_object()) throw ConfigError(p, "expected an object");
  reject_unknown(obj, p, {"n_ref", "h_ref", "oracle_h", "tolerance", "file"});
  if (obj.contains("n_ref")) ref.n_ref = read_int(obj["n_ref"], p + ".n_ref");
  if (obj.contains("h_ref")) ref.h_ref = read_real(obj["h_ref"], p + ".h_ref");
  if (obj.contains("oracle_h")) ref.oracle_h = read_real(obj["oracle_h"], p + ".oracle_h");
  if (obj.contains("tolerance")) ref.tolerance = read_real(obj["tolerance"], p + ".tolerance");
  if (obj.contains("file")) ref.file = read_string(obj["file"], p + ".file");
  if (ref.n_ref < 2) throw ConfigError(p + ".n_ref", "must be >= 2");
  if (ref.h_ref && !(*ref.h_ref > 0.0)) throw ConfigError(p + ".h_ref", "must be positive");
  if (!(ref.oracle_h > 0.0)) throw ConfigError(p + ".oracle_h", "must be positive");
  if (!(ref.tolerance > 0.0)) throw ConfigError(p + ".tolerance", "must be positive");
}

// Number of steps of size `step` covering `horizon`; the step has to divide it.
int steps_for(double horizon, double step, const std::string& field) {
  const double ratio = horizon / step;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    throw ConfigError(field, "step size must divide the horizon " + format_real(horizon));
  }
  return static_cast<int>(rounded);
}

Tableau tableau_for(const ExperimentConfig& cfg, int n, double h) {
  // An explicit m applies to every run; otherwise each run uses its own n + 1.
  return make_tableau<double>(n, h, cfg.m_explicit ? cfg.m : n + 1);
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  const std::size_t workers =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, sweep_threads())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            body(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  // Rethrow in index order so the reported error does not depend on scheduling.
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::filesystem::path prepare_dir(const std::string& out_dir) {
  std::filesystem::path dir(out_dir.empty() ? "." : out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("--out", "cannot create directory: " + ec.message());
  return dir;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("--out", "cannot write " + path.string());
  return os;
}

// Reference solution for sweeps: a spectral run (evaluable anywhere) or an
// external trajectory (compared at shared times only).
struct ReferenceSolution {
  std::optional<GalerkinTrajectory> spectral;
  Trajectory samples;

  const TrajectorySample* sample_at(double t) const {
    for (const auto& s : samples) {
      if (std::abs(s.t - t) <= 1e-9 * std::max(1.0, std::abs(t))) return &s;
    }
    return nullptr;
  }

  Mat3 curve_at(double t) const {
    const double h = spectral->h();
    const int count = static_cast<int>(spectral->steps.size());
    int k = static_cast<int>(std::floor(t / h));
    k = std::clamp(k, 0, count - 1);
    const double local = std::clamp(t - k * h, 0.0, h);
    return eval_curve(spectral->steps[static_cast<std::size_t>(k)], spectral->tableau, local).rotation;
  }
};

ReferenceSolution build_reference(const ExperimentConfig& cfg, std::ostream& log) {
  ReferenceSolution ref;
  if (!cfg.reference.file.empty()) {
    ref.samples = read_trajectory_csv(cfg.reference.file);
    log << "reference: loaded " << ref.samples.size() << " samples from " << cfg.reference.file << "\n";
    return ref;
  }
  const double h_ref = cfg.reference.h_ref.value_or(cfg.h);
  const int steps = steps_for(cfg.horizon(), h_ref, "reference.h_ref");
  ref.spectral = integrate(cfg.model_spec(), cfg.r0, cfg.omega0, h_ref, cfg.reference.n_ref, steps,
                           cfg.solver);
  ref.samples = ref.spectral->samples();
  log << "reference: spectral n=" << cfg.reference.n_ref << " h=" << format_real(h_ref) << "\n";
  return ref;
}

ConvergenceRow measure_cell(const ExperimentConfig& cfg, const ReferenceSolution& ref, double parameter,
                            int n, double h) {
  ConvergenceRow row;
  row.parameter = parameter;
  row.step_error = kNaN;
  row.curve_error = kNaN;
  const int steps = steps_for(cfg.horizon(), h, "h_list");
  GalerkinTrajectory traj;
  try {
    GalerkinIntegrator integrator(cfg.model_spec(), tableau_for(cfg, n, h), cfg.r0, cfg.omega0,
                                  cfg.solver);
    for (int k = 0; k < steps; ++k) integrator.advance();
    traj = integrator.release();
  } catch (const StepFailure&) {
    row.converged = false;
    return row;
  }
  row.converged = true;
  const double t_end = steps * h;
  const TrajectorySample* target = ref.sample_at(t_end);
  if (!target) throw ConfigError("reference.file", "reference does not cover the final time");
  row.step_error = group_error(traj.steps.back().next, target->rotation);

  const Trajectory dense = traj.dense_samples(cfg.curve_samples_per_step);
  if (ref.spectral) {
    double worst = 0.0;
    for (const auto& s : dense) worst = std::max(worst, group_error(s.rotation, ref.curve_at(s.t)));
    row.curve_error = worst;
  } else {
    try {
      row.curve_error = shared_time_error(dense, ref.samples);
    } catch (const std::invalid_argument&) {
      row.curve_error = kNaN;
    }
  }
  return row;
}

void write_convergence(const std::filesystem::path& dir, const std::string& stem,
                       const ConvergenceOutcome& out, const ExperimentConfig& cfg) {
  {
    auto os = open_output(dir / (stem + ".csv"));
    os << "parameter,step_error,curve_error,converged\n";
    for (const auto& r : out.table.rows) {
      os << format_real(r.parameter) << ',' << format_real(r.step_error) << ','
         << format_real(r.curve_error) << ',' << (r.converged ? 1 : 0) << '\n';
    }
  }
  json summary;
  summary["command"] = stem;
  summary["error_floor"] = cfg.error_floor;
  summary["cells"] = out.table.rows.size();
  summary["fitted_rate"] = out.fitted_rate ? json(*out.fitted_rate) : json(nullptr);
  if (out.expected_order) summary["expected_order"] = *out.expected_order;
  auto os = open_output(dir / (stem + "_summary.json"));
  os << summary.dump(2) << '\n';
}

ConvergenceOutcome finish_sweep(ConvergenceTable table, RateMode mode, const ExperimentConfig& cfg,
                                std::ostream& log) {
  ConvergenceOutcome out;
  table.sort();
  out.table = std::move(table);
  const bool any_converged = std::any_of(out.table.rows.begin(), out.table.rows.end(),
                                         [](const ConvergenceRow& r) { return r.converged; });
  for (const auto& r : out.table.rows) {
    if (!r.converged) log << "cell " << format_real(r.parameter) << ": solver did not converge\n";
  }
  try {
    out.fitted_rate = fit_rate(out.table, mode, cfg.error_floor, 2);
  } catch (const std::invalid_argument& e) {
    log << "fit unavailable: " << e.what() << "\n";
  }
  out.exit_code = any_converged ? exit_ok : exit_nonconvergence;
  return out;
}

}  // namespace

ModelSpec ExperimentConfig::model_spec() const {
  return model == ModelKind::rigid_body ? make_rigid_body(jd) : make_pendulum(jd, mass, gravity, rho);
}

ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("", "config must be a JSON object");
  reject_unknown(doc, "",
                 {"preset", "model", "jd", "mass", "gravity", "rho", "R0", "omega0", "h", "n", "m",
                  "steps", "solver", "n_list", "h_list", "reference", "dense_per_step",
                  "curve_samples_per_step", "error_floor", "initial_momenta"});

  ExperimentConfig cfg;
  if (doc.contains("preset")) {
    apply_preset(cfg, read_string(doc["preset"], "preset"));
  } else {
    for (const char* key : {"model", "jd", "omega0", "h", "n", "steps"}) {
      if (!doc.contains(key)) throw ConfigError(key, "required when no preset is given");
    }
  }

  if (doc.contains("model")) {
    const auto name = read_string(doc["model"], "model");
    if (name == "rigid-body") cfg.model = ModelKind::rigid_body;
    else if (name == "pendulum") cfg.model = ModelKind::pendulum;
    else throw ConfigError("model", "expected rigid-body or pendulum");
  }
  if (cfg.model == ModelKind::rigid_body) {
    for (const char* key : {"mass", "gravity", "rho"}) {
      if (doc.contains(key)) throw ConfigError(key, "only valid for the pendulum model");
    }
  }
  if (doc.contains("jd")) cfg.jd = read_vec3(doc["jd"], "jd");
  if (doc.contains("mass")) cfg.mass = read_real(doc["mass"], "mass");
  if (doc.contains("gravity")) cfg.gravity = read_real(doc["gravity"], "gravity");
  if (doc.contains("rho")) cfg.rho = read_vec3(doc["rho"], "rho");
  if (doc.contains("R0")) cfg.r0 = read_mat3(doc["R0"], "R0");
  if (doc.contains("omega0")) cfg.omega0 = read_vec3(doc["omega0"], "omega0");
  if (doc.contains("h")) cfg.h = read_real(doc["h"], "h");
  if (doc.contains("n")) cfg.n = read_int(doc["n"], "n");
  if (doc.contains("m")) {
    cfg.m = read_int(doc["m"], "m");
    cfg.m_explicit = true;
  }
  if (doc.contains("steps")) cfg.steps = read_int(doc["steps"], "steps");
  if (doc.contains("solver")) parse_solver(doc["solver"], cfg.solver);
  if (doc.contains("reference")) parse_reference(doc["reference"], cfg.reference);
  if (doc.contains("dense_per_step")) cfg.dense_per_step = read_int(doc["dense_per_step"], "dense_per_step");
  if (doc.contains("curve_samples_per_step")) {
    cfg.curve_samples_per_step = read_int(doc["curve_samples_per_step"], "curve_samples_per_step");
  }
  // Rate fits ignore errors below ten times the Newton tolerance unless told otherwise.
  cfg.error_floor = doc.contains("error_floor") ? read_real(doc["error_floor"], "error_floor")
                                                : 10.0 * cfg.solver.residual_tol;

  if (doc.contains("n_list")) {
    const auto& list = doc["n_list"];
    if (!list.is_array() || list.empty()) throw ConfigError("n_list", "expected a nonempty array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string field = "n_list[" + std::to_string(i) + "]";
      const int n = read_int(list[i], field);
      if (n < 2) throw ConfigError(field, "must be >= 2");
      cfg.n_list.push_back(n);
    }
  }
  if (doc.contains("h_list")) {
    const auto& list = doc["h_list"];
    if (!list.is_array() || list.empty()) throw ConfigError("h_list", "expected a nonempty array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string field = "h_list[" + std::to_string(i) + "]";
      const double h = read_real(list[i], field);
      if (!(h > 0.0)) throw ConfigError(field, "must be positive");
      cfg.h_list.push_back(h);
    }
  }
  if (doc.contains("initial_momenta")) {
    const auto& list = doc["initial_momenta"];
    if (!list.is_array() || list.empty()) {
      throw ConfigError("initial_momenta", "expected a nonempty array of 3-vectors");
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
      cfg.initial_momenta.push_back(read_vec3(list[i], "initial_momenta[" + std::to_string(i) + "]"));
    }
  }

  if (!(cfg.h > 0.0)) throw ConfigError("h", "must be positive");
  if (cfg.n < 2) throw ConfigError("n", "must be >= 2");
  if (cfg.steps < 1) throw ConfigError("steps", "must be >= 1");
  if (cfg.m_explicit && cfg.m < 1) throw ConfigError("m", "must be >= 1");
  if (!cfg.m_explicit) cfg.m = cfg.n + 1;
  if ((cfg.jd.array() <= 0.0).any()) throw ConfigError("jd", "entries must be positive");
  if (cfg.mass < 0.0) throw ConfigError("mass", "must be nonnegative");
  if (cfg.gravity < 0.0) throw ConfigError("gravity", "must be nonnegative");
  if (orthogonality_defect(cfg.r0) > 1e-10 || cfg.r0.determinant() <= 0.0) {
    throw ConfigError("R0", "must be a rotation matrix (row-major)");
  }
  if (cfg.dense_per_step < 0) throw ConfigError("dense_per_step", "must be >= 0");
  if (cfg.curve_samples_per_step < 1) throw ConfigError("curve_samples_per_step", "must be >= 1");
  if (!(cfg.error_floor > 0.0)) throw ConfigError("error_floor", "must be positive");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("--config", "cannot read " + path);
  std::ostringstream text;
  text << is.rdbuf();
  return parse_config(text.str());
}

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

const std::vector<std::string>& run_record_columns() {
  static const std::vector<std::string> columns = {
      "k", "t", "R00", "R01", "R02", "R10", "R11", "R12", "R20", "R21", "R22",
      "omega_x", "omega_y", "omega_z", "energy", "y_x", "y_y", "y_z", "C", "H",
      "orthogonality_defect", "newton_iterations", "residual", "max_stage_norm"};
  return columns;
}

void write_run_header(std::ostream& os) {
  const auto& cols = run_record_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
}

void write_run_row(std::ostream& os, const RunRow& row) {
  os << row.k << ',' << format_real(row.t);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) os << ',' << format_real(row.rotation(i, j));
  for (int i = 0; i < 3; ++i) os << ',' << format_real(row.omega(i));
  os << ',' << format_real(row.energy);
  for (int i = 0; i < 3; ++i) os << ',' << format_real(row.y(i));
  os << ',' << format_real(row.casimir) << ',' << format_real(row.hamiltonian) << ','
     << format_real(row.orthogonality_defect) << ',' << row.newton_iterations << ','
     << format_real(row.residual) << ',' << format_real(row.max_stage_norm) << '\n';
}

RunRow make_run_row(const ModelSpec& model, int k, double t, const StepResult& result) {
  const InvariantSample inv = invariant_sample(model, {t, result.next, result.next_velocity});
  RunRow row;
  row.k = k;
  row.t = t;
  row.rotation = result.next;
  row.omega = result.next_velocity;
  row.energy = inv.energy;
  row.y = inv.y;
  row.casimir = inv.casimir;
  row.hamiltonian = inv.hamiltonian;
  row.orthogonality_defect = inv.orthogonality_defect;
  row.newton_iterations = result.solver_stats.iterations;
  row.residual = result.solver_stats.residual_norm;
  row.max_stage_norm = result.chart_health.max_stage_norm;
  return row;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t,R00,R01,R02,R10,R11,R12,R20,R21,R22,omega_x,omega_y,omega_z\n";
  for (const auto& s : traj) {
    os << format_real(s.t);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) os << ',' << format_real(s.rotation(i, j));
    for (int i = 0; i < 3; ++i) os << ',' << format_real(s.omega(i));
    os << '\n';
  }
}

Trajectory read_trajectory_csv(const std::string& path) {
  const std::string field = "reference.file";
  std::ifstream is(path);
  if (!is) throw ConfigError(field, "cannot read " + path);
  Trajectory out;
  std::string line;
  bool header = true;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(ls, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw ConfigError(field, "bad number on line " + std::to_string(lineno));
      values.push_back(v);
    }
    if (values.size() != 13) {
      throw ConfigError(field, "expected 13 columns on line " + std::to_string(lineno));
    }
    TrajectorySample s;
    s.t = values[0];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s.rotation(i, j) = values[1 + 3 * i + j];
    s.omega = Vec3(values[10], values[11], values[12]);
    out.push_back(s);
  }
  if (out.empty()) throw ConfigError(field, "no samples in " + path);
  return out;
}

int sweep_threads() {
  if (const char* env = std::getenv("LIE_SVI_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError("LIE_SVI_THREADS", "must be a positive integer");
    return static_cast<int>(std::min<long>(v, 1024));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int expected_h_order(int n) { return n % 2 == 0 ? n : n - 1; }

SimulateOutcome cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir,
                             std::ostream& log) {
  const auto dir = prepare_dir(out_dir);
  const ModelSpec model = cfg.model_spec();
  SimulateOutcome out;
  auto os = open_output(dir / "simulate.csv");
  write_run_header(os);

  GalerkinIntegrator integrator(model, tableau_for(cfg, cfg.n, cfg.h), cfg.r0, cfg.omega0, cfg.solver);
  for (int k = 1; k <= cfg.steps; ++k) {
    try {
      const StepResult& r = integrator.advance();
      const RunRow row = make_run_row(model, k, k * cfg.h, r);
      write_run_row(os, row);
      if (r.chart_health.status == ChartStatus::near_singular) {
        ++out.record.near_singular_steps;
        log << "warning: step " << k << " near chart limit (max stage norm "
            << format_real(row.max_stage_norm) << ")\n";
      }
      out.record.rows.push_back(row);
    } catch (const StepFailure& e) {
      os << "# FAILED step " << e.step_index() << ": " << e.what() << '\n';
      os.flush();
      out.record.failure = e.what();
      out.exit_code = exit_nonconvergence;
      log << "error: " << e.what() << "\n";
      break;
    }
  }

  if (cfg.dense_per_step > 0) {
    auto dense = open_output(dir / "simulate_dense.csv");
    write_trajectory_csv(dense, integrator.trajectory().dense_samples(cfg.dense_per_step));
  }
  log << "simulate: " << out.record.rows.size() << " steps, " << out.record.near_singular_steps
      << " near-limit\n";
  return out;
}

ReferenceOutcome cmd_reference(const ExperimentConfig& cfg, const std::string& out_dir,
                               std::ostream& log) {
  const auto dir = prepare_dir(out_dir);
  const ModelSpec model = cfg.model_spec();
  const double h_ref = cfg.reference.h_ref.value_or(cfg.h);
  const double horizon = cfg.horizon();
  const int spectral_steps = steps_for(horizon, h_ref, "reference.h_ref");
  const long oracle_steps = std::lround(horizon / cfg.reference.oracle_h);
  const long every = std::lround(h_ref / cfg.reference.oracle_h);
  if (every < 1 || std::abs(every * cfg.reference.oracle_h - h_ref) > 1e-9 * h_ref) {
    throw ConfigError("reference.oracle_h", "must divide the reference step");
  }

  const GalerkinTrajectory spectral =
      integrate(model, cfg.r0, cfg.omega0, h_ref, cfg.reference.n_ref, spectral_steps, cfg.solver);
  const Trajectory oracle =
      splitting_oracle(model, cfg.r0, cfg.omega0, cfg.reference.oracle_h, oracle_steps, every);
  const Trajectory samples = spectral.samples();

  ReferenceOutcome out;
  out.mutual_error = shared_time_error(samples, oracle, 1e-9 * std::max(1.0, horizon));
  {
    auto os = open_output(dir / "reference_spectral.csv");
    write_trajectory_csv(os, samples);
  }
  {
    auto os = open_output(dir / "reference_oracle.csv");
    write_trajectory_csv(os, oracle);
  }
  json summary;
  summary["n_ref"] = cfg.reference.n_ref;
  summary["h_ref"] = h_ref;
  summary["oracle_h"] = cfg.reference.oracle_h;
  summary["mutual_error"] = out.mutual_error;
  summary["tolerance"] = cfg.reference.tolerance;
  {
    auto os = open_output(dir / "reference_summary.json");
    os << summary.dump(2) << '\n';
  }
  log << "reference: mutual group error " << format_real(out.mutual_error) << "\n";
  if (!(out.mutual_error <= cfg.reference.tolerance)) {
    log << "error: spectral and splitting references disagree beyond "
        << format_real(cfg.reference.tolerance) << "\n";
    out.exit_code = exit_reference_mismatch;
  }
  return out;
}

ConvergenceOutcome cmd_converge_n(const ExperimentConfig& cfg, const std::string& out_dir,
                                  std::ostream& log) {
  if (cfg.n_list.size() < 2) throw ConfigError("n_list", "needs at least two entries to fit a rate");
  const auto dir = prepare_dir(out_dir);
  const ReferenceSolution ref = build_reference(cfg, log);
  ConvergenceTable table;
  table.rows.resize(cfg.n_list.size());
  parallel_for(cfg.n_list.size(), [&](std::size_t i) {
    table.rows[i] = measure_cell(cfg, ref, cfg.n_list[i], cfg.n_list[i], cfg.h);
  });
  ConvergenceOutcome out = finish_sweep(std::move(table), RateMode::geometric_in_n, cfg, log);
  write_convergence(dir, "converge_n", out, cfg);
  if (out.fitted_rate) log << "converge-n: log-error slope per unit n " << format_real(*out.fitted_rate) << "\n";
  return out;
}

ConvergenceOutcome cmd_converge_h(const ExperimentConfig& cfg, const std::string& out_dir,
                                  std::ostream& log) {
  if (cfg.h_list.size() < 2) throw ConfigError("h_list", "needs at least two entries to fit a rate");
  for (std::size_t i = 0; i < cfg.h_list.size(); ++i) {
    steps_for(cfg.horizon(), cfg.h_list[i], "h_list[" + std::to_string(i) + "]");
  }
  const auto dir = prepare_dir(out_dir);
  const ReferenceSolution ref = build_reference(cfg, log);
  ConvergenceTable table;
  table.rows.resize(cfg.h_list.size());
  parallel_for(cfg.h_list.size(), [&](std::size_t i) {
    table.rows[i] = measure_cell(cfg, ref, cfg.h_list[i], cfg.n, cfg.h_list[i]);
  });
  ConvergenceOutcome out = finish_sweep(std::move(table), RateMode::algebraic_in_h, cfg, log);
  out.expected_order = expected_h_order(cfg.n);
  write_convergence(dir, "converge_h", out, cfg);
  if (out.fitted_rate) {
    log << "converge-h: fitted order " << format_real(*out.fitted_rate) << " (expected "
        << *out.expected_order << ")\n";
  }
  return out;
}

InvariantsOutcome cmd_invariants(const ExperimentConfig& cfg, const std::string& out_dir,
                                 std::ostream& log) {
  const auto dir = prepare_dir(out_dir);
  const ModelSpec model = cfg.model_spec();
  std::vector<Vec3> omegas;
  if (cfg.initial_momenta.empty()) {
    omegas.push_back(cfg.omega0);
  } else {
    for (const auto& y : cfg.initial_momenta) omegas.push_back(y.cwiseQuotient(model.inertia.coeffs));
  }

  struct RunData {
    InvariantRun summary;
    std::vector<RunRow> rows;
    std::string failure;
  };
  std::vector<RunData> runs(omegas.size());
  parallel_for(omegas.size(), [&](std::size_t i) {
    RunData& run = runs[i];
    const InvariantSample first = invariant_sample(model, {0.0, cfg.r0, omegas[i]});
    run.summary.y0 = first.y;
    RunRow row0;
    row0.rotation = cfg.r0;
    row0.omega = omegas[i];
    row0.energy = first.energy;
    row0.y = first.y;
    row0.casimir = first.casimir;
    row0.hamiltonian = first.hamiltonian;
    row0.orthogonality_defect = first.orthogonality_defect;
    run.rows.push_back(row0);
    auto relative = [](double value, double base) {
      const double d = std::abs(value - base);
      return base != 0.0 ? d / std::abs(base) : d;
    };
    try {
      GalerkinIntegrator integrator(model, tableau_for(cfg, cfg.n, cfg.h), cfg.r0, omegas[i], cfg.solver);
      for (int k = 1; k <= cfg.steps; ++k) {
        const RunRow row = make_run_row(model, k, k * cfg.h, integrator.advance());
        run.summary.drift_casimir =
            std::max(run.summary.drift_casimir, relative(row.casimir, first.casimir));
        run.summary.drift_hamiltonian =
            std::max(run.summary.drift_hamiltonian, relative(row.hamiltonian, first.hamiltonian));
        run.summary.energy_error = std::max(run.summary.energy_error, relative(row.energy, first.energy));
        run.rows.push_back(row);
      }
    } catch (const StepFailure& e) {
      run.summary.completed = false;
      run.failure = e.what();
    }
  });

  InvariantsOutcome out;
  {
    auto os = open_output(dir / "invariants.csv");
    os << "run,k,t,y_x,y_y,y_z,C,H,energy,energy_error,max_stage_norm\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const double e0 = runs[i].rows.front().energy;
      for (const auto& r : runs[i].rows) {
        os << i << ',' << r.k << ',' << format_real(r.t) << ',' << format_real(r.y(0)) << ','
           << format_real(r.y(1)) << ',' << format_real(r.y(2)) << ',' << format_real(r.casimir) << ','
           << format_real(r.hamiltonian) << ',' << format_real(r.energy) << ','
           << format_real(r.energy - e0) << ',' << format_real(r.max_stage_norm) << '\n';
      }
      if (!runs[i].failure.empty()) os << "# FAILED run " << i << ": " << runs[i].failure << '\n';
    }
  }
  auto os = open_output(dir / "invariants_summary.csv");
  os << "run,y0_x,y0_y,y0_z,max_drift_C,max_drift_H,max_energy_error,completed\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const InvariantRun& s = runs[i].summary;
    os << i << ',' << format_real(s.y0(0)) << ',' << format_real(s.y0(1)) << ',' << format_real(s.y0(2))
       << ',' << format_real(s.drift_casimir) << ',' << format_real(s.drift_hamiltonian) << ','
       << format_real(s.energy_error) << ',' << (s.completed ? 1 : 0) << '\n';
    log << "run " << i << ": drift C " << format_real(s.drift_casimir) << ", H "
        << format_real(s.drift_hamiltonian) << (s.completed ? "" : " (failed: " + runs[i].failure + ")")
        << "\n";
    if (!s.completed) out.exit_code = exit_nonconvergence;
    out.runs.push_back(s);
  }
  return out;
}

int run_command(const std::string& command, const std::string& config_path, const std::string& out_dir,
                std::ostream& log) {
  try {
    const ExperimentConfig cfg = load_config(config_path);
    if (command == "simulate") return cmd_simulate(cfg, out_dir, log).exit_code;
    if (command == "reference") return cmd_reference(cfg, out_dir, log).exit_code;
    if (command == "converge-n") return cmd_converge_n(cfg, out_dir, log).exit_code;
    if (command == "converge-h") return cmd_converge_h(cfg, out_dir, log).exit_code;
    if (command == "invariants") return cmd_invariants(cfg, out_dir, log).exit_code;
    log << "error: unknown command '" << command << "'\n";
    return exit_config;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const StepFailure& e) {
    log << "error: " << e.what() << "\n";
    return exit_nonconvergence;
  } catch (const NonConvergence& e) {
    log << "error: " << e.what() << "\n";
    return exit_nonconvergence;
  }
}

}  // namespace lie_svi
