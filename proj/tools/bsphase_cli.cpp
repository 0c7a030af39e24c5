/// \file bsphase_cli.cpp
/// \brief Command-line driver: simulation runs, coupling-limit sweeps,
///        continuous-dependence studies, invariant verification, and mesh
///        reporting, all from INI-style configuration files. Output file
///        names embed the configuration hash so identical reruns overwrite
///        identically.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bsphase/assembly.hpp"
#include "bsphase/config.hpp"
#include "bsphase/diagnostics.hpp"
#include "bsphase/elliptic.hpp"
#include "bsphase/errors.hpp"
#include "bsphase/experiments.hpp"
#include "bsphase/geometry.hpp"
#include "bsphase/io.hpp"
#include "bsphase/model.hpp"
#include "bsphase/stepper.hpp"

namespace {

using namespace bsphase;

constexpr int kExitOk = 0;
constexpr int kExitUnexpected = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitVerify = 4;

// ===========================================================================
// Session setup and output plumbing
// ===========================================================================

/// Everything the commands share: the parsed configuration, its hash, and the
/// mesh/operator/parameter triple built from it (with the solvability check
/// alpha*beta*|Omega| + |Gamma| != 0 already enforced against the mesh).
struct Session {
  RunConfig config;
  std::string hash;
  BulkSurfaceMesh mesh;
  FeOperators ops;
  CouplingParams params;
  double area = 0.0;
  double perimeter = 0.0;
};

Session open_session(const std::string& config_path) {
  Session s;
  s.config = parse_config(config_path);
  s.hash = config_hash(s.config);
  s.mesh = make_mesh(s.config);
  s.ops = assemble_operators(s.mesh);
  s.params = make_params(s.config);
  std::tie(s.area, s.perimeter) = measures(s.mesh);
  validate_params(s.params, s.area, s.perimeter);
  return s;
}

std::filesystem::path out_path(const Session& s, const std::string& name) {
  std::filesystem::path dir =
      s.config.output_dir.empty() ? "." : s.config.output_dir;
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::ofstream open_output(const Session& s, const std::string& name) {
  const std::filesystem::path path = out_path(s, name);
  std::ofstream file(path);
  if (!file)
    throw config_error("cannot open output file '" + path.string() + "'");
  return file;
}

// ===========================================================================
// run: one simulation with streamed diagnostics and snapshot files
// ===========================================================================

int cmd_run(const std::string& config_path) {
  const Session s = open_session(config_path);
  const SimulationInputs in = make_inputs(s.config, s.mesh, s.ops, s.params);

  std::ofstream diag = open_output(s, "run_" + s.hash + "_diagnostics.csv");
  diag << diagnostics_csv_header() << "\n";
  const DiagnosticsSink sink = [&diag](const DiagnosticsRecord& rec) {
    diag << diagnostics_csv_row(rec) << "\n";
  };

  const Trajectory traj =
      simulate(in.phi0, in.psi0, in.velocity, in.T_final, s.ops, s.mesh,
               s.params, in.potentials, in.mobility_bulk, in.mobility_surf,
               in.step, in.snapshot_stride, sink);
  diag.close();

  char name[128];
  for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
    const int step = traj.snapshot_steps[k];
    std::snprintf(name, sizeof(name), "run_%s_bulk_%06d.csv", s.hash.c_str(),
                  step);
    {
      std::ofstream f = open_output(s, name);
      write_bulk_snapshot_csv(f, s.mesh, traj.snapshots[k]);
    }
    std::snprintf(name, sizeof(name), "run_%s_surface_%06d.csv",
                  s.hash.c_str(), step);
    {
      std::ofstream f = open_output(s, name);
      write_surface_snapshot_csv(f, s.mesh, traj.snapshots[k]);
    }
    if (s.config.output_vtk) {
      std::snprintf(name, sizeof(name), "run_%s_snapshot_%06d.vtk",
                    s.hash.c_str(), step);
      std::ofstream f = open_output(s, name);
      write_vtk_snapshot(f, s.mesh, traj.snapshots[k]);
    }
  }

  const MassTotals m0 = mass(traj.snapshots.front(), s.ops, s.params);
  const double e0 =
      energy(traj.snapshots.front(), s.ops, s.params, in.potentials);
  double drift_combined = 0.0, drift_bulk = 0.0, drift_surf = 0.0;
  for (const DiagnosticsRecord& r : traj.records) {
    drift_combined =
        std::max(drift_combined, std::abs(r.mass_combined - m0.combined));
    drift_bulk = std::max(drift_bulk, std::abs(r.mass_bulk - m0.bulk));
    drift_surf = std::max(drift_surf, std::abs(r.mass_surf - m0.surf));
  }
  const double e_final =
      traj.records.empty() ? e0 : traj.records.back().energy;

  std::printf("config hash       %s\n", s.hash.c_str());
  std::printf("mesh              %s, %d bulk / %d surface vertices\n",
              s.config.mesh_shape.c_str(), s.mesh.n_bulk(), s.mesh.n_surface());
  std::printf("steps             %zu (dt = %g, T_final = %g)\n",
              traj.records.size(), s.config.dt, s.config.T_final);
  std::printf("snapshots         %zu\n", traj.snapshots.size());
  std::printf("energy            %.12g -> %.12g\n", e0, e_final);
  if (s.params.L.is_infinite())
    std::printf("mass drift        bulk %.3e, surface %.3e (conserved "
                "separately)\n",
                drift_bulk, drift_surf);
  else
    std::printf("mass drift        combined %.3e\n", drift_combined);
  std::printf("outputs           %s\n",
              out_path(s, "run_" + s.hash + "_*").string().c_str());
  return kExitOk;
}

// ===========================================================================
// sweep: coupling-limit decay rates
// ===========================================================================

SweepDirection parse_direction(const std::string& text) {
  for (const SweepDirection d :
       {SweepDirection::K_to_0, SweepDirection::K_to_inf, SweepDirection::L_to_0,
        SweepDirection::L_to_inf})
    if (format_direction(d) == text) return d;
  throw config_error("unknown sweep direction '" + text +
                     "' (expected K_to_0, K_to_inf, L_to_0, or L_to_inf)");
}

int cmd_sweep(const std::string& config_path, const std::string& direction,
              const std::vector<double>& values) {
  const Session s = open_session(config_path);
  const SweepDirection dir = parse_direction(direction);
  const SimulationInputs in = make_inputs(s.config, s.mesh, s.ops, s.params);

  const SweepResult result = limit_sweep(dir, values, in, s.params, s.ops, s.mesh);

  std::string csv = sweep_csv(result);
  const bool exploratory =
      !in.mobility_bulk.is_constant() || !in.mobility_surf.is_constant();
  if (exploratory)
    csv += "# label=exploratory (non-constant mobilities; the decay-rate "
           "statements assume constant mobilities)\n";

  const std::string file_name =
      "sweep_" + format_direction(dir) + "_" + s.hash + ".csv";
  open_output(s, file_name) << csv;

  std::printf("direction         %s\n", format_direction(dir).c_str());
  std::printf("parameter values  %zu\n", result.parameter_values.size());
  std::printf("fitted slope      %+.4f (expected %+.1f)\n", result.fitted_slope,
              result.expected_slope);
  std::printf("fit residual      %.3e (RMS in log space)\n",
              result.fit_residual);
  std::printf("monotone decay    %s\n",
              result.quantity_monotone_toward_limit ? "yes" : "no");
  if (exploratory)
    std::printf("label             exploratory (non-constant mobilities)\n");
  std::printf("output            %s\n", out_path(s, file_name).string().c_str());
  return kExitOk;
}

// ===========================================================================
// cdep: continuous dependence on the data
// ===========================================================================

int cmd_cdep(const std::string& config_path, const std::vector<double>& deltas,
             const std::string& mode_text, long long seed_flag) {
  const Session s = open_session(config_path);
  PerturbationMode mode;
  if (mode_text == "initial_data")
    mode = PerturbationMode::initial_data;
  else if (mode_text == "velocity")
    mode = PerturbationMode::velocity;
  else
    throw config_error("unknown perturbation mode '" + mode_text +
                       "' (expected initial_data or velocity)");
  const unsigned seed =
      seed_flag < 0 ? s.config.seed : static_cast<unsigned>(seed_flag);
  const SimulationInputs in = make_inputs(s.config, s.mesh, s.ops, s.params);

  const CdepResult result =
      continuous_dependence(deltas, mode, seed, in, s.params, s.ops, s.mesh);

  const std::string file_name = "cdep_" + s.hash + ".csv";
  open_output(s, file_name) << cdep_csv(result);

  std::printf("perturbation mode %s\n", mode_text.c_str());
  std::printf("deltas            %zu\n", result.rows.size());
  std::printf("fitted slope      %+.4f (linear response is +1)\n",
              result.fitted_slope);
  std::printf("fit residual      %.3e (RMS in log space)\n",
              result.fit_residual);
  std::printf("output            %s\n", out_path(s, file_name).string().c_str());
  return kExitOk;
}

// ===========================================================================
// verify: invariant suite with a pass table
// ===========================================================================

struct VerifyRow {
  std::string check;
  double measured = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

/// Interpolation bound, Poincare constant, dual-norm consistency, and
/// self-adjointness of the elliptic solution operator, all on the configured
/// mesh and parameters with seeded random data.
void elliptic_checks(const Session& s, std::vector<VerifyRow>& rows) {
  std::mt19937 rng(s.config.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const int nb = s.ops.n_bulk(), ns = s.ops.n_surface();
  const auto random_vector = [&](int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = unit(rng);
    return v;
  };

  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const InterpolationCheck check = check_interpolation(
        random_vector(nb), random_vector(ns), s.ops, s.mesh, s.params);
    if (check.violated) ++violations;
  }
  rows.push_back({"interpolation_violations_of_100",
                  static_cast<double>(violations), 0.0, violations == 0});

  if (s.params.K.is_infinite()) {
    std::printf("note: poincare_constant skipped (decoupled energies have a "
                "two-dimensional constant kernel)\n");
  } else {
    const double cp = poincare_constant(s.ops, s.mesh, s.params);
    rows.push_back(
        {"poincare_constant_positive", cp, 0.0, std::isfinite(cp) && cp > 0.0});
  }

  const SolutionOperator op(s.ops, s.mesh, s.params);
  const auto make_admissible = [&](Vector& fb, Vector& fs) {
    if (s.params.L.is_infinite()) {
      fb.array() -= (s.ops.M_bulk * fb).sum() / s.area;
      fs.array() -= (s.ops.M_surf * fs).sum() / s.perimeter;
    } else {
      const double residual = s.params.beta * (s.ops.M_bulk * fb).sum() +
                              (s.ops.M_surf * fs).sum();
      const double c =
          residual / (s.params.beta * s.params.beta * s.area + s.perimeter);
      fb.array() -= s.params.beta * c;
      fs.array() -= c;
    }
  };
  const auto pairing = [&](const Vector& fb, const Vector& fs,
                           const EllipticSolution& sol) {
    return fb.dot(s.ops.M_bulk * sol.s_bulk) + fs.dot(s.ops.M_surf * sol.s_surf);
  };

  double worst_norm_mismatch = 0.0;
  double worst_asymmetry = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Vector fb = random_vector(nb), fs = random_vector(ns);
    Vector gb = random_vector(nb), gs = random_vector(ns);
    make_admissible(fb, fs);
    make_admissible(gb, gs);

    const EllipticSolution sf = op.solve(fb, fs);
    const EllipticSolution sg = op.solve(gb, gs);

    const double by_pairing = op.dual_norm(fb, fs);
    const double by_gradient = std::sqrt(std::max(
        0.0, lb_inner(sf.s_bulk, sf.s_surf, sf.s_bulk, sf.s_surf, s.ops,
                      s.params)));
    worst_norm_mismatch =
        std::max(worst_norm_mismatch, std::abs(by_pairing - by_gradient) /
                                          std::max(1e-30, by_pairing));

    const double fg = pairing(fb, fs, sg);
    const double gf = pairing(gb, gs, sf);
    worst_asymmetry = std::max(
        worst_asymmetry, std::abs(fg - gf) / std::max(1.0, std::abs(fg)));
  }
  rows.push_back({"dual_norm_two_formulas_rel", worst_norm_mismatch, 1e-9,
                  worst_norm_mismatch <= 1e-9});
  rows.push_back({"solution_operator_self_adjoint_rel", worst_asymmetry, 1e-10,
                  worst_asymmetry <= 1e-10});
}

/// Twenty configured time steps: bitwise determinism, mass conservation,
/// energy decay without transport, the discrete energy inequality with the
/// configured transport, and trace exactness under the hard coupling.
void stepper_checks(const Session& s, const SimulationInputs& in,
                    std::vector<VerifyRow>& rows) {
  const double horizon = 20.0 * in.step.dt;
  constexpr int kNoSnapshots = 1 << 28;  // keep only the mandatory endpoints

  std::vector<DiagnosticsRecord> records;
  const DiagnosticsSink collect = [&records](const DiagnosticsRecord& rec) {
    records.push_back(rec);
  };
  const Trajectory first =
      simulate(in.phi0, in.psi0, in.velocity, horizon, s.ops, s.mesh, s.params,
               in.potentials, in.mobility_bulk, in.mobility_surf, in.step,
               kNoSnapshots, collect);
  const Trajectory second =
      simulate(in.phi0, in.psi0, in.velocity, horizon, s.ops, s.mesh, s.params,
               in.potentials, in.mobility_bulk, in.mobility_surf, in.step,
               kNoSnapshots);

  const State& a = first.snapshots.back();
  const State& b = second.snapshots.back();
  double replay_diff = 0.0;
  replay_diff = std::max(replay_diff, (a.phi - b.phi).cwiseAbs().maxCoeff());
  replay_diff = std::max(replay_diff, (a.psi - b.psi).cwiseAbs().maxCoeff());
  replay_diff = std::max(replay_diff, (a.mu - b.mu).cwiseAbs().maxCoeff());
  replay_diff =
      std::max(replay_diff, (a.theta - b.theta).cwiseAbs().maxCoeff());
  rows.push_back(
      {"replay_max_difference", replay_diff, 0.0, replay_diff == 0.0});

  const MassTotals m0 = mass(first.snapshots.front(), s.ops, s.params);
  double drift = 0.0;
  for (const DiagnosticsRecord& r : records)
    if (s.params.L.is_infinite())
      drift = std::max({drift, std::abs(r.mass_bulk - m0.bulk),
                        std::abs(r.mass_surf - m0.surf)});
    else
      drift = std::max(drift, std::abs(r.mass_combined - m0.combined));
  rows.push_back({s.params.L.is_infinite() ? "mass_drift_separate"
                                           : "mass_drift_combined",
                  drift, 1e-9, drift <= 1e-9});

  double ineq_violation = 0.0;
  for (const DiagnosticsRecord& r : records)
    ineq_violation = std::max(ineq_violation, r.energy_ineq_residual);
  ineq_violation = std::max(ineq_violation, 0.0);
  rows.push_back({"energy_inequality_violation", ineq_violation, 1e-10,
                  ineq_violation <= 1e-10});

  // Energy decay is only claimed without transport, so this check always
  // runs with the zero field regardless of the configured velocity.
  std::vector<DiagnosticsRecord> still_records;
  const DiagnosticsSink collect_still =
      [&still_records](const DiagnosticsRecord& rec) {
        still_records.push_back(rec);
      };
  const VelocityTable still =
      VelocityTable::steady(builtin_velocity("zero", 0.0, s.mesh));
  const Trajectory resting =
      simulate(in.phi0, in.psi0, still, horizon, s.ops, s.mesh, s.params,
               in.potentials, in.mobility_bulk, in.mobility_surf, in.step,
               kNoSnapshots, collect_still);
  double energy_rise = 0.0;
  double previous_energy =
      energy(resting.snapshots.front(), s.ops, s.params, in.potentials);
  for (const DiagnosticsRecord& r : still_records) {
    energy_rise = std::max(energy_rise, r.energy - previous_energy);
    previous_energy = r.energy;
  }
  energy_rise = std::max(energy_rise, 0.0);
  rows.push_back({"energy_increase_without_transport", energy_rise, 1e-11,
                  energy_rise <= 1e-11});

  if (s.params.K.is_zero()) {
    double trace_gap = 0.0;
    for (int j = 0; j < s.mesh.n_surface(); ++j)
      trace_gap = std::max(trace_gap, std::abs(a.phi[s.mesh.trace_map[j]] -
                                               s.params.alpha * a.psi[j]));
    rows.push_back(
        {"hard_trace_constraint_gap", trace_gap, 1e-12, trace_gap <= 1e-12});
  }
}

int cmd_verify(const std::string& config_path, const std::string& suite) {
  const Session s = open_session(config_path);

  std::vector<VerifyRow> rows;
  if (suite == "elliptic" || suite == "all") elliptic_checks(s, rows);
  if (suite == "stepper" || suite == "all") {
    const SimulationInputs in = make_inputs(s.config, s.mesh, s.ops, s.params);
    stepper_checks(s, in, rows);
  }

  std::printf("%-38s %14s %12s  %s\n", "check", "measured", "threshold",
              "result");
  bool all_pass = true;
  for (const VerifyRow& row : rows) {
    std::printf("%-38s %14.6e %12.1e  %s\n", row.check.c_str(), row.measured,
                row.threshold, row.pass ? "pass" : "FAIL");
    all_pass = all_pass && row.pass;
  }

  std::ofstream csv = open_output(s, "verify_" + s.hash + ".csv");
  csv << "check,measured,threshold,pass\n";
  char line[160];
  for (const VerifyRow& row : rows) {
    std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%d\n", row.check.c_str(),
                  row.measured, row.threshold, row.pass ? 1 : 0);
    csv << line;
  }

  std::printf("%s (%zu checks, suite %s)\n",
              all_pass ? "all checks passed" : "SOME CHECKS FAILED",
              rows.size(), suite.c_str());
  return all_pass ? kExitOk : kExitVerify;
}

// ===========================================================================
// mesh-info: geometry report and optional operator dumps
// ===========================================================================

int cmd_mesh_info(const std::string& config_path, bool dump_matrices) {
  const Session s = open_session(config_path);

  std::printf("config hash       %s\n", s.hash.c_str());
  std::printf("shape             %s\n", s.config.mesh_shape.c_str());
  std::printf("resolution        %d\n", s.config.mesh_resolution);
  std::printf("bulk vertices     %d\n", s.mesh.n_bulk());
  std::printf("surface vertices  %d\n", s.mesh.n_surface());
  std::printf("triangles         %zu\n", s.mesh.triangles.size());
  std::printf("boundary edges    %zu\n", s.mesh.boundary_edges.size());
  std::printf("area              %.12g\n", s.area);
  std::printf("perimeter         %.12g\n", s.perimeter);
  std::printf("mesh size h       %.12g\n", mesh_size(s.mesh));
  std::printf("quadrature        %s\n", s.ops.quadrature_rule.c_str());

  if (dump_matrices) {
    const std::pair<const char*, const SpMat*> matrices[] = {
        {"M_bulk", &s.ops.M_bulk},
        {"A_bulk", &s.ops.A_bulk},
        {"M_surf", &s.ops.M_surf},
        {"A_surf", &s.ops.A_surf},
        {"T", &s.ops.T},
    };
    for (const auto& [label, matrix] : matrices) {
      const std::string file_name =
          "matrices_" + s.hash + "_" + label + ".txt";
      std::ofstream f = open_output(s, file_name);
      write_matrix_coordinate(f, *matrix);
      std::printf("wrote             %s\n",
                  out_path(s, file_name).string().c_str());
    }
  }
  return kExitOk;
}

}  // namespace

// ===========================================================================
// Dispatch
// ===========================================================================

int main(int argc, char** argv) {
  CLI::App app{
      "Finite-element laboratory for a coupled bulk-surface phase-field "
      "system with transport.\n"
      "Thread count comes from BSPHASE_THREADS (default 1; results are "
      "bitwise identical for every value)."};
  app.require_subcommand(1);

  std::string config_path;

  CLI::App* run = app.add_subcommand(
      "run", "Simulate, streaming diagnostics and snapshot files");
  run->add_option("-c,--config", config_path, "configuration file")
      ->required();

  std::string direction;
  std::vector<double> sweep_values;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Fit the coupling-mismatch decay rate along a parameter limit");
  sweep->add_option("-c,--config", config_path, "configuration file")
      ->required();
  sweep
      ->add_option("--direction", direction,
                   "K_to_0 | K_to_inf | L_to_0 | L_to_inf")
      ->required();
  sweep
      ->add_option("--values", sweep_values,
                   "comma-separated parameter values (>= 3, spanning >= 2 "
                   "decades)")
      ->required()
      ->delimiter(',');

  std::vector<double> deltas;
  std::string mode = "initial_data";
  long long cdep_seed = -1;
  CLI::App* cdep = app.add_subcommand(
      "cdep", "Measure continuous dependence on perturbed data");
  cdep->add_option("-c,--config", config_path, "configuration file")
      ->required();
  cdep->add_option("--deltas", deltas,
                   "comma-separated perturbation sizes (>= 0)")
      ->required()
      ->delimiter(',');
  cdep->add_option("--mode", mode, "initial_data | velocity")
      ->check(CLI::IsMember({"initial_data", "velocity"}));
  cdep->add_option("--seed", cdep_seed,
                   "perturbation seed (default: the config seed)");

  std::string suite = "all";
  CLI::App* verify = app.add_subcommand(
      "verify", "Run the invariant suite and print a pass table");
  verify->add_option("-c,--config", config_path, "configuration file")
      ->required();
  verify->add_option("--suite", suite, "elliptic | stepper | all")
      ->check(CLI::IsMember({"elliptic", "stepper", "all"}));

  bool dump_matrices = false;
  CLI::App* mesh_info = app.add_subcommand(
      "mesh-info", "Report mesh geometry and assembled-operator facts");
  mesh_info->add_option("-c,--config", config_path, "configuration file")
      ->required();
  mesh_info->add_flag("--dump-matrices", dump_matrices,
                      "write the assembled operators in coordinate format");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(config_path);
    if (sweep->parsed()) return cmd_sweep(config_path, direction, sweep_values);
    if (cdep->parsed()) return cmd_cdep(config_path, deltas, mode, cdep_seed);
    if (verify->parsed()) return cmd_verify(config_path, suite);
    if (mesh_info->parsed()) return cmd_mesh_info(config_path, dump_matrices);
  } catch (const bsphase::solver_error& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return kExitSolver;
  } catch (const bsphase::config_error& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const bsphase::model_error& e) {
    std::fprintf(stderr, "model error: %s\n", e.what());
    return kExitConfig;
  } catch (const bsphase::assembly_error& e) {
    std::fprintf(stderr, "assembly error: %s\n", e.what());
    return kExitConfig;
  } catch (const bsphase::domain_error& e) {
    std::fprintf(stderr, "invalid request: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return kExitUnexpected;
  }
  return kExitConfig;
}
