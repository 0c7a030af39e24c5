/// \file experiments.hpp
/// \brief Verification experiments on top of the stepper: coupling-parameter
///        sweeps with log-log rate fitting against the expected square-root
///        laws, the continuous-dependence (uniqueness) study, and reference
///        initial-data generators.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bsphase/stepper.hpp"

namespace bsphase {

/// Which coupling parameter is driven toward which limit. In each direction
/// the non-swept parameter and everything else in the configuration stay
/// fixed, so the measured quantity isolates the swept dependence.
enum class SweepDirection { K_to_0, K_to_inf, L_to_0, L_to_inf };

std::string format_direction(SweepDirection direction);

/// Everything one simulation needs besides the coupling parameters. Sweeps
/// and dependence studies run many simulations that differ in exactly one
/// knob; this bundle pins all the others.
struct SimulationInputs {
  Vector phi0;
  Vector psi0;
  VelocityTable velocity;
  double T_final = 0.1;
  PotentialSpec potentials;
  MobilitySpec mobility_bulk;
  MobilitySpec mobility_surf;
  StepConfig step;
  int snapshot_stride = 1;  ///< stride of the per-run trajectory handles
};

struct SweepRun {
  double parameter = 0.0;
  double quantity = 0.0;
  Trajectory trajectory;
};

struct SweepResult {
  SweepDirection direction = SweepDirection::K_to_0;
  std::vector<double> parameter_values;  ///< strictly monotone toward the limit
  std::vector<double> quantity_values;   ///< nonnegative, one per parameter
  double fitted_slope = 0.0;             ///< OLS slope of log(quantity) vs log(parameter)
  double fit_residual = 0.0;             ///< RMS log-misfit of that fit
  double expected_slope = 0.0;           ///< +1/2 toward 0, -1/2 toward infinity
  /// Whether the quantity decays monotonically along the sweep direction;
  /// reported for context, never a hard failure.
  bool quantity_monotone_toward_limit = false;
  std::vector<SweepRun> runs;
};

/// Run one simulation per parameter value with everything else fixed and fit
/// the decay rate of the coupling-mismatch norm:
///   K_to_0   -> max over steps of ||alpha psi - phi||_{L2(Gamma)},
///   K_to_inf -> (1/K) times the same maximum,
///   L_to_0   -> space-time L2 norm of (beta theta - mu) on the surface
///               (rectangle rule in time over the accepted steps),
///   L_to_inf -> (1/L) times the same norm.
/// The expected slopes are +1/2, -1/2, +1/2, -1/2. Values are reordered
/// toward the limit, so permuting the input permutes nothing observable:
/// members are pure functions of their parameter and run independently (in
/// parallel when OpenMP is available, deterministically either way).
///
/// Requirements: at least three strictly positive, pairwise distinct values
/// spanning at least two decades; for K_to_0 the initial data must already
/// satisfy the trace compatibility phi = alpha psi on the boundary (the hard
/// K = 0 constraint the limit enforces). Violations throw domain_error. A
/// failing member run aborts the sweep with solver_error naming its
/// parameter value.
SweepResult limit_sweep(SweepDirection direction, std::vector<double> values,
                        const SimulationInputs& inputs,
                        const CouplingParams& base_params, const FeOperators& ops,
                        const BulkSurfaceMesh& mesh);

struct RateFit {
  double slope = 0.0;
  double residual = 0.0;  ///< RMS misfit in log space
};

/// Ordinary least squares of log(y) against log(x). Requires at least three
/// points, matching lengths, and strictly positive finite x with at least two
/// distinct abscissae (domain_error otherwise). Nonpositive y values are
/// clamped to 1e-300 with a warning on stderr.
RateFit fit_rate(const std::vector<double>& x, const std::vector<double>& y);

enum class PerturbationMode { initial_data, velocity };

struct CdepRow {
  double delta = 0.0;
  double max_dual_norm = 0.0;  ///< max over time of the difference dual norm
};

struct CdepResult {
  std::vector<CdepRow> rows;  ///< sorted by delta
  double fitted_slope = 0.0;  ///< log-log slope over rows with positive norm
  double fit_residual = 0.0;  ///< NaN alongside the slope when < 3 usable rows
};

/// Continuous-dependence study: for each perturbation amplitude delta, run
/// the base simulation and a perturbed one and report the maximum over time
/// (initial state included) of the dual norm ||(phi_1-phi_2, psi_1-psi_2)||
/// induced by the (L, beta) gradient form. First-order dependence shows as a
/// log-log slope near one; delta = 0 reproduces the base run bitwise and
/// reports exactly zero.
///
/// Perturbation modes:
///  - initial_data: a seeded low-frequency nodal perturbation, made
///    compatible with the conserved quantities (weighted combined mean zero,
///    or separate zero means when L is infinite) and with the K = 0 trace
///    constraint, is added to (phi0, psi0) scaled by delta;
///  - velocity: delta times a fixed divergence-free pattern (rigid rotation
///    on disks, a tangential surface slide on squares) is added to every
///    sample of the velocity table.
///
/// The estimate this study verifies holds for constant mobilities only, so
/// non-constant mobility specs are rejected with config_error.
CdepResult continuous_dependence(std::vector<double> deltas, PerturbationMode mode,
                                 unsigned seed, const SimulationInputs& inputs,
                                 const CouplingParams& params,
                                 const FeOperators& ops,
                                 const BulkSurfaceMesh& mesh);

/// Reference initial data, selected by name:
///  - "tanh_disk": phi0(x) = tanh((r0 - |x|)/width) with width > 0; psi0 is
///    the boundary trace, or trace/alpha under a hard energy coupling (K = 0)
///    so the pair satisfies the trace constraint exactly. K = 0 with
///    alpha = 0 is rejected (the constraint would force a zero trace the
///    profile cannot deliver).
///  - "random_smooth": a low-frequency trigonometric sum with coefficients
///    drawn reproducibly from the seed; the same seed and mode count define
///    the same function on every mesh, with values bounded inside (-1, 1).
///    Under K = 0 the trace pairing follows the same rule, except that
///    alpha = 0 forces the bulk trace to zero (any psi0 is then compatible).
struct InitialDataSpec {
  std::string name = "tanh_disk";
  double r0 = 0.5;    ///< tanh_disk: interface radius
  double width = 0.1; ///< tanh_disk: interface width, > 0
  unsigned seed = 0;  ///< random_smooth: RNG seed
  int modes = 3;      ///< random_smooth: number of frequencies, >= 1
};

std::pair<Vector, Vector> reference_initial_data(const InitialDataSpec& spec,
                                                 const BulkSurfaceMesh& mesh,
                                                 const CouplingParams& params);

/// CSV report: "parameter,quantity,slope_so_far" rows (slope over the first
/// k >= 3 members, NaN before that) followed by a "#" summary line with the
/// fitted slope, residual, expected slope, and monotonicity flag.
std::string sweep_csv(const SweepResult& result);

/// CSV report: "delta,max_dual_norm" rows followed by a "#" summary line
/// with the fitted slope and residual.
std::string cdep_csv(const CdepResult& result);

}  // namespace bsphase
