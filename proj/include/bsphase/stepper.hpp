/// \file stepper.hpp
/// \brief Semi-implicit time integration of the coupled bulk-surface system:
///        implicit Euler with convex-concave splitting of the potentials,
///        mobilities and convection frozen at the old time, and Newton
///        iteration on the nodal convex nonlinearity.

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "bsphase/diagnostics.hpp"
#include "bsphase/model.hpp"

namespace bsphase {

enum class Scheme {
  convex_split_newton,  ///< implicit convex part, Newton solve, energy stable
  stabilized_linear     ///< explicit potential + stabilization, one linear solve
};

struct StepConfig {
  double dt = 1e-3;           ///< time-step size, > 0
  double newton_tol = 1e-12;  ///< residual sup-norm target, >= 1e-14
  int newton_max_iters = 30;
  Scheme scheme = Scheme::convex_split_newton;
  double stab_F = 2.0;  ///< bulk stabilization constant (stabilized_linear)
  double stab_G = 2.0;  ///< surface stabilization constant (stabilized_linear)
};

/// Throws config_error on nonpositive dt, newton_tol below 1e-14, fewer than
/// one Newton iteration, or negative stabilization constants.
void validate_step_config(const StepConfig& cfg);

/// Factorization-reusing stepper bound to one (ops, mesh, params, potentials,
/// mobilities, cfg) tuple. Holds references to ops and mesh: both must outlive
/// the stepper. The sparsity pattern of the Newton system is analyzed once and
/// reused for every factorization.
class TimeStepper {
 public:
  TimeStepper(const FeOperators& ops, const BulkSurfaceMesh& mesh,
              const CouplingParams& params, const PotentialSpec& potentials,
              const MobilitySpec& mobility_bulk, const MobilitySpec& mobility_surf,
              const StepConfig& cfg);
  ~TimeStepper();
  TimeStepper(const TimeStepper&) = delete;
  TimeStepper& operator=(const TimeStepper&) = delete;

  /// Advance one step of size cfg.dt. The returned state solves the coupled
  /// discrete system: the flux equation tested in the (L, beta)-constrained
  /// space with mobilities and convective transport frozen at the input
  /// state, and the potential equation tested in the (K, alpha)-constrained
  /// space with the convex potential parts implicit and the concave parts
  /// explicit. Hard couplings (K or L zero) hold exactly by construction;
  /// absent couplings (infinite) drop the exchange blocks.
  ///
  /// Throws domain_error when the input is not finite or violates the K = 0
  /// trace constraint, and solver_error when Newton fails to converge (the
  /// message carries the residual history) or a factorization fails.
  State step(const State& state, const VelocitySample& vel);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot convenience wrapper around TimeStepper.
State step(const State& state, const VelocitySample& vel, const FeOperators& ops,
           const BulkSurfaceMesh& mesh, const CouplingParams& params,
           const PotentialSpec& potentials, const MobilitySpec& mobility_bulk,
           const MobilitySpec& mobility_surf, const StepConfig& cfg);

/// Prepare raw initial data: when K is zero the bulk trace is overwritten
/// with alpha * psi; otherwise the fields pass through unchanged. When
/// target_combined_mass is given, both fields are then shifted by a constant
/// pair that moves beta*∫phi + ∫psi to the target: (beta*c, c) with
/// c = (beta|Omega|<phi> + |Gamma|<psi> - target) / (beta^2|Omega| + |Gamma|)
/// in general, and the trace-compatible variant (alpha*c, c) with denominator
/// alpha*beta*|Omega| + |Gamma| when K is zero, so the hard constraint
/// survives the shift.
std::pair<Vector, Vector> project_initial(
    const Vector& phi0, const Vector& psi0, const CouplingParams& params,
    const FeOperators& ops, const BulkSurfaceMesh& mesh,
    std::optional<double> target_combined_mass = std::nullopt);

/// Receives each step's diagnostics once its chain-rule residual is known
/// (one step of lag; the final record keeps NaN there).
using DiagnosticsSink = std::function<void(const DiagnosticsRecord&)>;

/// Receives the state after every accepted step (not the initial state), in
/// step order. Lets observers accumulate per-step norms without the memory
/// cost of stride-1 snapshots.
using StateSink = std::function<void(const State&)>;

struct Trajectory {
  std::vector<State> snapshots;     ///< stride-sampled, initial and final always
  std::vector<int> snapshot_steps;  ///< step index of each snapshot
  std::vector<DiagnosticsRecord> records;  ///< one per step, chain rule filled
};

/// Run ceil(T_final / dt) steps from (phi0, psi0) at t = 0 with zero initial
/// potentials. The velocity table is sampled at the start of each step.
/// Records stream to the sink (when given) and are stored in the returned
/// trajectory; snapshots are kept every snapshot_stride steps. T_final = 0
/// yields a single-snapshot trajectory with no records. Step failures are
/// rethrown with the failing step index.
Trajectory simulate(const Vector& phi0, const Vector& psi0, const VelocityTable& vel,
                    double T_final, const FeOperators& ops,
                    const BulkSurfaceMesh& mesh, const CouplingParams& params,
                    const PotentialSpec& potentials,
                    const MobilitySpec& mobility_bulk,
                    const MobilitySpec& mobility_surf, const StepConfig& cfg,
                    int snapshot_stride = 1, const DiagnosticsSink& sink = {},
                    const StateSink& on_state = {});

}  // namespace bsphase
