/// \file diagnostics.hpp
/// \brief Per-step conserved quantities, dissipation and convective-work
///        terms, residuals of the discrete energy inequality, and the
///        discrete chain-rule check.

#pragma once

#include <string>
#include <vector>

#include "bsphase/model.hpp"

namespace bsphase {

/// Everything measured across one time step (prev -> next). The time t, the
/// energy, and the masses describe the "next" state; the dissipation,
/// exchange, and convective-work integrals use next's potentials against the
/// mobilities and transported fields frozen at prev, exactly as the stepper
/// discretizes them. chain_rule_residual needs a three-state window, so it is
/// NaN until a caller with access to the neighboring states fills it in.
struct DiagnosticsRecord {
  double t = 0.0;
  double energy = 0.0;
  double mass_combined = 0.0;
  double mass_bulk = 0.0;
  double mass_surf = 0.0;
  double dissipation_bulk = 0.0;    ///< ∫ m_bulk(φ_prev) |∇μ_next|²
  double dissipation_surf = 0.0;    ///< ∫ m_surf(ψ_prev) |∇θ_next|²
  double exchange = 0.0;            ///< h_of(L) ∫ (βθ_next − μ_next)² lumped
  double convective_work_bulk = 0.0;  ///< ∫ φ_prev v·∇μ_next
  double convective_work_surf = 0.0;  ///< ∫ ψ_prev w·∇θ_next
  double energy_ineq_residual = 0.0;  ///< ΔE − dt·(work − dissipation − exchange)
  double chain_rule_residual = 0.0;   ///< filled from a 3-state window; NaN here
};

/// Measure one step. dt must be positive. The energy-inequality residual is
///   E(next) − E(prev) − dt·[work_bulk + work_surf − dissipation − exchange];
/// for stepper-produced pairs with the convex-splitting scheme it is bounded
/// above by roundoff (the splitting slack makes it negative).
DiagnosticsRecord record(const State& prev, const State& next,
                         const VelocitySample& vel, const FeOperators& ops,
                         const BulkSurfaceMesh& mesh, const CouplingParams& params,
                         const PotentialSpec& potentials,
                         const MobilitySpec& mobility_bulk,
                         const MobilitySpec& mobility_surf, double dt);

/// Discrete chain-rule residual over a uniformly spaced window of at least
/// three states: at each interior index k the central difference of the
/// (K, alpha) gradient form N(t) = ||(φ,ψ)||²_{K,α} is compared with twice
/// the same form pairing the central time derivative against the state at k.
/// Returns the maximum absolute mismatch over interior indices; it vanishes
/// on constant and nodally-linear-in-time trajectories and decays like dt²
/// on smooth ones. Throws domain_error for windows shorter than three states
/// or nonuniform spacing.
double chain_rule_check(const std::vector<State>& window, const FeOperators& ops,
                        const BulkSurfaceMesh& mesh, const CouplingParams& params);

struct MassDrift {
  double combined = 0.0;  ///< max |combined(t) − combined(0)|
  double bulk = 0.0;      ///< max |bulk(t) − bulk(0)|
  double surf = 0.0;      ///< max |surf(t) − surf(0)|
};

/// Maximum deviation of the conserved quantities from their initial values.
MassDrift mass_drift(const std::vector<State>& trajectory, const FeOperators& ops,
                     const CouplingParams& params);

/// Mandatory CSV header, matching the DiagnosticsRecord field order exactly.
std::string diagnostics_csv_header();

/// One CSV row (no trailing newline), fields printed with %.17g.
std::string diagnostics_csv_row(const DiagnosticsRecord& rec);

}  // namespace bsphase
