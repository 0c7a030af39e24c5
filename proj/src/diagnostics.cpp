/// \file diagnostics.cpp
/// \brief Energy/mass bookkeeping, the energy-inequality residual, and the
///        discrete chain-rule check.

#include "bsphase/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "bsphase/elliptic.hpp"
#include "bsphase/errors.hpp"

namespace bsphase {

namespace {

Vector nodal_mobility(const MobilitySpec& mob, const Vector& field) {
  Vector w(field.size());
  for (Eigen::Index i = 0; i < field.size(); ++i) w[i] = mob.m(field[i]);
  return w;
}

}  // namespace

DiagnosticsRecord record(const State& prev, const State& next,
                         const VelocitySample& vel, const FeOperators& ops,
                         const BulkSurfaceMesh& mesh, const CouplingParams& params,
                         const PotentialSpec& potentials,
                         const MobilitySpec& mobility_bulk,
                         const MobilitySpec& mobility_surf, double dt) {
  check_state_sizes(prev, ops);
  check_state_sizes(next, ops);
  if (!(dt > 0.0)) throw domain_error("diagnostics step size must be positive");

  DiagnosticsRecord rec;
  rec.t = next.t;
  rec.energy = energy(next, ops, params, potentials);
  const MassTotals totals = mass(next, ops, params);
  rec.mass_combined = totals.combined;
  rec.mass_bulk = totals.bulk;
  rec.mass_surf = totals.surf;

  const auto [a_bulk_m, a_surf_m] =
      weighted_stiffness(ops, mesh, nodal_mobility(mobility_bulk, prev.phi),
                         nodal_mobility(mobility_surf, prev.psi));
  rec.dissipation_bulk = std::max(0.0, next.mu.dot(a_bulk_m * next.mu));
  rec.dissipation_surf = std::max(0.0, next.theta.dot(a_surf_m * next.theta));

  const double h_l = h_of(params.L);
  if (h_l != 0.0) {
    const Vector mismatch = params.beta * next.theta - ops.T * next.mu;
    rec.exchange =
        std::max(0.0, h_l * mismatch.dot(ops.M_surf_lumped.asDiagonal() * mismatch));
  }

  const auto [b_bulk, b_surf] = convection_load(ops, mesh, prev.phi, prev.psi, vel);
  rec.convective_work_bulk = b_bulk.dot(next.mu);
  rec.convective_work_surf = b_surf.dot(next.theta);

  const double prev_energy = energy(prev, ops, params, potentials);
  rec.energy_ineq_residual =
      rec.energy - prev_energy -
      dt * (rec.convective_work_bulk + rec.convective_work_surf -
            rec.dissipation_bulk - rec.dissipation_surf - rec.exchange);
  rec.chain_rule_residual = std::numeric_limits<double>::quiet_NaN();
  return rec;
}

double chain_rule_check(const std::vector<State>& window, const FeOperators& ops,
                        const BulkSurfaceMesh& mesh, const CouplingParams& params) {
  (void)mesh;
  if (window.size() < 3)
    throw domain_error("chain-rule check needs a window of at least three states");
  const double dt = window[1].t - window[0].t;
  if (!(dt > 0.0)) throw domain_error("chain-rule window times must increase");
  for (std::size_t k = 0; k + 1 < window.size(); ++k) {
    check_state_sizes(window[k], ops);
    const double step = window[k + 1].t - window[k].t;
    if (std::abs(step - dt) > 1e-12 * std::max(1.0, std::abs(dt)))
      throw domain_error("chain-rule check requires uniform time spacing");
  }
  check_state_sizes(window.back(), ops);

  const auto norm_sq = [&](const State& s) {
    return coupling_form(s.phi, s.psi, s.phi, s.psi, ops, params.K, params.alpha);
  };

  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < window.size(); ++k) {
    const State& lo = window[k - 1];
    const State& mid = window[k];
    const State& hi = window[k + 1];
    const double central = (norm_sq(hi) - norm_sq(lo)) / (2.0 * dt);
    const Vector dphi = (hi.phi - lo.phi) / (2.0 * dt);
    const Vector dpsi = (hi.psi - lo.psi) / (2.0 * dt);
    const double paired =
        2.0 * coupling_form(dphi, dpsi, mid.phi, mid.psi, ops, params.K, params.alpha);
    worst = std::max(worst, std::abs(central - paired));
  }
  return worst;
}

MassDrift mass_drift(const std::vector<State>& trajectory, const FeOperators& ops,
                     const CouplingParams& params) {
  MassDrift drift;
  if (trajectory.empty()) return drift;
  const MassTotals first = mass(trajectory.front(), ops, params);
  for (const State& s : trajectory) {
    const MassTotals m = mass(s, ops, params);
    drift.combined = std::max(drift.combined, std::abs(m.combined - first.combined));
    drift.bulk = std::max(drift.bulk, std::abs(m.bulk - first.bulk));
    drift.surf = std::max(drift.surf, std::abs(m.surf - first.surf));
  }
  return drift;
}

std::string diagnostics_csv_header() {
  return "t,energy,mass_combined,mass_bulk,mass_surf,dissipation_bulk,"
         "dissipation_surf,exchange,convective_work_bulk,convective_work_surf,"
         "energy_ineq_residual,chain_rule_residual";
}

std::string diagnostics_csv_row(const DiagnosticsRecord& rec) {
  const double fields[] = {rec.t,
                           rec.energy,
                           rec.mass_combined,
                           rec.mass_bulk,
                           rec.mass_surf,
                           rec.dissipation_bulk,
                           rec.dissipation_surf,
                           rec.exchange,
                           rec.convective_work_bulk,
                           rec.convective_work_surf,
                           rec.energy_ineq_residual,
                           rec.chain_rule_residual};
  std::string row;
  char buf[64];
  for (std::size_t i = 0; i < sizeof(fields) / sizeof(fields[0]); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", fields[i]);
    if (i > 0) row += ',';
    row += buf;
  }
  return row;
}

}  // namespace bsphase
