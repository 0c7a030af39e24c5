/// \file experiments.cpp
/// \brief Coupling-parameter sweeps with rate fitting, the continuous-
///        dependence study, and reference initial-data generators. Sweep and
///        study members are pure functions of their parameter and run on an
///        OpenMP work queue with results ordered canonically, so output never
///        depends on scheduling.

#include "bsphase/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>

#include "bsphase/assembly.hpp"
#include "bsphase/elliptic.hpp"
#include "bsphase/errors.hpp"

namespace bsphase {

std::string format_direction(SweepDirection direction) {
  switch (direction) {
    case SweepDirection::K_to_0: return "K_to_0";
    case SweepDirection::K_to_inf: return "K_to_inf";
    case SweepDirection::L_to_0: return "L_to_0";
    case SweepDirection::L_to_inf: return "L_to_inf";
  }
  return "unknown";
}

namespace {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool toward_zero(SweepDirection d) {
  return d == SweepDirection::K_to_0 || d == SweepDirection::L_to_0;
}

bool sweeps_k(SweepDirection d) {
  return d == SweepDirection::K_to_0 || d == SweepDirection::K_to_inf;
}

/// ||m||_{L2(Gamma)} through the consistent surface mass matrix.
double surf_l2(const FeOperators& ops, const Vector& m) {
  return std::sqrt(std::max(0.0, m.dot(ops.M_surf * m)));
}

double trace_mismatch_norm(const State& st, const FeOperators& ops,
                           const BulkSurfaceMesh& mesh, double coef,
                           bool potentials) {
  const int ns = ops.n_surface();
  Vector m(ns);
  for (int j = 0; j < ns; ++j)
    m[j] = potentials ? coef * st.theta[j] - st.mu[mesh.trace_map[j]]
                      : coef * st.psi[j] - st.phi[mesh.trace_map[j]];
  return surf_l2(ops, m);
}

long step_count(double T_final, double dt) {
  return T_final > 0.0
             ? std::max<long>(1, static_cast<long>(std::ceil(T_final / dt - 1e-9)))
             : 0;
}

SweepRun run_sweep_member(SweepDirection direction, double value,
                          const SimulationInputs& inputs,
                          const CouplingParams& base_params, const FeOperators& ops,
                          const BulkSurfaceMesh& mesh) {
  CouplingParams params = base_params;
  if (sweeps_k(direction))
    params.K = TriState::finite(value);
  else
    params.L = TriState::finite(value);

  double max_mismatch = 0.0;
  double sumsq = 0.0;
  const StateSink observer = [&](const State& st) {
    if (sweeps_k(direction)) {
      max_mismatch = std::max(
          max_mismatch, trace_mismatch_norm(st, ops, mesh, params.alpha, false));
    } else {
      const double n = trace_mismatch_norm(st, ops, mesh, params.beta, true);
      sumsq += inputs.step.dt * n * n;
    }
  };

  SweepRun run;
  run.parameter = value;
  run.trajectory = simulate(inputs.phi0, inputs.psi0, inputs.velocity,
                            inputs.T_final, ops, mesh, params, inputs.potentials,
                            inputs.mobility_bulk, inputs.mobility_surf, inputs.step,
                            inputs.snapshot_stride, {}, observer);
  switch (direction) {
    case SweepDirection::K_to_0: run.quantity = max_mismatch; break;
    case SweepDirection::K_to_inf: run.quantity = max_mismatch / value; break;
    case SweepDirection::L_to_0: run.quantity = std::sqrt(sumsq); break;
    case SweepDirection::L_to_inf: run.quantity = std::sqrt(sumsq) / value; break;
  }
  return run;
}

}  // namespace

// ===========================================================================
// Rate fitting
// ===========================================================================

RateFit fit_rate(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw domain_error("rate fit needs matching abscissa and ordinate lengths");
  const int n = static_cast<int>(x.size());
  if (n < 3) throw domain_error("rate fit needs at least three points");

  std::vector<double> lx(n), ly(n);
  for (int i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !std::isfinite(x[i]))
      throw domain_error("rate fit abscissae must be positive and finite");
    double yi = y[i];
    if (!(yi > 0.0)) {
      std::fprintf(stderr,
                   "fit_rate: clamped nonpositive value %.3e to 1e-300 at "
                   "x = %.3e\n",
                   yi, x[i]);
      yi = 1e-300;
    }
    lx[i] = std::log(x[i]);
    ly[i] = std::log(yi);
  }

  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0))
    throw domain_error("rate fit needs at least two distinct abscissae");

  RateFit fit;
  fit.slope = sxy / sxx;
  const double intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = ly[i] - (intercept + fit.slope * lx[i]);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

// ===========================================================================
// Limit sweeps
// ===========================================================================

SweepResult limit_sweep(SweepDirection direction, std::vector<double> values,
                        const SimulationInputs& inputs,
                        const CouplingParams& base_params, const FeOperators& ops,
                        const BulkSurfaceMesh& mesh) {
  if (values.size() < 3)
    throw domain_error("a limit sweep needs at least three parameter values");
  for (const double v : values)
    if (!(v > 0.0) || !std::isfinite(v))
      throw domain_error("sweep parameter values must be positive and finite");
  if (toward_zero(direction))
    std::sort(values.begin(), values.end(), std::greater<>());
  else
    std::sort(values.begin(), values.end());
  for (std::size_t i = 0; i + 1 < values.size(); ++i)
    if (values[i] == values[i + 1])
      throw domain_error("sweep parameter values must be pairwise distinct");
  const auto [lo, hi] = std::minmax(values.front(), values.back());
  if (hi / lo < 100.0 * (1.0 - 1e-12))
    throw domain_error("sweep parameter values must span at least two decades");
  if (!(inputs.T_final > 0.0))
    throw domain_error("sweeps need a positive final time");

  if (direction == SweepDirection::K_to_0) {
    double worst = 0.0;
    for (int j = 0; j < ops.n_surface(); ++j)
      worst = std::max(worst, std::abs(inputs.phi0[mesh.trace_map[j]] -
                                       base_params.alpha * inputs.psi0[j]));
    const double scale = std::max(
        1.0, std::abs(base_params.alpha) * inputs.psi0.cwiseAbs().maxCoeff());
    if (worst > 1e-10 * scale)
      throw domain_error(
          "a K_to_0 sweep requires initial data satisfying the hard trace "
          "constraint phi = alpha*psi on the boundary (max mismatch = " +
          format_value(worst) + ")");
  }

  const int n = static_cast<int>(values.size());
  std::vector<SweepRun> runs(n);
  std::vector<std::string> failures(n);
  const int nt = resolve_thread_count(0);
#pragma omp parallel for num_threads(nt) schedule(dynamic) if (nt > 1)
  for (int i = 0; i < n; ++i) {
    try {
      runs[i] =
          run_sweep_member(direction, values[i], inputs, base_params, ops, mesh);
    } catch (const std::exception& err) {
      failures[i] = err.what();
    }
  }
  for (int i = 0; i < n; ++i)
    if (!failures[i].empty())
      throw solver_error("sweep member at parameter value " +
                         format_value(values[i]) + " failed: " + failures[i]);

  SweepResult result;
  result.direction = direction;
  result.parameter_values = values;
  result.quantity_values.resize(n);
  for (int i = 0; i < n; ++i) result.quantity_values[i] = runs[i].quantity;
  result.expected_slope = toward_zero(direction) ? 0.5 : -0.5;
  const RateFit fit = fit_rate(result.parameter_values, result.quantity_values);
  result.fitted_slope = fit.slope;
  result.fit_residual = fit.residual;
  result.quantity_monotone_toward_limit = true;
  for (int i = 0; i + 1 < n; ++i)
    if (result.quantity_values[i + 1] >
        result.quantity_values[i] * (1.0 + 1e-12))
      result.quantity_monotone_toward_limit = false;
  result.runs = std::move(runs);
  return result;
}

// ===========================================================================
// Continuous dependence
// ===========================================================================

namespace {

struct Perturbation {
  Vector eta_phi;
  Vector eta_psi;
};

/// Seeded low-frequency nodal perturbation, projected so that the pair is
/// compatible with every conserved quantity of the configured regime and
/// with the K = 0 trace constraint.
Perturbation make_perturbation(unsigned seed, const CouplingParams& params,
                               const FeOperators& ops,
                               const BulkSurfaceMesh& mesh) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const int modes = 3;
  std::vector<double> a(modes), b(modes), p(modes), q(modes);
  for (int m = 0; m < modes; ++m) {
    a[m] = unit(rng);
    b[m] = unit(rng);
    p[m] = unit(rng);
    q[m] = unit(rng);
  }
  const auto f = [&](double x, double y) {
    double v = 0.0;
    for (int m = 0; m < modes; ++m) {
      const double freq = (m + 1) * 3.14159265358979323846;
      v += (a[m] * std::cos(freq * x + p[m]) + b[m] * std::sin(freq * y + q[m])) /
           (m + 1.0);
    }
    return v;
  };

  Perturbation eta;
  eta.eta_phi.resize(ops.n_bulk());
  for (int i = 0; i < ops.n_bulk(); ++i)
    eta.eta_phi[i] = f(mesh.vertices[i].x, mesh.vertices[i].y);
  eta.eta_psi.resize(ops.n_surface());
  for (int j = 0; j < ops.n_surface(); ++j) {
    const Vec2 pt = mesh.vertices[mesh.trace_map[j]];
    eta.eta_psi[j] = 0.8 * f(pt.y, pt.x);
  }

  const auto [area, perimeter] = measures(mesh);
  if (params.L.is_infinite()) {
    // Bulk and surface masses are conserved separately: make each mean-free,
    // preserving the trace coupling by adjusting interior bulk nodes only.
    const double cs = (ops.M_surf * eta.eta_psi).sum() / perimeter;
    eta.eta_psi.array() -= cs;
    if (params.K.is_zero()) {
      for (int j = 0; j < ops.n_surface(); ++j)
        eta.eta_phi[mesh.trace_map[j]] = params.alpha * eta.eta_psi[j];
      double interior_weight = 0.0;
      for (int i = 0; i < ops.n_bulk(); ++i)
        if (mesh.bulk_to_surface[i] < 0) interior_weight += ops.M_bulk_lumped[i];
      const double cb = (ops.M_bulk * eta.eta_phi).sum() / interior_weight;
      for (int i = 0; i < ops.n_bulk(); ++i)
        if (mesh.bulk_to_surface[i] < 0) eta.eta_phi[i] -= cb;
    } else {
      eta.eta_phi.array() -= (ops.M_bulk * eta.eta_phi).sum() / area;
    }
  } else {
    // The beta-weighted combined mass is conserved: remove it along the
    // constant pair compatible with the trace constraint.
    if (params.K.is_zero())
      for (int j = 0; j < ops.n_surface(); ++j)
        eta.eta_phi[mesh.trace_map[j]] = params.alpha * eta.eta_psi[j];
    const double combined = params.beta * (ops.M_bulk * eta.eta_phi).sum() +
                            (ops.M_surf * eta.eta_psi).sum();
    if (params.K.is_zero()) {
      const double c =
          combined / (params.alpha * params.beta * area + perimeter);
      eta.eta_phi.array() -= params.alpha * c;
      eta.eta_psi.array() -= c;
    } else {
      const double c =
          combined / (params.beta * params.beta * area + perimeter);
      eta.eta_phi.array() -= params.beta * c;
      eta.eta_psi.array() -= c;
    }
  }
  return eta;
}

CdepRow run_cdep_member(double delta, PerturbationMode mode,
                        const Perturbation& eta, const VelocitySample& pattern,
                        const SimulationInputs& inputs,
                        const CouplingParams& params, const FeOperators& ops,
                        const BulkSurfaceMesh& mesh) {
  Vector phi_b = inputs.phi0;
  Vector psi_b = inputs.psi0;
  VelocityTable vel_b = inputs.velocity;
  if (delta != 0.0) {
    if (mode == PerturbationMode::initial_data) {
      phi_b += delta * eta.eta_phi;
      psi_b += delta * eta.eta_psi;
    } else {
      for (auto& sample : vel_b.samples) {
        for (std::size_t i = 0; i < sample.v_nodes.size(); ++i)
          sample.v_nodes[i] = sample.v_nodes[i] + delta * pattern.v_nodes[i];
        for (std::size_t j = 0; j < sample.w_nodes.size(); ++j)
          sample.w_nodes[j] = sample.w_nodes[j] + delta * pattern.w_nodes[j];
      }
    }
  }

  const SolutionOperator op(ops, mesh, params);
  TimeStepper stepper_a(ops, mesh, params, inputs.potentials, inputs.mobility_bulk,
                        inputs.mobility_surf, inputs.step);
  TimeStepper stepper_b(ops, mesh, params, inputs.potentials, inputs.mobility_bulk,
                        inputs.mobility_surf, inputs.step);

  State a;
  a.phi = inputs.phi0;
  a.psi = inputs.psi0;
  a.mu = Vector::Zero(ops.n_bulk());
  a.theta = Vector::Zero(ops.n_surface());
  a.t = 0.0;
  State b = a;
  b.phi = phi_b;
  b.psi = psi_b;

  CdepRow row;
  row.delta = delta;
  row.max_dual_norm = op.dual_norm(Vector(a.phi - b.phi), Vector(a.psi - b.psi));
  const long n_steps = step_count(inputs.T_final, inputs.step.dt);
  for (long k = 1; k <= n_steps; ++k) {
    a = stepper_a.step(a, inputs.velocity.at(a.t));
    b = stepper_b.step(b, vel_b.at(b.t));
    a.t = b.t = static_cast<double>(k) * inputs.step.dt;
    row.max_dual_norm =
        std::max(row.max_dual_norm,
                 op.dual_norm(Vector(a.phi - b.phi), Vector(a.psi - b.psi)));
  }
  return row;
}

}  // namespace

CdepResult continuous_dependence(std::vector<double> deltas, PerturbationMode mode,
                                 unsigned seed, const SimulationInputs& inputs,
                                 const CouplingParams& params,
                                 const FeOperators& ops,
                                 const BulkSurfaceMesh& mesh) {
  if (deltas.empty())
    throw domain_error("the dependence study needs at least one amplitude");
  for (const double d : deltas)
    if (!(d >= 0.0) || !std::isfinite(d))
      throw domain_error("perturbation amplitudes must be nonnegative and finite");
  std::sort(deltas.begin(), deltas.end());
  if (!(inputs.T_final > 0.0))
    throw domain_error("the dependence study needs a positive final time");
  if (!inputs.mobility_bulk.is_constant() || !inputs.mobility_surf.is_constant())
    throw config_error(
        "the continuous-dependence estimate requires constant mobility "
        "functions; configure constant mobilities for this study");

  const Perturbation eta =
      mode == PerturbationMode::initial_data
          ? make_perturbation(seed, params, ops, mesh)
          : Perturbation{};
  const VelocitySample pattern =
      mode == PerturbationMode::velocity
          ? builtin_velocity(mesh.shape == MeshShape::unit_disk ? "rotation"
                                                                : "surface_slide",
                             1.0, mesh)
          : VelocitySample{};

  const int n = static_cast<int>(deltas.size());
  std::vector<CdepRow> rows(n);
  std::vector<std::string> failures(n);
  const int nt = resolve_thread_count(0);
#pragma omp parallel for num_threads(nt) schedule(dynamic) if (nt > 1)
  for (int i = 0; i < n; ++i) {
    try {
      rows[i] =
          run_cdep_member(deltas[i], mode, eta, pattern, inputs, params, ops, mesh);
    } catch (const std::exception& err) {
      failures[i] = err.what();
    }
  }
  for (int i = 0; i < n; ++i)
    if (!failures[i].empty())
      throw solver_error("dependence-study member at amplitude " +
                         format_value(deltas[i]) + " failed: " + failures[i]);

  CdepResult result;
  result.rows = std::move(rows);
  std::vector<double> xs, ys;
  for (const auto& row : result.rows)
    if (row.delta > 0.0 && row.max_dual_norm > 0.0) {
      xs.push_back(row.delta);
      ys.push_back(row.max_dual_norm);
    }
  if (xs.size() >= 3) {
    const RateFit fit = fit_rate(xs, ys);
    result.fitted_slope = fit.slope;
    result.fit_residual = fit.residual;
  } else {
    result.fitted_slope = std::numeric_limits<double>::quiet_NaN();
    result.fit_residual = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

// ===========================================================================
// Reference initial data
// ===========================================================================

std::pair<Vector, Vector> reference_initial_data(const InitialDataSpec& spec,
                                                 const BulkSurfaceMesh& mesh,
                                                 const CouplingParams& params) {
  const int nb = mesh.n_bulk(), ns = mesh.n_surface();
  Vector phi(nb), psi(ns);

  if (spec.name == "tanh_disk") {
    if (!(spec.width > 0.0))
      throw config_error("tanh_disk needs a positive interface width");
    for (int i = 0; i < nb; ++i)
      phi[i] = std::tanh((spec.r0 - norm(mesh.vertices[i])) / spec.width);
    for (int j = 0; j < ns; ++j) psi[j] = phi[mesh.trace_map[j]];
  } else if (spec.name == "random_smooth") {
    if (spec.modes < 1)
      throw config_error("random_smooth needs at least one mode");
    std::mt19937 rng(spec.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const int modes = spec.modes;
    std::vector<double> a(modes), b(modes), p(modes), q(modes);
    double harmonic = 0.0;
    for (int m = 0; m < modes; ++m) {
      a[m] = unit(rng);
      b[m] = unit(rng);
      p[m] = 3.14159265358979323846 * unit(rng);
      q[m] = 3.14159265358979323846 * unit(rng);
      harmonic += 1.0 / (m + 1.0);
    }
    // |f| <= sum_m 0.8 / ((m+1) * harmonic) = 0.8, independent of the mesh.
    const auto f = [&](double x, double y) {
      double v = 0.0;
      for (int m = 0; m < modes; ++m) {
        const double freq = (m + 1) * 3.14159265358979323846;
        const double amp = 0.4 / ((m + 1.0) * harmonic);
        v += amp * (a[m] * std::cos(freq * x + p[m]) +
                    b[m] * std::sin(freq * y + q[m]));
      }
      return v;
    };
    for (int i = 0; i < nb; ++i)
      phi[i] = f(mesh.vertices[i].x, mesh.vertices[i].y);
    for (int j = 0; j < ns; ++j) psi[j] = phi[mesh.trace_map[j]];
  } else {
    throw config_error("unknown initial-data name \"" + spec.name +
                       "\" (valid: tanh_disk, random_smooth)");
  }

  // Under a hard energy coupling the pair must satisfy phi = alpha*psi on
  // the boundary exactly; rescale the trace into psi when alpha allows it.
  if (params.K.is_zero()) {
    if (params.alpha == 0.0) {
      if (spec.name == "tanh_disk") {
        if (psi.cwiseAbs().maxCoeff() > 0.0)
          throw config_error(
              "tanh_disk initial data is incompatible with a hard energy "
              "coupling at alpha = 0: the constraint forces a zero boundary "
              "trace, but the profile is nonzero there");
      } else {
        for (int j = 0; j < ns; ++j) phi[mesh.trace_map[j]] = 0.0;
      }
    } else {
      for (int j = 0; j < ns; ++j) {
        psi[j] = phi[mesh.trace_map[j]] / params.alpha;
        phi[mesh.trace_map[j]] = params.alpha * psi[j];
      }
    }
  }
  return {phi, psi};
}

// ===========================================================================
// CSV reports
// ===========================================================================

std::string sweep_csv(const SweepResult& result) {
  std::string out = "parameter,quantity,slope_so_far\n";
  for (std::size_t i = 0; i < result.parameter_values.size(); ++i) {
    double slope_so_far = std::numeric_limits<double>::quiet_NaN();
    if (i + 1 >= 3) {
      const std::vector<double> xs(result.parameter_values.begin(),
                                   result.parameter_values.begin() + i + 1);
      const std::vector<double> ys(result.quantity_values.begin(),
                                   result.quantity_values.begin() + i + 1);
      slope_so_far = fit_rate(xs, ys).slope;
    }
    out += format_value(result.parameter_values[i]) + "," +
           format_value(result.quantity_values[i]) + "," +
           format_value(slope_so_far) + "\n";
  }
  out += "# direction=" + format_direction(result.direction) +
         " fitted_slope=" + format_value(result.fitted_slope) +
         " fit_residual=" + format_value(result.fit_residual) +
         " expected_slope=" + format_value(result.expected_slope) +
         " monotone_toward_limit=" +
         (result.quantity_monotone_toward_limit ? "1" : "0") + "\n";
  return out;
}

std::string cdep_csv(const CdepResult& result) {
  std::string out = "delta,max_dual_norm\n";
  for (const auto& row : result.rows)
    out += format_value(row.delta) + "," + format_value(row.max_dual_norm) + "\n";
  out += "# fitted_slope=" + format_value(result.fitted_slope) +
         " fit_residual=" + format_value(result.fit_residual) + "\n";
  return out;
}

}  // namespace bsphase
