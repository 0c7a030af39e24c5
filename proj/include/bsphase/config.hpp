/// \file config.hpp
/// \brief Run configuration: flat INI-style "section.key = value" text files,
///        canonical serialization with a stable content hash for reproducible
///        output naming, and factories that turn a parsed configuration into
///        the solver objects (mesh, parameters, potentials, mobilities,
///        velocity, initial data, step settings).

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bsphase/experiments.hpp"

namespace bsphase {

/// Parsed and validated run configuration. Every field has a default except
/// the mesh block and the time-step block, which must be present. Coupling
/// coefficients are stored in their canonical text form ("0", a positive
/// real, or "inf").
struct RunConfig {
  // mesh (required)
  std::string mesh_shape;    ///< "unit_disk" | "unit_square"
  int mesh_resolution = 0;   ///< >= 2

  // params
  std::string K = "1";
  std::string L = "1";
  double alpha = 1.0;
  double beta = 1.0;
  double eps = 1.0;
  double eps_surf = 1.0;
  double kappa = 1.0;

  // potentials: a builtin name, or a sampled table file (s, F(s), G(s)).
  std::string potentials_name = "double_well";
  std::string potentials_table;  ///< path; nonempty overrides the name
  double potentials_growth_p = 4.0;
  double potentials_growth_q = 4.0;

  // mobilities
  std::string mobility_bulk_name = "constant";
  double mobility_bulk_value = 1.0;
  std::string mobility_surf_name = "constant";
  double mobility_surf_value = 1.0;

  // velocity: a builtin name with magnitude, or a sampled table file.
  std::string velocity_name = "zero";
  double velocity_magnitude = 0.0;
  std::string velocity_table;  ///< path; nonempty overrides the name

  // initial data: a builtin generator, or a nodal-values file.
  std::string initial_name = "tanh_disk";
  double initial_r0 = 0.5;
  double initial_width = 0.1;
  unsigned initial_seed = 0;
  int initial_modes = 3;
  std::string initial_file;  ///< path; nonempty overrides the name
  std::optional<double> initial_target_mass;  ///< combined-mass projection

  // time (dt and T_final required)
  double dt = 0.0;
  double T_final = 0.0;
  int snapshot_stride = 1;

  // scheme
  std::string scheme_name = "convex_split_newton";
  double newton_tol = 1e-12;
  int newton_max_iters = 30;
  double stab_F = 2.0;
  double stab_G = 2.0;

  // output
  std::string output_dir = ".";
  bool output_vtk = false;

  unsigned seed = 0;

  bool operator==(const RunConfig&) const = default;
};

/// Parse "key = value" lines with dotted section prefixes (full-line comments
/// start with '#' or ';'). Unknown keys raise config_error listing the valid
/// keys; duplicate keys, missing required keys, malformed values, and
/// referenced files that do not exist are config_error too. "inf" is accepted
/// case-insensitively for K and L and canonicalized to lowercase.
RunConfig parse_config_text(const std::string& text);

/// parse_config_text on the contents of a file (config_error when unreadable).
RunConfig parse_config(const std::string& path);

/// Canonical serialization: fixed key order, %.17g numbers, path keys only
/// when nonempty. parse_config_text(emit_config(c)) == c for every valid c.
std::string emit_config(const RunConfig& config);

/// FNV-1a (64-bit) hash of the canonical serialization, as 16 hex digits.
/// Identical configurations hash identically, so output file names built
/// from the hash overwrite on rerun.
std::string config_hash(const RunConfig& config);

// ---------------------------------------------------------------------------
// Factories from a validated configuration
// ---------------------------------------------------------------------------

BulkSurfaceMesh make_mesh(const RunConfig& config);

CouplingParams make_params(const RunConfig& config);

PotentialSpec make_potentials(const RunConfig& config);

MobilitySpec make_mobility_bulk(const RunConfig& config);
MobilitySpec make_mobility_surf(const RunConfig& config);

/// Builtin velocity as a steady table, or a sampled table file with layout:
/// n_samples, then per sample: t, 2*n_bulk bulk components (vx vy per
/// vertex), 2*n_surface surface components. Tangency is validated; a nonzero
/// discrete divergence of a table's bulk field only warns on stderr.
VelocityTable make_velocity(const RunConfig& config, const BulkSurfaceMesh& mesh);

/// Builtin initial data (reference_initial_data) or a nodal-values file
/// (n_bulk then n_surface numbers), then project_initial with the optional
/// combined-mass target, so the returned pair is ready for the stepper.
std::pair<Vector, Vector> make_initial(const RunConfig& config,
                                       const BulkSurfaceMesh& mesh,
                                       const FeOperators& ops,
                                       const CouplingParams& params);

StepConfig make_step_config(const RunConfig& config);

/// Bundle for the experiment layer: initial data, velocity, horizon,
/// potentials, mobilities, and step settings from one configuration.
SimulationInputs make_inputs(const RunConfig& config, const BulkSurfaceMesh& mesh,
                             const FeOperators& ops, const CouplingParams& params);

}  // namespace bsphase
