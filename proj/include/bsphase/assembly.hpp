/// \file assembly.hpp
/// \brief Sparse finite-element operators on a bulk-surface mesh: mass and
///        stiffness matrices (consistent, lumped, mobility-weighted), the
///        trace restriction, convection load vectors, and built-in velocity
///        fields.
///
/// Bulk fields use piecewise-linear conforming elements on triangles; surface
/// fields use piecewise-linear elements on the closed boundary chain (one
/// periodic 1D mesh running through corners). Linear terms are integrated
/// exactly; convection loads use quadrature exact for quadratics.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "bsphase/geometry.hpp"

namespace bsphase {

using SpMat = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

/// Number of worker threads for element-parallel kernels: a positive request
/// wins; otherwise the BSPHASE_THREADS environment variable; otherwise 1.
int resolve_thread_count(int requested);

/// Immutable bundle of assembled operators for one mesh.
struct FeOperators {
  SpMat M_bulk;          ///< consistent bulk mass, SPD
  Vector M_bulk_lumped;  ///< diagonal of the lumped bulk mass, entries > 0
  SpMat A_bulk;          ///< bulk stiffness (Dirichlet form), symmetric PSD
  SpMat M_surf;          ///< consistent surface mass, SPD
  Vector M_surf_lumped;  ///< diagonal of the lumped surface mass, entries > 0
  SpMat A_surf;          ///< surface stiffness along the boundary curve
  SpMat T;               ///< boolean trace restriction, n_surface x n_bulk
  std::string quadrature_rule;  ///< identifier of the rules used

  int n_bulk() const { return static_cast<int>(A_bulk.rows()); }
  int n_surface() const { return static_cast<int>(A_surf.rows()); }
};

/// Assemble all operators. Element computations run on `n_threads` workers
/// (0 = resolve from the environment); the reduction into sparse matrices is
/// a fixed-order serial pass, so results are bitwise identical for every
/// thread count.
FeOperators assemble_operators(const BulkSurfaceMesh& mesh, int n_threads = 0);

/// Plain single-loop serial assembly, kept as the reference implementation
/// for correctness tests and the benchmark baseline.
FeOperators assemble_operators_reference(const BulkSurfaceMesh& mesh);

/// Mobility-weighted stiffness matrices: the weight is interpolated linearly
/// from nodal values and integrated exactly against the constant element
/// gradients. Weights must be strictly positive (throws model_error).
std::pair<SpMat, SpMat> weighted_stiffness(const FeOperators& ops,
                                           const BulkSurfaceMesh& mesh,
                                           const Vector& weight_bulk,
                                           const Vector& weight_surf);

/// Nodal samples of the prescribed bulk velocity and tangential surface
/// velocity at one time.
struct VelocitySample {
  std::vector<Vec2> v_nodes;  ///< per bulk vertex
  std::vector<Vec2> w_nodes;  ///< per surface vertex, tangential to the chain
  bool steady = true;         ///< false when drawn from a per-step table
};

/// Piecewise-constant-in-time velocity data: sample i is active on
/// [times[i], times[i+1]).
struct VelocityTable {
  std::vector<double> times;             ///< sorted ascending, same length
  std::vector<VelocitySample> samples;

  static VelocityTable steady(VelocitySample sample);
  const VelocitySample& at(double t) const;  ///< last sample with time <= t
};

/// Check sizes and the tangency invariant w·n = 0 (within 1e-12) at every
/// surface vertex; throws config_error on violation.
void validate_velocity(const BulkSurfaceMesh& mesh, const VelocitySample& vel);

/// Largest |div v_h| over elements for the piecewise-linear interpolant of
/// the bulk velocity (elementwise constant). Used to warn on user-supplied
/// tables; built-in fields are divergence-free by construction.
double max_element_divergence(const BulkSurfaceMesh& mesh, const VelocitySample& vel);

/// Convection load vectors: b_bulk[i] = ∫ φ v·∇ζ_i (3-point mid-edge rule,
/// exact for quadratics) and b_surf[j] = ∫ ψ w·∇_Γξ_j (Simpson per edge).
/// Deterministic for every thread count, like assemble_operators.
std::pair<Vector, Vector> convection_load(const FeOperators& ops,
                                          const BulkSurfaceMesh& mesh,
                                          const Vector& field_bulk,
                                          const Vector& field_surf,
                                          const VelocitySample& vel,
                                          int n_threads = 0);

/// Serial reference for convection_load (test and benchmark baseline).
std::pair<Vector, Vector> convection_load_reference(const BulkSurfaceMesh& mesh,
                                                    const Vector& field_bulk,
                                                    const Vector& field_surf,
                                                    const VelocitySample& vel);

/// Built-in velocity fields:
///  - "zero": everything vanishes;
///  - "rotation": rigid rotation magnitude·(-y, x); disk meshes only, since
///    the field is not tangential at square corners (throws config_error);
///  - "surface_slide": v = 0 and w = magnitude · unit tangent.
VelocitySample builtin_velocity(const std::string& name, double magnitude,
                                const BulkSurfaceMesh& mesh);

}  // namespace bsphase
