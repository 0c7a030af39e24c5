/// \file elliptic.hpp
/// \brief The coupled bulk-surface elliptic solution operator, the associated
///        inner products and dual norms, Poincaré-constant estimation, and the
///        interpolation-inequality check.
///
/// The flux coupling L and weight beta induce a gradient inner product on
/// pairs (bulk, surface); its solution operator inverts the coupled Laplacian
/// on the subspace fixed by the mean constraint
///     beta*|Omega|*mean(bulk) + |Gamma|*mean(surf) = 0
/// (for L in {0, finite}; separate zero means when L is infinite). Dual norms
/// of mass-constraint-compatible right-hand sides follow from one solve.

#pragma once

#include <memory>
#include <vector>

#include "bsphase/model.hpp"

namespace bsphase {

/// Generic coupled gradient form with a trace-mismatch penalty:
///   a_bulkᵀ A_bulk b_bulk + a_surfᵀ A_surf b_surf
///   + h_of(coupling) (coef·a_surf − T a_bulk)ᵀ M_surf_lumped (coef·b_surf − T b_bulk).
/// Instantiated with (L, beta) for the flux form and (K, alpha) for the
/// energy form.
double coupling_form(const Vector& a_bulk, const Vector& a_surf,
                     const Vector& b_bulk, const Vector& b_surf,
                     const FeOperators& ops, TriState coupling, double coef);

/// The (L, beta) gradient inner product from the flux structure.
double lb_inner(const Vector& a_bulk, const Vector& a_surf, const Vector& b_bulk,
                const Vector& b_surf, const FeOperators& ops,
                const CouplingParams& params);

/// Matrix of the coupled gradient form for arbitrary stiffness blocks:
///   [[a_bulk + h T'RT, -h coef T'R], [-h coef RT, a_surf + h coef^2 R]]
/// with R = diag(surf_lumped). h = 0 yields the plain block diagonal, so this
/// also builds block mass matrices from (M_bulk, M_surf).
SpMat coupled_gradient_matrix(const SpMat& a_bulk, const SpMat& a_surf,
                              const BulkSurfaceMesh& mesh, const Vector& surf_lumped,
                              double h, double coef);

/// Prolongation from the trace-constrained pair space (interior bulk dofs in
/// mesh order, then surface dofs) into the full product space, with bulk
/// trace = coef * surface. Realizes the hard-coupling subspaces for K = 0
/// (coef = alpha) and L = 0 (coef = beta).
SpMat trace_prolongation(const BulkSurfaceMesh& mesh, double coef);

struct EllipticSolution {
  Vector s_bulk;
  Vector s_surf;
  std::vector<double> multipliers;  ///< 1 mean constraint, or 2 when decoupled
};

/// Factorized solution operator for one (operators, params) pair. Building it
/// factorizes the constrained system once; solves are cheap, const, and
/// reentrant afterwards. This object is the per-(mesh, params) cache.
class SolutionOperator {
 public:
  SolutionOperator(const FeOperators& ops, const BulkSurfaceMesh& mesh,
                   const CouplingParams& params);
  ~SolutionOperator();
  SolutionOperator(const SolutionOperator&) = delete;
  SolutionOperator& operator=(const SolutionOperator&) = delete;

  /// Solve the coupled elliptic problem with right-hand side functional
  /// -(test_bulkᵀ M_bulk rhs_bulk + test_surfᵀ M_surf rhs_surf).
  /// Throws domain_error when the rhs violates its mean constraint (the
  /// message names the residual) and solver_error on factorization failure.
  EllipticSolution solve(const Vector& rhs_bulk, const Vector& rhs_surf) const;

  /// Dual norm of the rhs functional: sqrt of the negated duality pairing
  /// -(s_bulkᵀ M_bulk rhs_bulk + s_surfᵀ M_surf rhs_surf). Cross-checked
  /// against the gradient form of the solution within 1e-9; a radicand below
  /// -1e-12 raises solver_error.
  double dual_norm(const Vector& rhs_bulk, const Vector& rhs_surf) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot convenience wrappers (they build a SolutionOperator internally;
/// hold one explicitly when solving repeatedly).
EllipticSolution solve_S(const Vector& rhs_bulk, const Vector& rhs_surf,
                         const FeOperators& ops, const BulkSurfaceMesh& mesh,
                         const CouplingParams& params);
double dual_norm(const Vector& rhs_bulk, const Vector& rhs_surf,
                 const FeOperators& ops, const BulkSurfaceMesh& mesh,
                 const CouplingParams& params);

/// Discrete constant of the coupled Poincaré inequality
///   ||(phi,psi)||_{L2} <= C_P ||(phi,psi)||_{K,alpha}
/// on the mean-constraint subspace: 1/sqrt(lambda_min), with lambda_min the
/// smallest generalized eigenvalue of the (K, alpha) form against the L2 form,
/// computed by constrained inverse iteration. Requires K in {zero, finite}
/// (throws domain_error for infinite K, where the form has a 2-dim kernel).
double poincare_constant(const FeOperators& ops, const BulkSurfaceMesh& mesh,
                         const CouplingParams& params);

struct InterpolationCheck {
  double lhs = 0.0;       ///< squared L2 norm of the pair
  double rhs = 0.0;       ///< 2·dual·gradient + dual^2
  bool violated = false;  ///< lhs > rhs + 1e-9
};

/// Squared-L2 interpolation bound between the dual norm (Riesz solve in the
/// full H1 product, no mean constraint) and the gradient seminorm. When K is
/// zero the sample is first projected onto the trace-constrained subspace.
InterpolationCheck check_interpolation(const Vector& zeta, const Vector& xi,
                                       const FeOperators& ops,
                                       const BulkSurfaceMesh& mesh,
                                       const CouplingParams& params);

}  // namespace bsphase
