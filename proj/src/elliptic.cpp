/// \file elliptic.cpp
/// \brief Constrained sparse solvers for the coupled elliptic operator, dual
///        norms, Poincaré constants, and the interpolation inequality.

#include "bsphase/elliptic.hpp"

#include <cmath>
#include <random>
#include <string>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "bsphase/errors.hpp"

namespace bsphase {

double coupling_form(const Vector& a_bulk, const Vector& a_surf,
                     const Vector& b_bulk, const Vector& b_surf,
                     const FeOperators& ops, TriState coupling, double coef) {
  double total = a_bulk.dot(ops.A_bulk * b_bulk) + a_surf.dot(ops.A_surf * b_surf);
  const double h = h_of(coupling);
  if (h != 0.0) {
    const Vector mismatch_a = coef * a_surf - ops.T * a_bulk;
    const Vector mismatch_b = coef * b_surf - ops.T * b_bulk;
    total += h * mismatch_a.dot(ops.M_surf_lumped.asDiagonal() * mismatch_b);
  }
  return total;
}

double lb_inner(const Vector& a_bulk, const Vector& a_surf, const Vector& b_bulk,
                const Vector& b_surf, const FeOperators& ops,
                const CouplingParams& params) {
  return coupling_form(a_bulk, a_surf, b_bulk, b_surf, ops, params.L, params.beta);
}

SpMat coupled_gradient_matrix(const SpMat& a_bulk, const SpMat& a_surf,
                              const BulkSurfaceMesh& mesh, const Vector& surf_lumped,
                              double h, double coef) {
  const int nb = static_cast<int>(a_bulk.rows());
  const int ns = static_cast<int>(a_surf.rows());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(a_bulk.nonZeros() + a_surf.nonZeros() + 4u * ns);
  for (int k = 0; k < a_bulk.outerSize(); ++k)
    for (SpMat::InnerIterator it(a_bulk, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                        it.value());
  for (int k = 0; k < a_surf.outerSize(); ++k)
    for (SpMat::InnerIterator it(a_surf, k); it; ++it)
      trip.emplace_back(nb + static_cast<int>(it.row()), nb + static_cast<int>(it.col()),
                        it.value());
  if (h != 0.0) {
    for (int j = 0; j < ns; ++j) {
      const int i = mesh.trace_map[j];
      const double r = surf_lumped[j];
      trip.emplace_back(i, i, h * r);
      trip.emplace_back(i, nb + j, -h * coef * r);
      trip.emplace_back(nb + j, i, -h * coef * r);
      trip.emplace_back(nb + j, nb + j, h * coef * coef * r);
    }
  }
  SpMat a(nb + ns, nb + ns);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

SpMat trace_prolongation(const BulkSurfaceMesh& mesh, double coef) {
  const int nb = mesh.n_bulk(), ns = mesh.n_surface();
  const int n_interior = nb - ns;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(nb + ns);
  int next_interior = 0;
  std::vector<int> interior_index(nb, -1);
  for (int i = 0; i < nb; ++i)
    if (mesh.bulk_to_surface[i] < 0) interior_index[i] = next_interior++;
  for (int i = 0; i < nb; ++i) {
    const int j = mesh.bulk_to_surface[i];
    if (j < 0)
      trip.emplace_back(i, interior_index[i], 1.0);
    else
      trip.emplace_back(i, n_interior + j, coef);
  }
  for (int j = 0; j < ns; ++j) trip.emplace_back(nb + j, n_interior + j, 1.0);
  SpMat p(nb + ns, n_interior + ns);
  p.setFromTriplets(trip.begin(), trip.end());
  return p;
}

namespace {

SpMat coupled_matrix(const FeOperators& ops, const BulkSurfaceMesh& mesh, double h,
                     double coef) {
  return coupled_gradient_matrix(ops.A_bulk, ops.A_surf, mesh, ops.M_surf_lumped, h,
                                 coef);
}

SpMat block_mass(const FeOperators& ops) {
  const int nb = ops.n_bulk(), ns = ops.n_surface();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(ops.M_bulk.nonZeros() + ops.M_surf.nonZeros());
  for (int k = 0; k < ops.M_bulk.outerSize(); ++k)
    for (SpMat::InnerIterator it(ops.M_bulk, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                        it.value());
  for (int k = 0; k < ops.M_surf.outerSize(); ++k)
    for (SpMat::InnerIterator it(ops.M_surf, k); it; ++it)
      trip.emplace_back(nb + static_cast<int>(it.row()), nb + static_cast<int>(it.col()),
                        it.value());
  SpMat m(nb + ns, nb + ns);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

SpMat full_h1_product(const FeOperators& ops) {
  const int nb = ops.n_bulk(), ns = ops.n_surface();
  std::vector<Eigen::Triplet<double>> trip;
  const auto add_block = [&trip](const SpMat& m, int offset) {
    for (int k = 0; k < m.outerSize(); ++k)
      for (SpMat::InnerIterator it(m, k); it; ++it)
        trip.emplace_back(offset + static_cast<int>(it.row()),
                          offset + static_cast<int>(it.col()), it.value());
  };
  add_block(ops.M_bulk, 0);
  add_block(ops.A_bulk, 0);
  add_block(ops.M_surf, nb);
  add_block(ops.A_surf, nb);
  SpMat h(nb + ns, nb + ns);
  h.setFromTriplets(trip.begin(), trip.end());
  return h;
}

/// Symmetric bordered system [[A, C], [Cᵀ, 0]] for mean constraints.
SpMat bordered(const SpMat& a, const std::vector<Vector>& constraints) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(constraints.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(a.nonZeros() + 2u * n * m);
  for (int k = 0; k < a.outerSize(); ++k)
    for (SpMat::InnerIterator it(a, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                        it.value());
  for (int c = 0; c < m; ++c)
    for (int i = 0; i < n; ++i)
      if (constraints[c][i] != 0.0) {
        trip.emplace_back(i, n + c, constraints[c][i]);
        trip.emplace_back(n + c, i, constraints[c][i]);
      }
  SpMat s(n + m, n + m);
  s.setFromTriplets(trip.begin(), trip.end());
  return s;
}

using SparseLU = Eigen::SparseLU<SpMat>;

void factorize(SparseLU& lu, SpMat a, const char* what) {
  a.makeCompressed();
  lu.compute(a);
  if (lu.info() != Eigen::Success)
    throw solver_error(std::string("sparse factorization failed for the ") + what);
}

}  // namespace

// ===========================================================================
// SolutionOperator
// ===========================================================================

struct SolutionOperator::Impl {
  enum class Mode { constrained, trace_reduced, decoupled };

  Mode mode = Mode::constrained;
  int nb = 0, ns = 0;
  double beta = 0.0;
  double area = 0.0, perimeter = 0.0;
  TriState coupling = TriState::finite(1.0);

  SpMat m_bulk, m_surf;      // pairing matrices (copies: the operator outlives callers' ops)
  SpMat a_bulk, a_surf, t;   // for the gradient-form cross-check
  Vector m_surf_lumped;
  SpMat prolong;             // trace_reduced only

  SparseLU lu_main;  // constrained/trace_reduced saddle, or decoupled bulk saddle
  SparseLU lu_surf;  // decoupled surface saddle

  void check_rhs_constraint(const Vector& fb, const Vector& fs) const {
    const double bulk_int = (m_bulk * fb).sum();
    const double surf_int = (m_surf * fs).sum();
    const auto fail = [](double residual) {
      throw domain_error(
          "right-hand side violates the mean-value compatibility constraint "
          "(residual = " +
          std::to_string(residual) + ")");
    };
    if (mode == Mode::decoupled) {
      const double scale_b = std::max(1.0, area * fb.cwiseAbs().maxCoeff());
      const double scale_s = std::max(1.0, perimeter * fs.cwiseAbs().maxCoeff());
      if (std::abs(bulk_int) > 1e-10 * scale_b) fail(bulk_int);
      if (std::abs(surf_int) > 1e-10 * scale_s) fail(surf_int);
    } else {
      const double residual = beta * bulk_int + surf_int;
      const double scale =
          std::max(1.0, std::abs(beta) * area * fb.cwiseAbs().maxCoeff() +
                            perimeter * fs.cwiseAbs().maxCoeff());
      if (std::abs(residual) > 1e-10 * scale) fail(residual);
    }
  }
};

SolutionOperator::SolutionOperator(const FeOperators& ops, const BulkSurfaceMesh& mesh,
                                   const CouplingParams& params)
    : impl_(std::make_unique<Impl>()) {
  impl_->nb = ops.n_bulk();
  impl_->ns = ops.n_surface();
  impl_->beta = params.beta;
  std::tie(impl_->area, impl_->perimeter) = measures(mesh);
  impl_->coupling = params.L;
  impl_->m_bulk = ops.M_bulk;
  impl_->m_surf = ops.M_surf;
  impl_->a_bulk = ops.A_bulk;
  impl_->a_surf = ops.A_surf;
  impl_->t = ops.T;
  impl_->m_surf_lumped = ops.M_surf_lumped;

  const Vector ones_b = Vector::Ones(impl_->nb);
  const Vector ones_s = Vector::Ones(impl_->ns);

  if (params.L.is_infinite()) {
    impl_->mode = Impl::Mode::decoupled;
    factorize(impl_->lu_main, bordered(ops.A_bulk, {ops.M_bulk * ones_b}),
              "bulk elliptic block");
    factorize(impl_->lu_surf, bordered(ops.A_surf, {ops.M_surf * ones_s}),
              "surface elliptic block");
    return;
  }

  Vector constraint(impl_->nb + impl_->ns);
  constraint.head(impl_->nb) = params.beta * (ops.M_bulk * ones_b);
  constraint.tail(impl_->ns) = ops.M_surf * ones_s;

  if (params.L.is_zero()) {
    impl_->mode = Impl::Mode::trace_reduced;
    impl_->prolong = trace_prolongation(mesh, params.beta);
    const SpMat a_full = coupled_matrix(ops, mesh, 0.0, params.beta);
    const SpMat a_red = impl_->prolong.transpose() * a_full * impl_->prolong;
    const Vector c_red = impl_->prolong.transpose() * constraint;
    factorize(impl_->lu_main, bordered(a_red, {c_red}),
              "trace-constrained elliptic system");
    return;
  }

  impl_->mode = Impl::Mode::constrained;
  const SpMat a = coupled_matrix(ops, mesh, h_of(params.L), params.beta);
  factorize(impl_->lu_main, bordered(a, {constraint}), "coupled elliptic system");
}

SolutionOperator::~SolutionOperator() = default;

EllipticSolution SolutionOperator::solve(const Vector& rhs_bulk,
                                         const Vector& rhs_surf) const {
  const int nb = impl_->nb, ns = impl_->ns;
  if (rhs_bulk.size() != nb || rhs_surf.size() != ns)
    throw domain_error("elliptic right-hand side sizes do not match the mesh");
  impl_->check_rhs_constraint(rhs_bulk, rhs_surf);

  EllipticSolution sol;
  if (impl_->mode == Impl::Mode::decoupled) {
    Vector rb(nb + 1);
    rb.head(nb) = -(impl_->m_bulk * rhs_bulk);
    rb[nb] = 0.0;
    const Vector xb = impl_->lu_main.solve(rb);
    Vector rs(ns + 1);
    rs.head(ns) = -(impl_->m_surf * rhs_surf);
    rs[ns] = 0.0;
    const Vector xs = impl_->lu_surf.solve(rs);
    sol.s_bulk = xb.head(nb);
    sol.s_surf = xs.head(ns);
    sol.multipliers = {xb[nb], xs[ns]};
    return sol;
  }

  Vector f(nb + ns);
  f.head(nb) = -(impl_->m_bulk * rhs_bulk);
  f.tail(ns) = -(impl_->m_surf * rhs_surf);

  if (impl_->mode == Impl::Mode::trace_reduced) {
    const int nr = static_cast<int>(impl_->prolong.cols());
    Vector rhs(nr + 1);
    rhs.head(nr) = impl_->prolong.transpose() * f;
    rhs[nr] = 0.0;
    const Vector x = impl_->lu_main.solve(rhs);
    const Vector full = impl_->prolong * x.head(nr);
    sol.s_bulk = full.head(nb);
    sol.s_surf = full.tail(ns);
    sol.multipliers = {x[nr]};
    return sol;
  }

  Vector rhs(nb + ns + 1);
  rhs.head(nb + ns) = f;
  rhs[nb + ns] = 0.0;
  const Vector x = impl_->lu_main.solve(rhs);
  sol.s_bulk = x.head(nb);
  sol.s_surf = x.segment(nb, ns);
  sol.multipliers = {x[nb + ns]};
  return sol;
}

double SolutionOperator::dual_norm(const Vector& rhs_bulk,
                                   const Vector& rhs_surf) const {
  const EllipticSolution sol = solve(rhs_bulk, rhs_surf);
  double radicand = -(sol.s_bulk.dot(impl_->m_bulk * rhs_bulk) +
                      sol.s_surf.dot(impl_->m_surf * rhs_surf));
  if (radicand < -1e-12)
    throw solver_error("dual norm radicand is negative (" + std::to_string(radicand) +
                       "): elliptic solve is inconsistent");
  // max(0.0, x) rather than max(x, 0.0): the first argument wins on ties,
  // so a -0.0 radicand comes out as +0.0 and the norm carries no sign bit.
  radicand = std::max(0.0, radicand);

  // Independent evaluation through the gradient form of the solution.
  double grad_form = sol.s_bulk.dot(impl_->a_bulk * sol.s_bulk) +
                     sol.s_surf.dot(impl_->a_surf * sol.s_surf);
  const double h = h_of(impl_->coupling);
  if (h != 0.0) {
    const Vector mismatch = impl_->beta * sol.s_surf - impl_->t * sol.s_bulk;
    grad_form += h * mismatch.dot(impl_->m_surf_lumped.asDiagonal() * mismatch);
  }
  if (std::abs(grad_form - radicand) > 1e-9 * std::max(1.0, radicand))
    throw solver_error("dual norm formulas disagree (pairing " +
                       std::to_string(radicand) + " vs gradient form " +
                       std::to_string(grad_form) + ")");
  return std::sqrt(radicand);
}

EllipticSolution solve_S(const Vector& rhs_bulk, const Vector& rhs_surf,
                         const FeOperators& ops, const BulkSurfaceMesh& mesh,
                         const CouplingParams& params) {
  return SolutionOperator(ops, mesh, params).solve(rhs_bulk, rhs_surf);
}

double dual_norm(const Vector& rhs_bulk, const Vector& rhs_surf,
                 const FeOperators& ops, const BulkSurfaceMesh& mesh,
                 const CouplingParams& params) {
  return SolutionOperator(ops, mesh, params).dual_norm(rhs_bulk, rhs_surf);
}

// ===========================================================================
// Poincaré constant by constrained inverse iteration
// ===========================================================================

double poincare_constant(const FeOperators& ops, const BulkSurfaceMesh& mesh,
                         const CouplingParams& params) {
  if (params.K.is_infinite())
    throw domain_error(
        "the coupled Poincaré constant is defined for K in [0, inf) only: with "
        "decoupled components the form has a two-dimensional kernel");

  const int nb = ops.n_bulk(), ns = ops.n_surface();
  const Vector ones_b = Vector::Ones(nb);
  const Vector ones_s = Vector::Ones(ns);
  Vector constraint(nb + ns);
  constraint.head(nb) = params.beta * (ops.M_bulk * ones_b);
  constraint.tail(ns) = ops.M_surf * ones_s;

  SpMat a = coupled_matrix(ops, mesh, h_of(params.K), params.alpha);
  SpMat m = block_mass(ops);
  Vector c = constraint;
  if (params.K.is_zero()) {
    const SpMat p = trace_prolongation(mesh, params.alpha);
    a = SpMat(p.transpose() * a * p);
    m = SpMat(p.transpose() * m * p);
    c = p.transpose() * constraint;
  }
  const int n = static_cast<int>(a.rows());

  SparseLU lu;
  factorize(lu, bordered(a, {c}), "Poincaré eigenvalue system");

  // Block inverse iteration with Rayleigh-Ritz extraction. A single vector
  // converges like lambda_1/lambda_2, which is hopeless when the lowest pair
  // is split only by mesh asymmetry; a block of three contracts like
  // lambda_1/lambda_4 and keeps a near-degenerate lowest cluster inside the
  // block, where the Ritz step resolves it.
  const int block = std::min(3, n - 1);
  std::mt19937 rng(2024);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd basis(n, block);
  for (int j = 0; j < block; ++j)
    for (int i = 0; i < n; ++i) basis(i, j) = gauss(rng);

  const auto m_orthonormalize = [&](Eigen::MatrixXd& y) -> bool {
    for (int j = 0; j < y.cols(); ++j) {
      for (int pass = 0; pass < 2; ++pass)
        for (int k = 0; k < j; ++k)
          y.col(j) -= y.col(k).dot(m * y.col(j)) * y.col(k);
      const double norm = std::sqrt(y.col(j).dot(m * y.col(j)));
      if (!std::isfinite(norm) || !(norm > 0.0)) return false;
      y.col(j) /= norm;
    }
    return true;
  };

  double lambda = 0.0, lambda_prev = -1.0;
  int settled = 0;
  for (int iter = 0; iter < 400 && settled < 2; ++iter) {
    Eigen::MatrixXd y(n, block);
    for (int j = 0; j < block; ++j) {
      Vector rhs(n + 1);
      rhs.head(n) = m * basis.col(j);
      rhs[n] = 0.0;
      y.col(j) = lu.solve(rhs).head(n);
    }
    if (!m_orthonormalize(y))
      throw solver_error("Poincaré subspace iteration degenerated");
    Eigen::MatrixXd ritz = y.transpose() * (a * y).eval();
    ritz = 0.5 * (ritz + ritz.transpose()).eval();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ritz);
    basis = y * es.eigenvectors();
    lambda = es.eigenvalues()[0];
    settled = std::abs(lambda - lambda_prev) <= 1e-13 * std::max(lambda, 1e-300)
                  ? settled + 1
                  : 0;
    lambda_prev = lambda;
  }

  if (!(lambda > 0.0))
    throw solver_error("Poincaré eigenvalue is not positive (" +
                       std::to_string(lambda) + ")");
  return 1.0 / std::sqrt(lambda);
}

// ===========================================================================
// Interpolation inequality between L2, the H1 dual, and the gradient seminorm
// ===========================================================================

InterpolationCheck check_interpolation(const Vector& zeta, const Vector& xi,
                                       const FeOperators& ops,
                                       const BulkSurfaceMesh& mesh,
                                       const CouplingParams& params) {
  const int nb = ops.n_bulk(), ns = ops.n_surface();
  if (zeta.size() != nb || xi.size() != ns)
    throw domain_error("interpolation check sample sizes do not match the mesh");

  // With a hard trace coupling the pair must live on the constrained
  // subspace; project the bulk trace onto alpha * surface values.
  Vector u = zeta;
  if (params.K.is_zero())
    for (int j = 0; j < ns; ++j) u[mesh.trace_map[j]] = params.alpha * xi[j];

  InterpolationCheck result;
  result.lhs = u.dot(ops.M_bulk * u) + xi.dot(ops.M_surf * xi);

  Vector f(nb + ns);
  f.head(nb) = ops.M_bulk * u;
  f.tail(ns) = ops.M_surf * xi;

  SpMat h1 = full_h1_product(ops);
  double dual_sq = 0.0;
  Eigen::SimplicialLDLT<SpMat> ldlt;
  if (params.K.is_zero()) {
    const SpMat p = trace_prolongation(mesh, params.alpha);
    const SpMat h_red = SpMat(p.transpose() * h1 * p);
    const Vector f_red = p.transpose() * f;
    ldlt.compute(h_red);
    if (ldlt.info() != Eigen::Success)
      throw solver_error("H1 Riesz factorization failed");
    dual_sq = f_red.dot(ldlt.solve(f_red));
  } else {
    ldlt.compute(h1);
    if (ldlt.info() != Eigen::Success)
      throw solver_error("H1 Riesz factorization failed");
    dual_sq = f.dot(ldlt.solve(f));
  }
  dual_sq = std::max(dual_sq, 0.0);

  const double grad =
      std::sqrt(std::max(0.0, u.dot(ops.A_bulk * u) + xi.dot(ops.A_surf * xi)));
  result.rhs = 2.0 * std::sqrt(dual_sq) * grad + dual_sq;
  result.violated = result.lhs > result.rhs + 1e-9;
  return result;
}

}  // namespace bsphase
