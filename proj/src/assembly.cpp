/// \file assembly.cpp
/// \brief Finite-element operator assembly with deterministic element-parallel
///        kernels and a serial reference implementation.
///
/// Parallel strategy: the per-element work (gradients, local matrices, local
/// loads) is computed into one slot per element by an OpenMP loop; a serial
/// fixed-order pass then reduces the slots into triplets/vectors. The reduction
/// order never depends on the thread count, so assembled operators are bitwise
/// reproducible.

#include "bsphase/assembly.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <string>

#include "bsphase/errors.hpp"

namespace bsphase {

int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("BSPHASE_THREADS")) {
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || value < 1 || value > 256)
      throw config_error("BSPHASE_THREADS must be an integer in [1, 256]");
    return static_cast<int>(value);
  }
  return 1;
}

namespace {

constexpr const char* kQuadratureRule =
    "bulk:P1-exact;surface:P1-exact;convection:midedge3+simpson";

/// Constant gradients of the three nodal basis functions on one triangle.
std::array<Vec2, 3> basis_gradients(const BulkSurfaceMesh& mesh, std::size_t t) {
  const auto& tri = mesh.triangles[t];
  const Vec2 p0 = mesh.vertices[tri[0]];
  const Vec2 p1 = mesh.vertices[tri[1]];
  const Vec2 p2 = mesh.vertices[tri[2]];
  const double inv_two_area = 1.0 / (2.0 * mesh.element_areas[t]);
  return {inv_two_area * perp(p2 - p1), inv_two_area * perp(p0 - p2),
          inv_two_area * perp(p1 - p0)};
}

struct BulkLocal {
  double stiff[3][3];
};

/// Element stiffness entries, computed in parallel into per-element slots.
std::vector<BulkLocal> bulk_stiffness_slots(const BulkSurfaceMesh& mesh, int nt) {
  const auto n = static_cast<std::int64_t>(mesh.triangles.size());
  std::vector<BulkLocal> slots(mesh.triangles.size());
  (void)nt;
#if defined(BSPHASE_HAVE_OPENMP)
#pragma omp parallel for num_threads(nt) schedule(static)
#endif
  for (std::int64_t t = 0; t < n; ++t) {
    const auto g = basis_gradients(mesh, static_cast<std::size_t>(t));
    const double area = mesh.element_areas[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) slots[t].stiff[i][j] = area * dot(g[i], g[j]);
  }
  return slots;
}

/// Fixed-order reduction shared by the parallel and reference paths. The
/// triplet sequences are identical, so both paths produce bitwise-equal
/// matrices.
FeOperators reduce_operators(const BulkSurfaceMesh& mesh,
                             const std::vector<BulkLocal>& slots) {
  const int nb = mesh.n_bulk();
  const int ns = mesh.n_surface();
  FeOperators ops;
  ops.quadrature_rule = kQuadratureRule;

  std::vector<Eigen::Triplet<double>> tm, ta;
  tm.reserve(9 * mesh.triangles.size());
  ta.reserve(9 * mesh.triangles.size());
  ops.M_bulk_lumped = Vector::Zero(nb);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double area = mesh.element_areas[t];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        tm.emplace_back(tri[i], tri[j], (area / 12.0) * (i == j ? 2.0 : 1.0));
        ta.emplace_back(tri[i], tri[j], slots[t].stiff[i][j]);
      }
      ops.M_bulk_lumped[tri[i]] += area / 3.0;
    }
  }
  ops.M_bulk.resize(nb, nb);
  ops.M_bulk.setFromTriplets(tm.begin(), tm.end());
  ops.A_bulk.resize(nb, nb);
  ops.A_bulk.setFromTriplets(ta.begin(), ta.end());

  std::vector<Eigen::Triplet<double>> sm, sa, st;
  sm.reserve(4u * ns);
  sa.reserve(4u * ns);
  st.reserve(ns);
  ops.M_surf_lumped = Vector::Zero(ns);
  for (int e = 0; e < ns; ++e) {
    const int a = e, b = (e + 1) % ns;
    const double len = mesh.edge_lengths[e];
    sm.emplace_back(a, a, len / 3.0);
    sm.emplace_back(b, b, len / 3.0);
    sm.emplace_back(a, b, len / 6.0);
    sm.emplace_back(b, a, len / 6.0);
    const double k = 1.0 / len;
    sa.emplace_back(a, a, k);
    sa.emplace_back(b, b, k);
    sa.emplace_back(a, b, -k);
    sa.emplace_back(b, a, -k);
    ops.M_surf_lumped[a] += len / 2.0;
    ops.M_surf_lumped[b] += len / 2.0;
  }
  for (int j = 0; j < ns; ++j) st.emplace_back(j, mesh.trace_map[j], 1.0);
  ops.M_surf.resize(ns, ns);
  ops.M_surf.setFromTriplets(sm.begin(), sm.end());
  ops.A_surf.resize(ns, ns);
  ops.A_surf.setFromTriplets(sa.begin(), sa.end());
  ops.T.resize(ns, nb);
  ops.T.setFromTriplets(st.begin(), st.end());
  return ops;
}

/// Post-assembly structural checks (kernel of the stiffness, lumping
/// consistency, partition of unity against the mesh measures).
void check_operator_invariants(const FeOperators& ops, const BulkSurfaceMesh& mesh) {
  const Vector ones_b = Vector::Ones(ops.n_bulk());
  const Vector ones_s = Vector::Ones(ops.n_surface());
  if ((ops.A_bulk * ones_b).cwiseAbs().maxCoeff() > 1e-12 ||
      (ops.A_surf * ones_s).cwiseAbs().maxCoeff() > 1e-12)
    throw assembly_error("stiffness matrix does not annihilate constants");
  if (((ops.M_bulk * ones_b) - ops.M_bulk_lumped).cwiseAbs().maxCoeff() > 1e-12 ||
      ((ops.M_surf * ones_s) - ops.M_surf_lumped).cwiseAbs().maxCoeff() > 1e-12)
    throw assembly_error("lumped mass does not match consistent row sums");
  if (ops.M_bulk_lumped.minCoeff() <= 0.0 || ops.M_surf_lumped.minCoeff() <= 0.0)
    throw assembly_error("non-positive lumped mass entry");
  const auto [area, perimeter] = measures(mesh);
  if (std::abs(ones_b.dot(ops.M_bulk * ones_b) - area) > 1e-12 ||
      std::abs(ones_s.dot(ops.M_surf * ones_s) - perimeter) > 1e-12)
    throw assembly_error("mass matrix volume does not match mesh measures");
}

void check_degenerate_elements(const BulkSurfaceMesh& mesh) {
  for (std::size_t t = 0; t < mesh.element_areas.size(); ++t)
    if (!(mesh.element_areas[t] > 1e-14))
      throw assembly_error("degenerate element " + std::to_string(t));
}

}  // namespace

FeOperators assemble_operators(const BulkSurfaceMesh& mesh, int n_threads) {
  check_degenerate_elements(mesh);
  const int nt = resolve_thread_count(n_threads);
  auto ops = reduce_operators(mesh, bulk_stiffness_slots(mesh, nt));
  check_operator_invariants(ops, mesh);
  return ops;
}

FeOperators assemble_operators_reference(const BulkSurfaceMesh& mesh) {
  check_degenerate_elements(mesh);
  // Same math as the parallel path, as one plain serial loop.
  std::vector<BulkLocal> slots(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto g = basis_gradients(mesh, t);
    const double area = mesh.element_areas[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) slots[t].stiff[i][j] = area * dot(g[i], g[j]);
  }
  auto ops = reduce_operators(mesh, slots);
  check_operator_invariants(ops, mesh);
  return ops;
}

std::pair<SpMat, SpMat> weighted_stiffness(const FeOperators& ops,
                                           const BulkSurfaceMesh& mesh,
                                           const Vector& weight_bulk,
                                           const Vector& weight_surf) {
  const int nb = mesh.n_bulk();
  const int ns = mesh.n_surface();
  if (weight_bulk.size() != nb || weight_surf.size() != ns)
    throw assembly_error("mobility weight vector sizes do not match the mesh");
  for (int i = 0; i < nb; ++i)
    if (!(weight_bulk[i] > 0.0))
      throw model_error("mobility bound violated: non-positive bulk weight at vertex " +
                        std::to_string(i));
  for (int j = 0; j < ns; ++j)
    if (!(weight_surf[j] > 0.0))
      throw model_error(
          "mobility bound violated: non-positive surface weight at vertex " +
          std::to_string(j));

  const int nt = resolve_thread_count(0);
  const auto n = static_cast<std::int64_t>(mesh.triangles.size());
  std::vector<BulkLocal> slots(mesh.triangles.size());
  (void)nt;
#if defined(BSPHASE_HAVE_OPENMP)
#pragma omp parallel for num_threads(nt) schedule(static)
#endif
  for (std::int64_t t = 0; t < n; ++t) {
    const auto& tri = mesh.triangles[t];
    const auto g = basis_gradients(mesh, static_cast<std::size_t>(t));
    // The linear interpolant of the weight integrates to its nodal mean
    // against the constant gradient products: exact quadrature.
    const double mean_weight =
        (weight_bulk[tri[0]] + weight_bulk[tri[1]] + weight_bulk[tri[2]]) / 3.0;
    const double factor = mesh.element_areas[t] * mean_weight;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) slots[t].stiff[i][j] = factor * dot(g[i], g[j]);
  }

  std::vector<Eigen::Triplet<double>> tb;
  tb.reserve(9 * mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        tb.emplace_back(mesh.triangles[t][i], mesh.triangles[t][j],
                        slots[t].stiff[i][j]);
  SpMat a_bulk_w(nb, nb);
  a_bulk_w.setFromTriplets(tb.begin(), tb.end());

  std::vector<Eigen::Triplet<double>> ts;
  ts.reserve(4u * ns);
  for (int e = 0; e < ns; ++e) {
    const int a = e, b = (e + 1) % ns;
    const double k =
        (weight_surf[a] + weight_surf[b]) / 2.0 / mesh.edge_lengths[e];
    ts.emplace_back(a, a, k);
    ts.emplace_back(b, b, k);
    ts.emplace_back(a, b, -k);
    ts.emplace_back(b, a, -k);
  }
  SpMat a_surf_w(ns, ns);
  a_surf_w.setFromTriplets(ts.begin(), ts.end());
  (void)ops;
  return {std::move(a_bulk_w), std::move(a_surf_w)};
}

VelocityTable VelocityTable::steady(VelocitySample sample) {
  VelocityTable table;
  table.times.push_back(0.0);
  table.samples.push_back(std::move(sample));
  return table;
}

const VelocitySample& VelocityTable::at(double t) const {
  if (samples.empty()) throw config_error("velocity table is empty");
  std::size_t lo = 0;
  for (std::size_t i = 1; i < times.size() && times[i] <= t; ++i) lo = i;
  return samples[lo];
}

void validate_velocity(const BulkSurfaceMesh& mesh, const VelocitySample& vel) {
  if (static_cast<int>(vel.v_nodes.size()) != mesh.n_bulk())
    throw config_error("bulk velocity has " + std::to_string(vel.v_nodes.size()) +
                       " nodes, mesh has " + std::to_string(mesh.n_bulk()));
  if (static_cast<int>(vel.w_nodes.size()) != mesh.n_surface())
    throw config_error("surface velocity has " + std::to_string(vel.w_nodes.size()) +
                       " nodes, boundary has " + std::to_string(mesh.n_surface()));
  for (int j = 0; j < mesh.n_surface(); ++j) {
    const double normal_part = dot(vel.w_nodes[j], vertex_normal(mesh, j));
    if (std::abs(normal_part) > 1e-12 * std::max(1.0, norm(vel.w_nodes[j])))
      throw config_error("surface velocity is not tangential at surface vertex " +
                         std::to_string(j) + " (w·n = " +
                         std::to_string(normal_part) + ")");
  }
}

double max_element_divergence(const BulkSurfaceMesh& mesh, const VelocitySample& vel) {
  double worst = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto g = basis_gradients(mesh, t);
    double div = 0.0;
    for (int i = 0; i < 3; ++i) div += dot(vel.v_nodes[mesh.triangles[t][i]], g[i]);
    worst = std::max(worst, std::abs(div));
  }
  return worst;
}

namespace {

struct ConvectionSlots {
  std::vector<std::array<double, 3>> bulk;  ///< per-element load contributions
};

/// Per-element bulk convection contributions with the 3-point mid-edge rule
/// (exact for the quadratic integrand φ v·∇ζ).
ConvectionSlots bulk_convection_slots(const BulkSurfaceMesh& mesh,
                                      const Vector& field_bulk,
                                      const VelocitySample& vel, int nt) {
  ConvectionSlots slots;
  slots.bulk.resize(mesh.triangles.size());
  const auto n = static_cast<std::int64_t>(mesh.triangles.size());
  (void)nt;
#if defined(BSPHASE_HAVE_OPENMP)
#pragma omp parallel for num_threads(nt) schedule(static)
#endif
  for (std::int64_t t = 0; t < n; ++t) {
    const auto& tri = mesh.triangles[t];
    const auto g = basis_gradients(mesh, static_cast<std::size_t>(t));
    const double third_area = mesh.element_areas[t] / 3.0;
    Vec2 flux{0.0, 0.0};  // sum over midpoints of (φ v) — shared by all i
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k], b = tri[(k + 1) % 3];
      const double phi_mid = 0.5 * (field_bulk[a] + field_bulk[b]);
      const Vec2 v_mid = 0.5 * (vel.v_nodes[a] + vel.v_nodes[b]);
      flux = flux + phi_mid * v_mid;
    }
    for (int i = 0; i < 3; ++i) slots.bulk[t][i] = third_area * dot(flux, g[i]);
  }
  return slots;
}

std::pair<Vector, Vector> reduce_convection(const BulkSurfaceMesh& mesh,
                                            const ConvectionSlots& slots,
                                            const Vector& field_surf,
                                            const VelocitySample& vel) {
  Vector b_bulk = Vector::Zero(mesh.n_bulk());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    for (int i = 0; i < 3; ++i) b_bulk[mesh.triangles[t][i]] += slots.bulk[t][i];

  // Surface load with Simpson's rule per edge (exact for the quadratic ψ w·t̂).
  const int ns = mesh.n_surface();
  Vector b_surf = Vector::Zero(ns);
  for (int e = 0; e < ns; ++e) {
    const int a = e, b = (e + 1) % ns;
    const double len = mesh.edge_lengths[e];
    const Vec2 pa = mesh.vertices[mesh.trace_map[a]];
    const Vec2 pb = mesh.vertices[mesh.trace_map[b]];
    const Vec2 tangent = (1.0 / len) * (pb - pa);
    const double ua = dot(vel.w_nodes[a], tangent);
    const double ub = dot(vel.w_nodes[b], tangent);
    const double psi_mid = 0.5 * (field_surf[a] + field_surf[b]);
    const double u_mid = 0.5 * (ua + ub);
    const double integral =
        (len / 6.0) * (field_surf[a] * ua + 4.0 * psi_mid * u_mid + field_surf[b] * ub);
    b_surf[a] -= integral / len;
    b_surf[b] += integral / len;
  }
  return {std::move(b_bulk), std::move(b_surf)};
}

void check_convection_inputs(const BulkSurfaceMesh& mesh, const Vector& field_bulk,
                             const Vector& field_surf, const VelocitySample& vel) {
  if (field_bulk.size() != mesh.n_bulk() || field_surf.size() != mesh.n_surface())
    throw assembly_error("convection field sizes do not match the mesh");
  validate_velocity(mesh, vel);
}

}  // namespace

std::pair<Vector, Vector> convection_load(const FeOperators& ops,
                                          const BulkSurfaceMesh& mesh,
                                          const Vector& field_bulk,
                                          const Vector& field_surf,
                                          const VelocitySample& vel, int n_threads) {
  (void)ops;
  check_convection_inputs(mesh, field_bulk, field_surf, vel);
  const int nt = resolve_thread_count(n_threads);
  return reduce_convection(mesh, bulk_convection_slots(mesh, field_bulk, vel, nt),
                           field_surf, vel);
}

std::pair<Vector, Vector> convection_load_reference(const BulkSurfaceMesh& mesh,
                                                    const Vector& field_bulk,
                                                    const Vector& field_surf,
                                                    const VelocitySample& vel) {
  check_convection_inputs(mesh, field_bulk, field_surf, vel);
  ConvectionSlots slots;
  slots.bulk.resize(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto g = basis_gradients(mesh, t);
    const double third_area = mesh.element_areas[t] / 3.0;
    Vec2 flux{0.0, 0.0};
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k], b = tri[(k + 1) % 3];
      flux = flux + (0.5 * (field_bulk[a] + field_bulk[b])) *
                        (0.5 * (vel.v_nodes[a] + vel.v_nodes[b]));
    }
    for (int i = 0; i < 3; ++i) slots.bulk[t][i] = third_area * dot(flux, g[i]);
  }
  return reduce_convection(mesh, slots, field_surf, vel);
}

VelocitySample builtin_velocity(const std::string& name, double magnitude,
                                const BulkSurfaceMesh& mesh) {
  VelocitySample out;
  out.v_nodes.assign(mesh.n_bulk(), Vec2{0.0, 0.0});
  out.w_nodes.assign(mesh.n_surface(), Vec2{0.0, 0.0});
  if (name == "zero") {
    // nothing to fill in
  } else if (name == "rotation") {
    if (mesh.shape != MeshShape::unit_disk)
      throw config_error(
          "rotation velocity requires the unit disk: the field is not "
          "tangential at the corners of the square");
    for (int i = 0; i < mesh.n_bulk(); ++i) {
      const Vec2 p = mesh.vertices[i];
      out.v_nodes[i] = magnitude * perp(p);
    }
    for (int j = 0; j < mesh.n_surface(); ++j)
      out.w_nodes[j] = magnitude * perp(mesh.vertices[mesh.trace_map[j]]);
  } else if (name == "surface_slide") {
    for (int j = 0; j < mesh.n_surface(); ++j)
      out.w_nodes[j] = magnitude * vertex_tangent(mesh, j);
  } else {
    throw config_error("unknown velocity field '" + name +
                       "' (supported: zero, rotation, surface_slide)");
  }
  validate_velocity(mesh, out);
  return out;
}

}  // namespace bsphase
