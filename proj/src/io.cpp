/// \file io.cpp
/// \brief Snapshot, VTK, and matrix writers. All floating-point values are
///        printed with %.17g so files round-trip through strtod bitwise.

#include "bsphase/io.hpp"

#include <cstdio>
#include <ostream>

#include "bsphase/errors.hpp"

namespace bsphase {

namespace {

void check_sizes(const BulkSurfaceMesh& mesh, const State& state) {
  if (state.phi.size() != mesh.n_bulk() || state.mu.size() != mesh.n_bulk() ||
      state.psi.size() != mesh.n_surface() ||
      state.theta.size() != mesh.n_surface())
    throw domain_error("snapshot state sizes do not match the mesh");
}

const char* fmt(double v) {
  static thread_local char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_bulk_snapshot_csv(std::ostream& out, const BulkSurfaceMesh& mesh,
                             const State& state) {
  check_sizes(mesh, state);
  out << "vertex,x,y,phi,mu\n";
  for (int i = 0; i < mesh.n_bulk(); ++i) {
    out << i << ',' << fmt(mesh.vertices[i].x);
    out << ',' << fmt(mesh.vertices[i].y);
    out << ',' << fmt(state.phi[i]);
    out << ',' << fmt(state.mu[i]) << '\n';
  }
}

void write_surface_snapshot_csv(std::ostream& out, const BulkSurfaceMesh& mesh,
                                const State& state) {
  check_sizes(mesh, state);
  const std::vector<double> arc = arclength_coordinates(mesh);
  out << "surface,arclength,psi,theta\n";
  for (int j = 0; j < mesh.n_surface(); ++j) {
    out << j << ',' << fmt(arc[j]);
    out << ',' << fmt(state.psi[j]);
    out << ',' << fmt(state.theta[j]) << '\n';
  }
}

void write_vtk_snapshot(std::ostream& out, const BulkSurfaceMesh& mesh,
                        const State& state) {
  check_sizes(mesh, state);
  const int n = mesh.n_bulk();
  const int m = static_cast<int>(mesh.triangles.size());
  out << "# vtk DataFile Version 3.0\n";
  out << "bulk-surface phase field snapshot t=" << fmt(state.t) << "\n";
  out << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << n << " double\n";
  for (int i = 0; i < n; ++i) {
    out << fmt(mesh.vertices[i].x);
    out << ' ' << fmt(mesh.vertices[i].y) << " 0\n";
  }
  out << "CELLS " << m << ' ' << 4 * m << '\n';
  for (const auto& tri : mesh.triangles)
    out << "3 " << tri[0] << ' ' << tri[1] << ' ' << tri[2] << '\n';
  out << "CELL_TYPES " << m << '\n';
  for (int e = 0; e < m; ++e) out << "5\n";
  out << "POINT_DATA " << n << '\n';
  out << "SCALARS phi double 1\nLOOKUP_TABLE default\n";
  for (int i = 0; i < n; ++i) out << fmt(state.phi[i]) << '\n';
  out << "SCALARS mu double 1\nLOOKUP_TABLE default\n";
  for (int i = 0; i < n; ++i) out << fmt(state.mu[i]) << '\n';
}

void write_matrix_coordinate(std::ostream& out, const SpMat& matrix) {
  // Row-major traversal for a stable line order independent of the internal
  // (column-major) storage.
  const Eigen::SparseMatrix<double, Eigen::RowMajor> by_row(matrix);
  for (int i = 0; i < by_row.outerSize(); ++i)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(by_row, i);
         it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << fmt(it.value()) << '\n';
}

}  // namespace bsphase
