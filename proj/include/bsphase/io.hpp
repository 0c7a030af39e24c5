/// \file io.hpp
/// \brief Plain-text output writers: snapshot CSVs for the bulk and surface
///        fields, legacy-VTK ASCII snapshots for external viewers, and
///        coordinate-format matrix dumps for cross-checking assembled
///        operators outside this code base.

#pragma once

#include <iosfwd>

#include "bsphase/assembly.hpp"
#include "bsphase/geometry.hpp"
#include "bsphase/model.hpp"

namespace bsphase {

/// CSV with header "vertex,x,y,phi,mu": one row per bulk vertex, values in
/// round-trip precision. Throws domain_error when the state sizes do not
/// match the mesh.
void write_bulk_snapshot_csv(std::ostream& out, const BulkSurfaceMesh& mesh,
                             const State& state);

/// CSV with header "surface,arclength,psi,theta": one row per surface vertex
/// with its cumulative arc length from surface vertex 0.
void write_surface_snapshot_csv(std::ostream& out, const BulkSurfaceMesh& mesh,
                                const State& state);

/// Legacy-VTK ASCII unstructured grid: the bulk triangulation with phi and mu
/// as point data (surface fields live in the surface CSV).
void write_vtk_snapshot(std::ostream& out, const BulkSurfaceMesh& mesh,
                        const State& state);

/// Coordinate-format text dump, one "row col value" line per stored nonzero,
/// row-major order, zero-based indices.
void write_matrix_coordinate(std::ostream& out, const SpMat& matrix);

}  // namespace bsphase
