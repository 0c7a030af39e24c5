/// \file geometry.hpp
/// \brief Triangulated bulk meshes of the unit disk and unit square with an
///        extracted boundary (surface) mesh: trace map, measures, normals,
///        arc-length parametrization, and plain-text import/export.

#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace bsphase {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 a);
/// Rotate by +90 degrees (counterclockwise): (x,y) -> (-y,x).
inline Vec2 perp(Vec2 a) { return {-a.y, a.x}; }

enum class MeshShape { unit_square, unit_disk };

MeshShape parse_shape(const std::string& name);  ///< throws config_error
std::string shape_name(MeshShape shape);

/// A conforming triangulation of a simply connected planar domain together
/// with its boundary curve discretized as a closed polygonal chain.
///
/// Orientation conventions: triangles are counterclockwise (positive signed
/// area); boundary edges traverse the boundary counterclockwise, so edge j
/// runs from surface vertex j to surface vertex (j+1) mod n_surface().
struct BulkSurfaceMesh {
  MeshShape shape = MeshShape::unit_square;
  int resolution = 0;

  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<int, 2>> boundary_edges;
  std::vector<int> trace_map;        ///< surface vertex -> bulk vertex
  std::vector<int> bulk_to_surface;  ///< bulk vertex -> surface vertex or -1

  std::vector<double> element_areas;  ///< per triangle, strictly positive
  std::vector<double> edge_lengths;   ///< per boundary edge
  std::vector<Vec2> outward_normals;  ///< per boundary edge, unit length

  int n_bulk() const { return static_cast<int>(vertices.size()); }
  int n_surface() const { return static_cast<int>(trace_map.size()); }
};

/// Generate the built-in meshes. resolution >= 2; mesh size decreases
/// monotonically with resolution. Disk boundary vertices lie exactly on the
/// unit circle with uniform angular spacing.
BulkSurfaceMesh generate_mesh(MeshShape shape, int resolution);

/// (|Omega|, |Gamma|) = (sum of element areas, sum of boundary edge lengths).
std::pair<double, double> measures(const BulkSurfaceMesh& mesh);

/// Signed triangle area: positive for counterclockwise (a,b,c).
double signed_area(Vec2 a, Vec2 b, Vec2 c);

/// Unit outward normal of the directed boundary edge a->b (boundary oriented
/// counterclockwise). Reversing the edge flips the sign.
Vec2 edge_outward_normal(Vec2 a, Vec2 b);

/// Unit outward normal at a surface vertex: normalized bisector of the two
/// adjacent edge normals.
Vec2 vertex_normal(const BulkSurfaceMesh& mesh, int surf_idx);

/// Unit tangent at a surface vertex pointing in the counterclockwise
/// traversal direction; exactly perpendicular to vertex_normal.
Vec2 vertex_tangent(const BulkSurfaceMesh& mesh, int surf_idx);

/// Cumulative arc length of each surface vertex measured from surface
/// vertex 0 along the counterclockwise traversal.
std::vector<double> arclength_coordinates(const BulkSurfaceMesh& mesh);

/// Largest edge length over all triangles (the mesh size h).
double mesh_size(const BulkSurfaceMesh& mesh);

/// Plain-text export: vertex table (id x y), triangle table, boundary-edge
/// table; whitespace-delimited, one record per line.
void write_mesh(std::ostream& out, const BulkSurfaceMesh& mesh);

/// Inverse of write_mesh. Recomputes all derived quantities and validates
/// orientation and boundary topology; throws assembly_error on bad input.
BulkSurfaceMesh read_mesh(std::istream& in);

}  // namespace bsphase
