/// \file geometry.cpp
/// \brief Mesh generation (structured square grid, concentric-ring disk),
///        boundary extraction, validation, and plain-text I/O.

#include "bsphase/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "bsphase/errors.hpp"

namespace bsphase {

double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }

double signed_area(Vec2 a, Vec2 b, Vec2 c) { return 0.5 * cross(b - a, c - a); }

MeshShape parse_shape(const std::string& name) {
  if (name == "unit_square") return MeshShape::unit_square;
  if (name == "unit_disk") return MeshShape::unit_disk;
  throw config_error("unknown mesh shape '" + name +
                     "' (supported: unit_square, unit_disk)");
}

std::string shape_name(MeshShape shape) {
  return shape == MeshShape::unit_square ? "unit_square" : "unit_disk";
}

Vec2 edge_outward_normal(Vec2 a, Vec2 b) {
  const Vec2 e = b - a;
  const double len = norm(e);
  if (len <= 0.0) throw assembly_error("degenerate boundary edge (zero length)");
  // For a counterclockwise boundary the outward direction is the edge vector
  // rotated by -90 degrees.
  return {e.y / len, -e.x / len};
}

namespace {

/// Fill derived fields (areas, lengths, normals, trace map inverse) and check
/// the structural invariants shared by generated and imported meshes.
void finalize_and_validate(BulkSurfaceMesh& mesh) {
  const int nb = mesh.n_bulk();
  const int ns = static_cast<int>(mesh.boundary_edges.size());

  // --- element areas (positive orientation required) --------------------
  mesh.element_areas.resize(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      if (tri[k] < 0 || tri[k] >= nb)
        throw assembly_error("triangle " + std::to_string(t) +
                             " references vertex " + std::to_string(tri[k]) +
                             " outside the vertex table");
    }
    const double area =
        signed_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
    if (!(area > 1e-14))
      throw assembly_error("element " + std::to_string(t) +
                           " is degenerate or misoriented (signed area " +
                           std::to_string(area) + ")");
    mesh.element_areas[t] = area;
  }

  // --- boundary cycle: one closed counterclockwise loop -----------------
  if (ns < 3) throw assembly_error("boundary must contain at least 3 edges");
  std::map<int, int> next;  // source bulk vertex -> successor bulk vertex
  for (const auto& e : mesh.boundary_edges) {
    if (e[0] < 0 || e[0] >= nb || e[1] < 0 || e[1] >= nb || e[0] == e[1])
      throw assembly_error("invalid boundary edge (" + std::to_string(e[0]) +
                           ", " + std::to_string(e[1]) + ")");
    if (!next.emplace(e[0], e[1]).second)
      throw assembly_error("boundary vertex " + std::to_string(e[0]) +
                           " has two outgoing edges");
  }
  int walker = mesh.boundary_edges[0][0];
  for (int i = 0; i < ns; ++i) {
    auto it = next.find(walker);
    if (it == next.end())
      throw assembly_error("boundary chain breaks at vertex " + std::to_string(walker));
    walker = it->second;
  }
  if (walker != mesh.boundary_edges[0][0])
    throw assembly_error("boundary edges do not form a single closed cycle");

  // --- trace map: surface vertex j = source of boundary edge j ----------
  mesh.trace_map.resize(ns);
  for (int j = 0; j < ns; ++j) {
    mesh.trace_map[j] = mesh.boundary_edges[j][0];
    if (mesh.boundary_edges[j][1] != mesh.boundary_edges[(j + 1) % ns][0])
      throw assembly_error("boundary edge table is not stored in cycle order");
  }
  mesh.bulk_to_surface.assign(nb, -1);
  for (int j = 0; j < ns; ++j) mesh.bulk_to_surface[mesh.trace_map[j]] = j;

  // --- conformity: boundary edges used once, interior edges twice -------
  std::map<std::pair<int, int>, int> edge_use;
  for (const auto& tri : mesh.triangles)
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k], b = tri[(k + 1) % 3];
      ++edge_use[{std::min(a, b), std::max(a, b)}];
    }
  for (const auto& e : mesh.boundary_edges) {
    auto it = edge_use.find({std::min(e[0], e[1]), std::max(e[0], e[1])});
    if (it == edge_use.end() || it->second != 1)
      throw assembly_error("boundary edge (" + std::to_string(e[0]) + ", " +
                           std::to_string(e[1]) +
                           ") is not a once-used triangulation edge");
  }
  std::size_t boundary_like = 0;
  for (const auto& [key, count] : edge_use) {
    if (count == 1)
      ++boundary_like;
    else if (count != 2)
      throw assembly_error("non-conforming edge shared by " +
                           std::to_string(count) + " triangles");
  }
  if (boundary_like != static_cast<std::size_t>(ns))
    throw assembly_error("triangulation boundary does not match the edge table");

  // Euler formula for a triangulated topological disk: V - E + F = 1.
  const auto euler = static_cast<std::int64_t>(nb) -
                     static_cast<std::int64_t>(edge_use.size()) +
                     static_cast<std::int64_t>(mesh.triangles.size());
  if (euler != 1)
    throw assembly_error("mesh is not a simply connected disk (V - E + F = " +
                         std::to_string(euler) + ")");

  // --- boundary edge lengths and outward normals ------------------------
  mesh.edge_lengths.resize(ns);
  mesh.outward_normals.resize(ns);
  for (int j = 0; j < ns; ++j) {
    const Vec2 a = mesh.vertices[mesh.boundary_edges[j][0]];
    const Vec2 b = mesh.vertices[mesh.boundary_edges[j][1]];
    mesh.edge_lengths[j] = norm(b - a);
    mesh.outward_normals[j] = edge_outward_normal(a, b);
  }
}

BulkSurfaceMesh make_unit_square(int r) {
  BulkSurfaceMesh mesh;
  mesh.shape = MeshShape::unit_square;
  mesh.resolution = r;

  const int n = r + 1;
  const auto vid = [n](int i, int j) { return j * n + i; };
  mesh.vertices.reserve(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      mesh.vertices.push_back({static_cast<double>(i) / r, static_cast<double>(j) / r});

  mesh.triangles.reserve(2u * r * r);
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < r; ++i) {
      const int v00 = vid(i, j), v10 = vid(i + 1, j);
      const int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      mesh.triangles.push_back({v00, v10, v11});
      mesh.triangles.push_back({v00, v11, v01});
    }

  // Counterclockwise boundary starting at the origin corner.
  std::vector<int> loop;
  loop.reserve(4u * r);
  for (int i = 0; i < r; ++i) loop.push_back(vid(i, 0));
  for (int j = 0; j < r; ++j) loop.push_back(vid(r, j));
  for (int i = r; i > 0; --i) loop.push_back(vid(i, r));
  for (int j = r; j > 0; --j) loop.push_back(vid(0, j));
  for (std::size_t k = 0; k < loop.size(); ++k)
    mesh.boundary_edges.push_back({loop[k], loop[(k + 1) % loop.size()]});

  finalize_and_validate(mesh);
  return mesh;
}

BulkSurfaceMesh make_unit_disk(int r) {
  BulkSurfaceMesh mesh;
  mesh.shape = MeshShape::unit_disk;
  mesh.resolution = r;

  // Concentric rings: ring k carries 6k vertices at radius k/r with uniform
  // angles. Uniform boundary spacing is deliberate: it makes divergence-free
  // tangential convection loads vanish to machine precision on constants.
  const auto ring_start = [](int k) { return 1 + 3 * k * (k - 1); };
  mesh.vertices.push_back({0.0, 0.0});
  for (int k = 1; k <= r; ++k) {
    const double radius = static_cast<double>(k) / r;
    const int count = 6 * k;
    for (int j = 0; j < count; ++j) {
      const double angle = 2.0 * M_PI * j / count;
      mesh.vertices.push_back({radius * std::cos(angle), radius * std::sin(angle)});
    }
  }

  // Innermost fan around the center vertex.
  for (int j = 0; j < 6; ++j)
    mesh.triangles.push_back({0, ring_start(1) + j, ring_start(1) + (j + 1) % 6});

  // Zipper between consecutive rings; integer cross-multiplication picks the
  // diagonal, so the construction is exactly reproducible.
  for (int k = 2; k <= r; ++k) {
    const int m = 6 * (k - 1), n = 6 * k;
    const int si = ring_start(k - 1), so = ring_start(k);
    int i = 0, o = 0;
    while (i < m || o < n) {
      const bool advance_outer =
          o < n && (i == m || static_cast<std::int64_t>(o + 1) * m <=
                                  static_cast<std::int64_t>(i + 1) * n);
      if (advance_outer) {
        mesh.triangles.push_back({si + i % m, so + o % n, so + (o + 1) % n});
        ++o;
      } else {
        mesh.triangles.push_back({si + i % m, so + o % n, si + (i + 1) % m});
        ++i;
      }
    }
  }

  const int ns = 6 * r;
  for (int j = 0; j < ns; ++j)
    mesh.boundary_edges.push_back({ring_start(r) + j, ring_start(r) + (j + 1) % ns});

  finalize_and_validate(mesh);
  return mesh;
}

}  // namespace

BulkSurfaceMesh generate_mesh(MeshShape shape, int resolution) {
  if (resolution < 2)
    throw config_error("mesh resolution must be at least 2 (got " +
                       std::to_string(resolution) + ")");
  if (resolution > 1024)
    throw config_error("mesh resolution above 1024 is not supported");
  return shape == MeshShape::unit_square ? make_unit_square(resolution)
                                         : make_unit_disk(resolution);
}

std::pair<double, double> measures(const BulkSurfaceMesh& mesh) {
  double area = 0.0, perimeter = 0.0;
  for (double a : mesh.element_areas) area += a;
  for (double l : mesh.edge_lengths) perimeter += l;
  return {area, perimeter};
}

Vec2 vertex_normal(const BulkSurfaceMesh& mesh, int surf_idx) {
  const int ns = mesh.n_surface();
  const Vec2 n_prev = mesh.outward_normals[(surf_idx + ns - 1) % ns];
  const Vec2 n_next = mesh.outward_normals[surf_idx];
  const Vec2 sum = n_prev + n_next;
  const double len = norm(sum);
  if (len <= 1e-14)
    throw assembly_error("undefined vertex normal at surface vertex " +
                         std::to_string(surf_idx) + " (cusp)");
  return {sum.x / len, sum.y / len};
}

Vec2 vertex_tangent(const BulkSurfaceMesh& mesh, int surf_idx) {
  return perp(vertex_normal(mesh, surf_idx));
}

std::vector<double> arclength_coordinates(const BulkSurfaceMesh& mesh) {
  std::vector<double> s(mesh.n_surface(), 0.0);
  for (int j = 1; j < mesh.n_surface(); ++j)
    s[j] = s[j - 1] + mesh.edge_lengths[j - 1];
  return s;
}

double mesh_size(const BulkSurfaceMesh& mesh) {
  double h = 0.0;
  for (const auto& tri : mesh.triangles)
    for (int k = 0; k < 3; ++k)
      h = std::max(h, norm(mesh.vertices[tri[k]] - mesh.vertices[tri[(k + 1) % 3]]));
  return h;
}

void write_mesh(std::ostream& out, const BulkSurfaceMesh& mesh) {
  out.precision(17);
  out << "bsphase-mesh 1\n";
  out << "shape " << shape_name(mesh.shape) << "\n";
  out << "resolution " << mesh.resolution << "\n";
  out << "vertices " << mesh.n_bulk() << "\n";
  for (int i = 0; i < mesh.n_bulk(); ++i)
    out << i << " " << mesh.vertices[i].x << " " << mesh.vertices[i].y << "\n";
  out << "triangles " << mesh.triangles.size() << "\n";
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    out << t << " " << mesh.triangles[t][0] << " " << mesh.triangles[t][1] << " "
        << mesh.triangles[t][2] << "\n";
  out << "boundary_edges " << mesh.boundary_edges.size() << "\n";
  for (std::size_t e = 0; e < mesh.boundary_edges.size(); ++e)
    out << e << " " << mesh.boundary_edges[e][0] << " " << mesh.boundary_edges[e][1]
        << "\n";
}

BulkSurfaceMesh read_mesh(std::istream& in) {
  BulkSurfaceMesh mesh;
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "bsphase-mesh" || version != 1)
    throw assembly_error("unrecognized mesh file header");
  std::string key, shape;
  if (!(in >> key >> shape) || key != "shape")
    throw assembly_error("mesh file: expected 'shape'");
  mesh.shape = parse_shape(shape);
  if (!(in >> key >> mesh.resolution) || key != "resolution")
    throw assembly_error("mesh file: expected 'resolution'");

  std::size_t count = 0;
  if (!(in >> key >> count) || key != "vertices")
    throw assembly_error("mesh file: expected vertex table");
  mesh.vertices.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t id;
    if (!(in >> id >> mesh.vertices[i].x >> mesh.vertices[i].y) || id != i)
      throw assembly_error("mesh file: bad vertex record " + std::to_string(i));
  }
  if (!(in >> key >> count) || key != "triangles")
    throw assembly_error("mesh file: expected triangle table");
  mesh.triangles.resize(count);
  for (std::size_t t = 0; t < count; ++t) {
    std::size_t id;
    auto& tri = mesh.triangles[t];
    if (!(in >> id >> tri[0] >> tri[1] >> tri[2]) || id != t)
      throw assembly_error("mesh file: bad triangle record " + std::to_string(t));
  }
  if (!(in >> key >> count) || key != "boundary_edges")
    throw assembly_error("mesh file: expected boundary-edge table");
  mesh.boundary_edges.resize(count);
  for (std::size_t e = 0; e < count; ++e) {
    std::size_t id;
    auto& edge = mesh.boundary_edges[e];
    if (!(in >> id >> edge[0] >> edge[1]) || id != e)
      throw assembly_error("mesh file: bad boundary-edge record " + std::to_string(e));
  }
  finalize_and_validate(mesh);
  return mesh;
}

}  // namespace bsphase
