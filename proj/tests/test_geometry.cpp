/// \file test_geometry.cpp
/// \brief Mesh generators, derived geometric data, and text round-trips.

#include "bsphase/geometry.hpp"

#include <cmath>
#include <sstream>

#include "bsphase/errors.hpp"
#include "doctest.h"

using namespace bsphase;

// Closed-form reference values: the triangulated disk of resolution r covers
// exactly the regular 6r-gon inscribed in the unit circle, whose area and
// perimeter are 3r*sin(pi/(3r)) and 12r*sin(pi/(6r)).
static double polygon_area(int r) { return 3.0 * r * std::sin(M_PI / (3.0 * r)); }
static double polygon_perimeter(int r) { return 12.0 * r * std::sin(M_PI / (6.0 * r)); }

TEST_CASE("unit square mesh: counts, measures, structure") {
  const auto mesh = generate_mesh(MeshShape::unit_square, 2);
  CHECK(mesh.n_bulk() == 9);
  CHECK(mesh.triangles.size() == 8);
  CHECK(mesh.boundary_edges.size() == 8);
  CHECK(mesh.n_surface() == 8);

  const auto [area, perimeter] = measures(mesh);
  CHECK(area == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(perimeter == doctest::Approx(4.0).epsilon(1e-14));

  for (int r : {3, 5, 8, 16}) {
    const auto m = generate_mesh(MeshShape::unit_square, r);
    CHECK(m.n_bulk() == (r + 1) * (r + 1));
    CHECK(static_cast<int>(m.triangles.size()) == 2 * r * r);
    CHECK(m.n_surface() == 4 * r);
    const auto [a, p] = measures(m);
    CHECK(a == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(p == doctest::Approx(4.0).epsilon(1e-13));
    CHECK(mesh_size(m) == doctest::Approx(std::sqrt(2.0) / r).epsilon(1e-13));
  }
}

TEST_CASE("unit disk mesh: counts and inscribed-polygon measures") {
  for (int r : {2, 3, 4, 8, 16}) {
    const auto m = generate_mesh(MeshShape::unit_disk, r);
    CHECK(m.n_bulk() == 1 + 3 * r * (r + 1));
    CHECK(static_cast<int>(m.triangles.size()) == 6 * r * r);
    CHECK(m.n_surface() == 6 * r);

    const auto [area, perimeter] = measures(m);
    CHECK(area == doctest::Approx(polygon_area(r)).epsilon(1e-12));
    CHECK(perimeter == doctest::Approx(polygon_perimeter(r)).epsilon(1e-12));

    // Boundary vertices lie on the unit circle.
    for (int j = 0; j < m.n_surface(); ++j) {
      const Vec2 p = m.vertices[m.trace_map[j]];
      CHECK(std::abs(norm(p) - 1.0) < 1e-15);
    }
  }
}

TEST_CASE("disk measures converge to pi and 2*pi under refinement") {
  double prev_area_err = 1e100, prev_h = 1e100;
  for (int r : {2, 4, 8, 16, 32}) {
    const auto m = generate_mesh(MeshShape::unit_disk, r);
    const auto [area, perimeter] = measures(m);
    const double area_err = std::abs(M_PI - area);
    CHECK(area_err < prev_area_err);
    CHECK(mesh_size(m) < prev_h);
    CHECK(std::abs(2.0 * M_PI - perimeter) < 2.0 / (r * r));
    prev_area_err = area_err;
    prev_h = mesh_size(m);
  }

  // Second-order error: eliminating the h^2 term from two resolutions should
  // land much closer to pi than either raw value.
  const auto [a16, p16] = measures(generate_mesh(MeshShape::unit_disk, 16));
  const auto [a32, p32] = measures(generate_mesh(MeshShape::unit_disk, 32));
  const double extrapolated = (4.0 * a32 - a16) / 3.0;
  CHECK(std::abs(extrapolated - M_PI) < 1e-2 * std::abs(a32 - M_PI));
}

TEST_CASE("trace map is a bijection onto boundary vertices") {
  for (auto shape : {MeshShape::unit_square, MeshShape::unit_disk}) {
    const auto m = generate_mesh(shape, 5);
    int boundary_count = 0;
    for (int i = 0; i < m.n_bulk(); ++i) {
      const int s = m.bulk_to_surface[i];
      if (s >= 0) {
        CHECK(m.trace_map[s] == i);
        ++boundary_count;
      }
    }
    CHECK(boundary_count == m.n_surface());
  }
}

TEST_CASE("signed area and edge normals") {
  CHECK(signed_area({0, 0}, {1, 0}, {0, 1}) == 0.5);
  CHECK(signed_area({0, 0}, {0, 1}, {1, 0}) == -0.5);

  const Vec2 n = edge_outward_normal({0, 0}, {2, 0});
  CHECK(n.x == 0.0);
  CHECK(n.y == -1.0);
  const Vec2 nrev = edge_outward_normal({2, 0}, {0, 0});
  CHECK(nrev.x == -n.x);
  CHECK(nrev.y == -n.y);

  for (auto shape : {MeshShape::unit_square, MeshShape::unit_disk}) {
    const auto m = generate_mesh(shape, 4);
    for (const auto& nn : m.outward_normals) CHECK(std::abs(norm(nn) - 1.0) < 1e-12);
  }
}

TEST_CASE("vertex normals and tangents") {
  // Square corner at the origin: bisector of the left and bottom normals.
  const auto sq = generate_mesh(MeshShape::unit_square, 4);
  CHECK(sq.trace_map[0] == 0);  // boundary walk starts at the origin corner
  const Vec2 corner_n = vertex_normal(sq, 0);
  CHECK(corner_n.x == doctest::Approx(-std::sqrt(0.5)).epsilon(1e-14));
  CHECK(corner_n.y == doctest::Approx(-std::sqrt(0.5)).epsilon(1e-14));

  // Mid-edge vertex on the bottom: straight outward normal (0,-1).
  const Vec2 mid_n = vertex_normal(sq, 1);
  CHECK(mid_n.x == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(mid_n.y == doctest::Approx(-1.0).epsilon(1e-14));

  // Disk: vertex normals are radial, tangents counterclockwise.
  const auto disk = generate_mesh(MeshShape::unit_disk, 6);
  for (int j = 0; j < disk.n_surface(); ++j) {
    const Vec2 p = disk.vertices[disk.trace_map[j]];
    const Vec2 nj = vertex_normal(disk, j);
    CHECK(std::abs(nj.x - p.x) < 1e-12);
    CHECK(std::abs(nj.y - p.y) < 1e-12);
    const Vec2 tj = vertex_tangent(disk, j);
    CHECK(dot(tj, nj) == 0.0);  // perpendicular by construction, exactly
    CHECK(cross(nj, tj) > 0.0);  // tangent is normal rotated counterclockwise
  }
}

TEST_CASE("arc-length coordinates accumulate to the perimeter") {
  for (auto shape : {MeshShape::unit_square, MeshShape::unit_disk}) {
    const auto m = generate_mesh(shape, 6);
    const auto s = arclength_coordinates(m);
    REQUIRE(static_cast<int>(s.size()) == m.n_surface());
    CHECK(s[0] == 0.0);
    for (std::size_t j = 1; j < s.size(); ++j) CHECK(s[j] > s[j - 1]);
    const auto [area, perimeter] = measures(m);
    (void)area;
    CHECK(s.back() + m.edge_lengths.back() ==
          doctest::Approx(perimeter).epsilon(1e-13));
  }
}

TEST_CASE("text round-trip preserves the mesh bit for bit") {
  for (auto shape : {MeshShape::unit_square, MeshShape::unit_disk}) {
    const auto m = generate_mesh(shape, 5);
    std::stringstream buffer;
    write_mesh(buffer, m);
    const auto back = read_mesh(buffer);

    CHECK(back.shape == m.shape);
    CHECK(back.resolution == m.resolution);
    REQUIRE(back.n_bulk() == m.n_bulk());
    for (int i = 0; i < m.n_bulk(); ++i) {
      CHECK(back.vertices[i].x == m.vertices[i].x);
      CHECK(back.vertices[i].y == m.vertices[i].y);
    }
    CHECK(back.triangles == m.triangles);
    CHECK(back.boundary_edges == m.boundary_edges);
    CHECK(back.trace_map == m.trace_map);
  }
}

TEST_CASE("invalid inputs are rejected") {
  CHECK_THROWS_AS(generate_mesh(MeshShape::unit_square, 1), config_error);
  CHECK_THROWS_AS(generate_mesh(MeshShape::unit_disk, 0), config_error);
  CHECK_THROWS_AS(parse_shape("triangle"), config_error);
  CHECK(parse_shape("unit_disk") == MeshShape::unit_disk);
  CHECK(shape_name(MeshShape::unit_square) == "unit_square");

  // Flipping one triangle's orientation must be caught on import.
  const auto m = generate_mesh(MeshShape::unit_square, 3);
  std::stringstream buffer;
  write_mesh(buffer, m);
  std::string text = buffer.str();
  {
    auto corrupted = m;
    std::swap(corrupted.triangles[4][0], corrupted.triangles[4][1]);
    std::stringstream bad;
    write_mesh(bad, corrupted);
    CHECK_THROWS_AS(read_mesh(bad), assembly_error);
  }
  {
    auto corrupted = m;
    corrupted.boundary_edges.pop_back();  // breaks the closed cycle
    std::stringstream bad;
    write_mesh(bad, corrupted);
    CHECK_THROWS_AS(read_mesh(bad), assembly_error);
  }
  {
    std::stringstream bad("not-a-mesh 1\n");
    CHECK_THROWS_AS(read_mesh(bad), assembly_error);
  }
}
