/// \file bench_assembly.cpp
/// \brief Timing comparison between the OpenMP assembly kernels and their
///        serial reference implementations, with a bitwise-agreement check
///        on every measured configuration.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bsphase/assembly.hpp"
#include "bsphase/geometry.hpp"

namespace {

using namespace bsphase;
using Clock = std::chrono::steady_clock;

double median_seconds(std::vector<double>& samples) {
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

template <typename Fn>
double time_median(int repeats, Fn&& fn) {
  std::vector<double> samples;
  samples.reserve(repeats);
  for (int r = 0; r < repeats; ++r) {
    const auto start = Clock::now();
    fn();
    const std::chrono::duration<double> elapsed = Clock::now() - start;
    samples.push_back(elapsed.count());
  }
  return median_seconds(samples);
}

/// Structure and values must match exactly; sorted compressed storage makes
/// the lockstep walk a bitwise comparison.
bool sparse_equal(const SpMat& a, const SpMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  if (a.nonZeros() != b.nonZeros()) return false;
  for (int k = 0; k < a.outerSize(); ++k) {
    SpMat::InnerIterator ia(a, k), ib(b, k);
    for (; ia && ib; ++ia, ++ib)
      if (ia.row() != ib.row() || ia.col() != ib.col() ||
          ia.value() != ib.value())
        return false;
    if (bool(ia) != bool(ib)) return false;
  }
  return true;
}

bool operators_equal(const FeOperators& a, const FeOperators& b) {
  return sparse_equal(a.M_bulk, b.M_bulk) && sparse_equal(a.A_bulk, b.A_bulk) &&
         sparse_equal(a.M_surf, b.M_surf) && sparse_equal(a.A_surf, b.A_surf) &&
         sparse_equal(a.T, b.T) &&
         (a.M_bulk_lumped - b.M_bulk_lumped).cwiseAbs().maxCoeff() == 0.0 &&
         (a.M_surf_lumped - b.M_surf_lumped).cwiseAbs().maxCoeff() == 0.0;
}

Vector random_vector(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = uni(rng);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Benchmark parallel operator assembly and convection loads against "
      "the serial reference kernels; every row also checks bitwise "
      "agreement between the two implementations."};

  std::vector<int> resolutions = {16, 32, 64};
  std::vector<int> threads = {1, 2, 4, 8};
  int repeats = 5;
  std::string shape_text = "unit_disk";
  app.add_option("--resolutions", resolutions, "mesh resolutions to time")
      ->delimiter(',');
  app.add_option("--threads", threads, "thread counts to time")->delimiter(',');
  app.add_option("--repeats", repeats, "timed repetitions (median reported)")
      ->check(CLI::PositiveNumber);
  app.add_option("--shape", shape_text, "unit_disk | unit_square");
  CLI11_PARSE(app, argc, argv);

  const MeshShape shape = parse_shape(shape_text);
  std::printf("%-11s %8s %8s %12s %12s %9s %8s\n", "kernel", "res", "threads",
              "serial_ms", "parallel_ms", "speedup", "bitwise");

  bool all_bitwise = true;
  for (const int res : resolutions) {
    const BulkSurfaceMesh mesh = generate_mesh(shape, res);
    const FeOperators reference = assemble_operators_reference(mesh);

    const double serial_ops =
        time_median(repeats, [&] { assemble_operators_reference(mesh); });
    for (const int nt : threads) {
      FeOperators parallel;
      const double par_ops =
          time_median(repeats, [&] { parallel = assemble_operators(mesh, nt); });
      const bool same = operators_equal(parallel, reference);
      all_bitwise = all_bitwise && same;
      std::printf("%-11s %8d %8d %12.3f %12.3f %8.2fx %8s\n", "operators", res,
                  nt, 1e3 * serial_ops, 1e3 * par_ops, serial_ops / par_ops,
                  same ? "yes" : "NO");
    }

    // Convection loads against a rotation (disk) or boundary slide (square),
    // applied to seeded random nodal fields.
    const VelocitySample vel = builtin_velocity(
        shape == MeshShape::unit_disk ? "rotation" : "surface_slide", 1.0, mesh);
    const Vector phi = random_vector(mesh.n_bulk(), 7u + res);
    const Vector psi = random_vector(mesh.n_surface(), 11u + res);
    const auto ref_load = convection_load_reference(mesh, phi, psi, vel);

    const double serial_load = time_median(
        repeats, [&] { convection_load_reference(mesh, phi, psi, vel); });
    for (const int nt : threads) {
      std::pair<Vector, Vector> load;
      const double par_load = time_median(repeats, [&] {
        load = convection_load(reference, mesh, phi, psi, vel, nt);
      });
      const bool same =
          (load.first - ref_load.first).cwiseAbs().maxCoeff() == 0.0 &&
          (load.second - ref_load.second).cwiseAbs().maxCoeff() == 0.0;
      all_bitwise = all_bitwise && same;
      std::printf("%-11s %8d %8d %12.3f %12.3f %8.2fx %8s\n", "convection",
                  res, nt, 1e3 * serial_load, 1e3 * par_load,
                  serial_load / par_load, same ? "yes" : "NO");
    }
  }

  std::printf("%s\n", all_bitwise
                          ? "all parallel results bitwise-match the reference"
                          : "BITWISE MISMATCH between parallel and reference");
  return all_bitwise ? 0 : 1;
}
