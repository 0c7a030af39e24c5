/// \file test_stepper.cpp
/// \brief Tests for the implicit time stepper: fixed points, agreement with a
///        dense monolithic Newton oracle on a small mesh across coupling
///        regimes, discrete conservation and energy decay, hard-constraint
///        exactness, determinism, the simulation driver, and initial-data
///        projection.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "bsphase/assembly.hpp"
#include "bsphase/diagnostics.hpp"
#include "bsphase/errors.hpp"
#include "bsphase/geometry.hpp"
#include "bsphase/model.hpp"
#include "bsphase/stepper.hpp"
#include "dense_oracle.hpp"
#include "doctest.h"

using namespace bsphase;

namespace {

struct Setup {
  BulkSurfaceMesh mesh;
  FeOperators ops;
};

Setup make_setup(MeshShape shape, int resolution) {
  Setup s;
  s.mesh = generate_mesh(shape, resolution);
  s.ops = assemble_operators(s.mesh);
  return s;
}

Vector smooth_bulk(const BulkSurfaceMesh& mesh) {
  Vector v(mesh.n_bulk());
  for (int i = 0; i < mesh.n_bulk(); ++i) {
    const Vec2 p = mesh.vertices[i];
    v[i] = 0.4 * std::sin(1.7 * p.x + 0.3) * std::cos(1.1 * p.y) + 0.05;
  }
  return v;
}

Vector smooth_surf(const BulkSurfaceMesh& mesh) {
  Vector v(mesh.n_surface());
  for (int j = 0; j < mesh.n_surface(); ++j) {
    const Vec2 p = mesh.vertices[mesh.trace_map[j]];
    v[j] = 0.3 * std::cos(2.3 * p.x) - 0.2 * std::sin(1.9 * p.y);
  }
  return v;
}

Vector random_vector(std::mt19937& rng, int n, double amp) {
  std::uniform_real_distribution<double> dist(-amp, amp);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

State initial_state(const Vector& phi, const Vector& psi) {
  State st;
  st.phi = phi;
  st.psi = psi;
  st.mu = Vector::Zero(phi.size());
  st.theta = Vector::Zero(psi.size());
  st.t = 0.0;
  return st;
}

// The dense monolithic Newton oracle lives in dense_oracle.hpp so the
// acceptance suite can drive the same reference implementation.
namespace oracle = dense_oracle;

}  // namespace

// ===========================================================================
// Configuration and input validation
// ===========================================================================

TEST_CASE("validate_step_config rejects each bad field") {
  StepConfig cfg;
  CHECK_NOTHROW(validate_step_config(cfg));
  cfg.dt = 0.0;
  CHECK_THROWS_AS(validate_step_config(cfg), config_error);
  cfg = StepConfig{};
  cfg.newton_tol = 1e-15;
  CHECK_THROWS_AS(validate_step_config(cfg), config_error);
  cfg = StepConfig{};
  cfg.newton_max_iters = 0;
  CHECK_THROWS_AS(validate_step_config(cfg), config_error);
  cfg = StepConfig{};
  cfg.stab_F = -1.0;
  CHECK_THROWS_AS(validate_step_config(cfg), config_error);
}

TEST_CASE("step rejects non-finite input and violated trace constraints") {
  const Setup s = make_setup(MeshShape::unit_square, 2);
  const auto pot = builtin_potential("double_well");
  const auto mob = builtin_mobility("constant", 1.0);
  const auto vel = builtin_velocity("zero", 0.0, s.mesh);
  StepConfig cfg;

  CouplingParams params;
  State st = initial_state(smooth_bulk(s.mesh), smooth_surf(s.mesh));
  st.phi[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(step(st, vel, s.ops, s.mesh, params, pot, mob, mob, cfg),
                  domain_error);

  params.K = TriState::zero();
  params.alpha = 1.2;
  State bad = initial_state(smooth_bulk(s.mesh), smooth_surf(s.mesh));
  CHECK_THROWS_AS(step(bad, vel, s.ops, s.mesh, params, pot, mob, mob, cfg),
                  domain_error);
}

// ===========================================================================
// Fixed points
// ===========================================================================

TEST_CASE("pure phases are fixed points in every coupling regime") {
  const Setup s = make_setup(MeshShape::unit_disk, 2);
  const auto pot = builtin_potential("double_well");
  const auto mob = builtin_mobility("constant", 1.0);
  const auto vel = builtin_velocity("zero", 0.0, s.mesh);
  StepConfig cfg;
  cfg.dt = 0.1;

  const std::vector<TriState> tags = {TriState::zero(), TriState::finite(1.0),
                                      TriState::infinite()};
  for (const auto k_tag : tags)
    for (const auto l_tag : tags) {
      CouplingParams params;
      params.K = k_tag;
      params.L = l_tag;
      CAPTURE(format_tristate(k_tag));
      CAPTURE(format_tristate(l_tag));

      const State st = initial_state(Vector::Constant(s.ops.n_bulk(), 1.0),
                                     Vector::Constant(s.ops.n_surface(), 1.0));
      const State next = step(st, vel, s.ops, s.mesh, params, pot, mob, mob, cfg);
      CHECK((next.phi.array() - 1.0).abs().maxCoeff() < 1e-10);
      CHECK((next.psi.array() - 1.0).abs().maxCoeff() < 1e-10);
      CHECK(next.mu.cwiseAbs().maxCoeff() < 1e-8);
      CHECK(next.theta.cwiseAbs().maxCoeff() < 1e-8);
      CHECK(next.t == doctest::Approx(0.1));
    }
}

// ===========================================================================
// Agreement with the dense monolithic oracle
// ===========================================================================

TEST_CASE("one step matches a dense monolithic Newton solve in every regime") {
  const Setup s = make_setup(MeshShape::unit_disk, 2);
  const auto pot = builtin_potential("double_well");
  const auto mob_b = builtin_mobility("capped_quadratic", 0.05);
  const auto mob_s = builtin_mobility("constant", 0.8);
  const auto vel = builtin_velocity("rotation", 0.7, s.mesh);

  StepConfig cfg;
  cfg.dt = 0.01;
  cfg.newton_tol = 1e-13;
  cfg.newton_max_iters = 50;

  const std::vector<std::pair<TriState, TriState>> regimes = {
      {TriState::zero(), TriState::zero()},
      {TriState::zero(), TriState::infinite()},
      {TriState::infinite(), TriState::zero()},
      {TriState::infinite(), TriState::infinite()},
      {TriState::finite(1.0), TriState::finite(2.0)}};

  for (const auto& [k_tag, l_tag] : regimes) {
    CouplingParams params;
    params.K = k_tag;
    params.L = l_tag;
    params.alpha = 1.5;
    params.beta = 0.75;
    params.eps = 0.7;
    params.eps_surf = 1.3;
    params.kappa = 0.8;
    CAPTURE(format_tristate(k_tag));
    CAPTURE(format_tristate(l_tag));

    const auto [phi0, psi0] = project_initial(smooth_bulk(s.mesh),
                                              smooth_surf(s.mesh), params, s.ops,
                                              s.mesh);
    const State st = initial_state(phi0, psi0);

    const State got = step(st, vel, s.ops, s.mesh, params, pot, mob_b, mob_s, cfg);
    const State want =
        oracle::dense_newton_step(s.mesh, params, pot, mob_b, mob_s, st, vel, cfg.dt);

    const auto close = [](const Vector& a, const Vector& b) {
      return (a - b).cwiseAbs().maxCoeff() <=
             1e-9 * std::max(1.0, b.cwiseAbs().maxCoeff());
    };
    CHECK(close(got.phi, want.phi));
    CHECK(close(got.psi, want.psi));
    CHECK(close(got.mu, want.mu));
    CHECK(close(got.theta, want.theta));
  }
}

// ===========================================================================
// Conservation, energy decay, and the energy inequality
// ===========================================================================

TEST_CASE("combined mass is conserved under rotation with finite coupling") {
  std::mt19937 rng(40);
  const Setup s = make_setup(MeshShape::unit_disk, 3);
  const auto pot = builtin_potential("double_well");
  const auto mob_b = builtin_mobility("capped_quadratic", 0.05);
  const auto mob_s = builtin_mobility("constant", 1.0);
  const auto vel = builtin_velocity("rotation", 1.0, s.mesh);
  CouplingParams params;
  params.beta = 1.25;
  StepConfig cfg;

  TimeStepper stepper(s.ops, s.mesh, params, pot, mob_b, mob_s, cfg);
  State state = initial_state(random_vector(rng, s.ops.n_bulk(), 0.8),
                              random_vector(rng, s.ops.n_surface(), 0.8));
  const double m0 = mass(state, s.ops, params).combined;
  for (int k = 0; k < 10; ++k) {
    state = stepper.step(state, vel);
    const double m = mass(state, s.ops, params).combined;
    CHECK(std::abs(m - m0) <= 1e-10 * std::max(1.0, std::abs(m0)));
  }
}

TEST_CASE("bulk and surface masses are conserved separately when L is absent") {
  std::mt19937 rng(41);
  const Setup s = make_setup(MeshShape::unit_disk, 3);
  const auto pot = builtin_potential("double_well");
  const auto mob = builtin_mobility("constant", 1.0);
  const auto vel = builtin_velocity("rotation", 1.0, s.mesh);
  CouplingParams params;
  params.L = TriState::infinite();
  StepConfig cfg;

  TimeStepper stepper(s.ops, s.mesh, params, pot, mob, mob, cfg);
  State state = initial_state(random_vector(rng, s.ops.n_bulk(), 0.8),
                              random_vector(rng, s.ops.n_surface(), 0.8));
  const auto m0 = mass(state, s.ops, params);
  for (int k = 0; k < 10; ++k) {
    state = stepper.step(state, vel);
    const auto m = mass(state, s.ops, params);
    CHECK(std::abs(m.bulk - m0.bulk) <= 1e-10 * std::max(1.0, std::abs(m0.bulk)));
    CHECK(std::abs(m.surf - m0.surf) <= 1e-10 * std::max(1.0, std::abs(m0.surf)));
  }
}

TEST_CASE("energy decreases without transport in all nine coupling regimes") {
  const Setup s = make_setup(MeshShape::unit_disk, 3);
  const auto pot = builtin_potential("double_well");
  const auto mob = builtin_mobility("constant", 1.0);
  const auto vel = builtin_velocity("zero", 0.0, s.mesh);
  StepConfig cfg;

  const std::vector<TriState> tags = {TriState::zero(), TriState::finite(1.0),
                                      TriState::infinite()};
  for (const auto k_tag : tags)
    for (const auto l_tag : tags) {
      CouplingParams params;
      params.K = k_tag;
      params.L = l_tag;
      params.alpha = 1.3;
      params.beta = 0.8;
      CAPTURE(format_tristate(k_tag));
      CAPTURE(format_tristate(l_tag));

      const auto [phi0, psi0] = project_initial(smooth_bulk(s.mesh),
                                                smooth_surf(s.mesh), params, s.ops,
                                                s.mesh);
      TimeStepper stepper(s.ops, s.mesh, params, pot, mob, mob, cfg);
      State state = initial_state(phi0, psi0);
      double e_prev = energy(state, s.ops, params, pot);
      for (int k = 0; k < 15; ++k) {
        const State prev = state;
        state = stepper.step(state, vel);
        const double e = energy(state, s.ops, params, pot);
        CHECK(e - e_prev <= 1e-11);
        const auto rec =
            record(prev, state, vel, s.ops, s.mesh, params, pot, mob, mob, cfg.dt);
        CHECK(rec.energy_ineq_residual <= 1e-10);
        e_prev = e;
      }
      CHECK(e_prev < energy(initial_state(phi0, psi0), s.ops, params, pot));
    }
}

TEST_CASE("the energy inequality holds under rotational transport") {
  const Setup s = make_setup(MeshShape::unit_disk, 3);
  const auto pot = builtin_potential("double_well");
  const auto mob_b = builtin_mobility("capped_quadratic", 0.05);
  const auto mob_s = builtin_mobility("constant", 0.6);
  const auto vel = builtin_velocity("rotation", 1.0, s.mesh);
  CouplingParams params;
  params.K = TriState::finite(1.0);
  params.L = TriState::finite(1.0);
  StepConfig cfg;

  TimeStepper stepper(s.ops, s.mesh, params, pot, mob_b, mob_s, cfg);
  State state = initial_state(smooth_bulk(s.mesh), smooth_surf(s.mesh));
  for (int k = 0; k < 10; ++k) {
    const State prev = state;
    state = stepper.step(state, vel);
    const auto rec =
        record(prev, state, vel, s.ops, s.mesh, params, pot, mob_b, mob_s, cfg.dt);
    CHECK(rec.energy_ineq_residual <= 1e-10);
    CHECK(rec.dissipation_bulk >= 0.0);
    CHECK(rec.dissipation_surf >= 0.0);
    CHECK(rec.exchange >= 0.0);
  }
}

// ===========================================================================
// Hard-constraint exactness
// ===========================================================================

TEST_CASE("hard trace constraints hold to machine precision every step") {
  const Setup s = make_setup(MeshShape::unit_disk, 3);
  const auto pot = builtin_potential("double_well");
  const auto mob = builtin_mobility("constant", 1.0);
  const auto vel = builtin_velocity("rotation", 0.8, s.mesh);
  CouplingParams params;
  params.K = TriState::zero();
  params.L = TriState::zero();
  params.alpha = 1.3;
  params.beta = 0.8;
  StepConfig cfg;

  const auto [phi0, psi0] = project_initial(smooth_bulk(s.mesh), smooth_surf(s.mesh),
                                            params, s.ops, s.mesh);
  TimeStepper stepper(s.ops, s.mesh, params, pot, mob, mob, cfg);
  State state = initial_state(phi0, psi0);
  const double m0 = mass(state, s.ops, params).combined;
  for (int k = 0; k < 5; ++k) {
    state = stepper.step(state, vel);
    double worst_u = 0.0, worst_m = 0.0;
    for (int j = 0; j < s.ops.n_surface(); ++j) {
      const int tr = s.mesh.trace_map[j];
      worst_u = std::max(worst_u,
                         std::abs(state.phi[tr] - params.alpha * state.psi[j]));
      worst_m = std::max(worst_m,
                         std::abs(state.mu[tr] - params.beta * state.theta[j]));
    }
    CHECK(worst_u <= 1e-14);
    CHECK(worst_m <= 1e-14);
    CHECK(std::abs(mass(state, s.ops, params).combined - m0) <=
          1e-10 * std::max(1.0, std::abs(m0)));
  }
}

// ===========================================================================
// Determinism
// ===========================================================================

TEST_CASE("repeated simulations are bitwise identical") {
  const Setup s = make_setup(MeshShape::unit_disk, 3);
  const auto pot = builtin_potential("double_well");
  const auto mob_b = builtin_mobility("capped_quadratic", 0.1);
  const auto mob_s = builtin_mobility("constant", 0.9);
  const auto table = VelocityTable::steady(builtin_velocity("rotation", 1.0, s.mesh));
  CouplingParams params;
  StepConfig cfg;

  const Vector phi0 = smooth_bulk(s.mesh);
  const Vector psi0 = smooth_surf(s.mesh);
  const auto run = [&] {
    return simulate(phi0, psi0, table, 5e-3, s.ops, s.mesh, params, pot, mob_b,
                    mob_s, cfg);
  };
  const Trajectory a = run();
  const Trajectory b = run();
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
    CHECK((a.snapshots[i].phi - b.snapshots[i].phi).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.snapshots[i].psi - b.snapshots[i].psi).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.snapshots[i].mu - b.snapshots[i].mu).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.snapshots[i].theta - b.snapshots[i].theta).cwiseAbs().maxCoeff() == 0.0);
  }
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].energy == b.records[i].energy);
    CHECK(a.records[i].dissipation_bulk == b.records[i].dissipation_bulk);
  }
}

// ===========================================================================
// Simulation driver
// ===========================================================================

TEST_CASE("simulate: step counts, snapshot strides, and record streaming") {
  const Setup s = make_setup(MeshShape::unit_square, 3);
  const auto pot = builtin_potential("double_well");
  const auto mob = builtin_mobility("constant", 1.0);
  const auto table = VelocityTable::steady(builtin_velocity("zero", 0.0, s.mesh));
  CouplingParams params;
  StepConfig cfg;

  const Vector phi0 = smooth_bulk(s.mesh);
  const Vector psi0 = smooth_surf(s.mesh);

  SUBCASE("zero final time yields the initial snapshot only") {
    const Trajectory traj = simulate(phi0, psi0, table, 0.0, s.ops, s.mesh, params,
                                     pot, mob, mob, cfg);
    REQUIRE(traj.snapshots.size() == 1);
    CHECK(traj.snapshot_steps == std::vector<int>{0});
    CHECK(traj.records.empty());
    CHECK(traj.snapshots[0].t == 0.0);
  }

  SUBCASE("strided snapshots always include the final state") {
    const Trajectory traj = simulate(phi0, psi0, table, 7e-3, s.ops, s.mesh, params,
                                     pot, mob, mob, cfg, 3);
    CHECK(traj.snapshot_steps == std::vector<int>{0, 3, 6, 7});
    REQUIRE(traj.records.size() == 7);
    for (std::size_t i = 0; i < traj.snapshots.size(); ++i)
      CHECK(traj.snapshots[i].t == traj.snapshot_steps[i] * cfg.dt);
  }

  SUBCASE("records stream to the sink in order with chain rules filled") {
    std::vector<DiagnosticsRecord> sunk;
    const Trajectory traj =
        simulate(phi0, psi0, table, 5e-3, s.ops, s.mesh, params, pot, mob, mob, cfg,
                 1, [&](const DiagnosticsRecord& r) { sunk.push_back(r); });
    REQUIRE(traj.records.size() == 5);
    REQUIRE(sunk.size() == 5);
    for (std::size_t i = 0; i < sunk.size(); ++i) {
      CHECK(sunk[i].t == (i + 1) * cfg.dt);
      if (i + 1 < sunk.size())
        CHECK(std::isfinite(sunk[i].chain_rule_residual));
      else
        CHECK(std::isnan(sunk[i].chain_rule_residual));
    }
    for (std::size_t i = 0; i + 1 < traj.records.size(); ++i)
      CHECK(std::isfinite(traj.records[i].chain_rule_residual));
    CHECK(std::isnan(traj.records.back().chain_rule_residual));
  }
}

TEST_CASE("simulate: a stationary pure phase stays frozen for 100 steps") {
  const Setup s = make_setup(MeshShape::unit_square, 3);
  const auto pot = builtin_potential("double_well");
  const auto mob = builtin_mobility("constant", 1.0);
  const auto table = VelocityTable::steady(builtin_velocity("zero", 0.0, s.mesh));
  CouplingParams params;
  StepConfig cfg;

  const Trajectory traj =
      simulate(Vector::Constant(s.ops.n_bulk(), 1.0),
               Vector::Constant(s.ops.n_surface(), 1.0), table, 0.1, s.ops, s.mesh,
               params, pot, mob, mob, cfg, 25);
  REQUIRE(traj.records.size() == 100);
  const auto& first = traj.records.front();
  for (const auto& rec : traj.records) {
    CHECK(std::abs(rec.energy - first.energy) <= 1e-10);
    CHECK(std::abs(rec.mass_combined - first.mass_combined) <= 1e-10);
    CHECK(rec.dissipation_bulk <= 1e-10);
    CHECK(rec.dissipation_surf <= 1e-10);
  }
  for (std::size_t i = 0; i + 1 < traj.records.size(); ++i)
    CHECK(std::abs(traj.records[i].chain_rule_residual) <= 1e-9);
  CHECK((traj.snapshots.back().phi.array() - 1.0).abs().maxCoeff() <= 1e-10);
}

// ===========================================================================
// Initial-data projection
// ===========================================================================

TEST_CASE("project_initial: trace overwrite and combined-mass adjustment") {
  std::mt19937 rng(50);
  const Setup s = make_setup(MeshShape::unit_disk, 3);
  const auto [area, perimeter] = measures(s.mesh);

  SUBCASE("soft couplings pass raw data through unchanged") {
    CouplingParams params;
    const Vector phi0 = random_vector(rng, s.ops.n_bulk(), 1.0);
    const Vector psi0 = random_vector(rng, s.ops.n_surface(), 1.0);
    const auto [phi, psi] = project_initial(phi0, psi0, params, s.ops, s.mesh);
    CHECK((phi - phi0).cwiseAbs().maxCoeff() == 0.0);
    CHECK((psi - psi0).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("a hard energy coupling overwrites the trace with alpha psi") {
    CouplingParams params;
    params.K = TriState::zero();
    params.alpha = 2.0;
    const Vector phi0 = random_vector(rng, s.ops.n_bulk(), 1.0);
    const Vector psi0 = Vector::Constant(s.ops.n_surface(), 1.0);
    const auto [phi, psi] = project_initial(phi0, psi0, params, s.ops, s.mesh);
    for (int j = 0; j < s.ops.n_surface(); ++j)
      CHECK(phi[s.mesh.trace_map[j]] == 2.0);
    CHECK((psi - psi0).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("the mean adjustment hits the target through the constant pair") {
    CouplingParams params;
    params.beta = 1.4;
    const Vector phi0 = random_vector(rng, s.ops.n_bulk(), 1.0);
    const Vector psi0 = random_vector(rng, s.ops.n_surface(), 1.0);
    const double target = 0.7;
    const auto [phi, psi] =
        project_initial(phi0, psi0, params, s.ops, s.mesh, target);

    State st = initial_state(phi, psi);
    CHECK(std::abs(mass(st, s.ops, params).combined - target) <= 5e-12);

    const double current = params.beta * (s.ops.M_bulk * phi0).sum() +
                           (s.ops.M_surf * psi0).sum();
    const double c =
        (current - target) / (params.beta * params.beta * area + perimeter);
    CHECK((phi - (phi0.array() - params.beta * c).matrix()).cwiseAbs().maxCoeff() <=
          1e-14);
    CHECK((psi - (psi0.array() - c).matrix()).cwiseAbs().maxCoeff() <= 1e-14);
  }

  SUBCASE("the hard-coupling variant keeps the trace while moving the mass") {
    CouplingParams params;
    params.K = TriState::zero();
    params.alpha = 1.5;
    params.beta = 0.75;
    const Vector phi0 = random_vector(rng, s.ops.n_bulk(), 1.0);
    const Vector psi0 = random_vector(rng, s.ops.n_surface(), 1.0);
    const auto [phi, psi] = project_initial(phi0, psi0, params, s.ops, s.mesh, 0.3);
    State st = initial_state(phi, psi);
    CHECK(std::abs(mass(st, s.ops, params).combined - 0.3) <= 5e-12);
    for (int j = 0; j < s.ops.n_surface(); ++j)
      CHECK(std::abs(phi[s.mesh.trace_map[j]] - params.alpha * psi[j]) <= 1e-13);
  }

  SUBCASE("size mismatches are rejected") {
    CouplingParams params;
    CHECK_THROWS_AS(project_initial(Vector::Zero(3), Vector::Zero(2), params, s.ops,
                                    s.mesh),
                    domain_error);
  }
}

// ===========================================================================
// Failure reporting
// ===========================================================================

TEST_CASE("Newton failure raises a solver error carrying the residual history") {
  std::mt19937 rng(60);
  const Setup s = make_setup(MeshShape::unit_disk, 2);
  const auto pot = builtin_potential("double_well");
  const auto mob = builtin_mobility("constant", 1.0);
  const auto vel = builtin_velocity("zero", 0.0, s.mesh);
  CouplingParams params;
  StepConfig cfg;
  cfg.dt = 100.0;
  cfg.newton_tol = 1e-14;
  cfg.newton_max_iters = 1;

  const State st = initial_state(random_vector(rng, s.ops.n_bulk(), 2.0),
                                 random_vector(rng, s.ops.n_surface(), 2.0));
  CHECK_THROWS_WITH_AS(step(st, vel, s.ops, s.mesh, params, pot, mob, mob, cfg),
                       doctest::Contains("residual history"), solver_error);
}

// ===========================================================================
// Stabilized linear scheme
// ===========================================================================

TEST_CASE("stabilized_linear: fixed points, conservation, determinism") {
  const Setup s = make_setup(MeshShape::unit_disk, 3);
  const auto pot = builtin_potential("double_well");
  const auto mob = builtin_mobility("constant", 1.0);
  CouplingParams params;
  StepConfig cfg;
  cfg.scheme = Scheme::stabilized_linear;

  SUBCASE("pure phases stay put") {
    const auto vel = builtin_velocity("zero", 0.0, s.mesh);
    const State st = initial_state(Vector::Constant(s.ops.n_bulk(), 1.0),
                                   Vector::Constant(s.ops.n_surface(), 1.0));
    const State next = step(st, vel, s.ops, s.mesh, params, pot, mob, mob, cfg);
    CHECK((next.phi.array() - 1.0).abs().maxCoeff() < 1e-10);
    CHECK((next.psi.array() - 1.0).abs().maxCoeff() < 1e-10);
    CHECK(next.mu.cwiseAbs().maxCoeff() < 1e-8);
  }

  SUBCASE("combined mass is conserved and runs are bitwise repeatable") {
    const auto vel = builtin_velocity("rotation", 1.0, s.mesh);
    std::mt19937 rng(61);
    const Vector phi0 = random_vector(rng, s.ops.n_bulk(), 0.8);
    const Vector psi0 = random_vector(rng, s.ops.n_surface(), 0.8);

    const auto run = [&] {
      TimeStepper stepper(s.ops, s.mesh, params, pot, mob, mob, cfg);
      State state = initial_state(phi0, psi0);
      for (int k = 0; k < 10; ++k) state = stepper.step(state, vel);
      return state;
    };
    const State a = run();
    const State b = run();
    CHECK((a.phi - b.phi).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.mu - b.mu).cwiseAbs().maxCoeff() == 0.0);

    State st0 = initial_state(phi0, psi0);
    const double m0 = mass(st0, s.ops, params).combined;
    CHECK(std::abs(mass(a, s.ops, params).combined - m0) <=
          1e-10 * std::max(1.0, std::abs(m0)));
  }
}
