/// \file model.cpp
/// \brief Coupling parameters, potentials, mobilities, and the discrete
///        energy/mass functionals.

#include "bsphase/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>

#include "bsphase/errors.hpp"

namespace bsphase {

TriState TriState::finite(double v) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw model_error("finite coupling coefficient must be strictly positive (got " +
                      std::to_string(v) + ")");
  return {Tag::finite, v};
}

double h_of(TriState x) { return x.is_finite() ? 1.0 / x.value : 0.0; }

TriState parse_tristate(const std::string& text) {
  std::string lower;
  for (char c : text) lower.push_back(static_cast<char>(std::tolower(c)));
  if (lower == "inf" || lower == "infinity") return TriState::infinite();
  char* end = nullptr;
  const double v = std::strtod(lower.c_str(), &end);
  if (end == lower.c_str() || *end != '\0' || !std::isfinite(v) || v < 0.0)
    throw config_error("coupling coefficient must be 0, a positive real, or 'inf' (got '" +
                       text + "')");
  return v == 0.0 ? TriState::zero() : TriState::finite(v);
}

std::string format_tristate(TriState x) {
  if (x.is_zero()) return "0";
  if (x.is_infinite()) return "inf";
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", x.value);
  return buffer;
}

void validate_params(const CouplingParams& params, double area, double perimeter) {
  if (!(params.eps > 0.0) || !(params.eps_surf > 0.0) || !(params.kappa > 0.0))
    throw config_error("interface widths eps, eps_surf and weight kappa must be positive");
  const double compatibility = params.alpha * params.beta * area + perimeter;
  const double scale = std::abs(params.alpha * params.beta) * area + perimeter;
  if (std::abs(compatibility) <= 1e-12 * std::max(1.0, scale))
    throw config_error(
        "incompatible trace weights: alpha*beta*|Omega| + |Gamma| = " +
        std::to_string(compatibility) +
        " but the mean-value structure requires it to be nonzero");
}

// ===========================================================================
// Potentials
// ===========================================================================

void validate_potential(const PotentialSpec& spec) {
  const auto check_scalar = [&](const ScalarPotential& p, const char* label) {
    if (!p.value || !p.prime || !p.second || !p.convex_prime || !p.concave_prime ||
        !p.convex_second)
      throw model_error(std::string("potential ") + label +
                        " is missing one of its callables");
    if (!(p.growth >= 2.0))
      throw model_error(std::string("potential ") + label +
                        " growth exponent must be at least 2");
    double prev_convex_prime = -1e300;
    for (int i = 0; i <= 1600; ++i) {
      const double s = -8.0 + 0.01 * i;
      const double val = p.value(s);
      if (!(val >= -1e-12))
        throw model_error(std::string("potential ") + label + " negative at s = " +
                          std::to_string(s));
      const double split = p.convex_prime(s) + p.concave_prime(s);
      const double d1 = p.prime(s);
      if (std::abs(split - d1) > 1e-10 * std::max(1.0, std::abs(d1)))
        throw model_error(std::string("potential ") + label +
                          " split does not sum to the derivative at s = " +
                          std::to_string(s));
      const double cp = p.convex_prime(s);
      if (cp < prev_convex_prime - 1e-10 * std::max(1.0, std::abs(cp)))
        throw model_error(std::string("potential ") + label +
                          " convex part is not monotone at s = " + std::to_string(s));
      prev_convex_prime = cp;
      if (p.convex_second(s) < -1e-10)
        throw model_error(std::string("potential ") + label +
                          " convex part has negative curvature at s = " +
                          std::to_string(s));
      if (p.coercivity) {
        const auto [a, b] = *p.coercivity;
        if (val < a * s * s - b - 1e-12)
          throw model_error(std::string("potential ") + label +
                            " violates its coercivity bound at s = " +
                            std::to_string(s));
      }
    }
  };
  check_scalar(spec.F, "F");
  check_scalar(spec.G, "G");
}

namespace {

ScalarPotential double_well() {
  ScalarPotential p;
  p.value = [](double s) { const double r = s * s - 1.0; return 0.25 * r * r; };
  p.prime = [](double s) { return s * s * s - s; };
  p.second = [](double s) { return 3.0 * s * s - 1.0; };
  p.convex_prime = [](double s) { return s * s * s; };
  p.concave_prime = [](double s) { return -s; };
  p.convex_second = [](double s) { return 3.0 * s * s; };
  p.growth = 4.0;
  p.coercivity = std::make_pair(0.125, 1.0);
  return p;
}

/// Shared sampled table with linear interpolation and linear extrapolation.
struct SampledFunction {
  std::vector<double> s, y;

  double operator()(double x) const {
    const std::size_t n = s.size();
    if (x <= s.front())
      return y.front() + (y[1] - y[0]) / (s[1] - s[0]) * (x - s.front());
    if (x >= s.back())
      return y.back() +
             (y[n - 1] - y[n - 2]) / (s[n - 1] - s[n - 2]) * (x - s.back());
    const auto it = std::upper_bound(s.begin(), s.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - s.begin());
    const double w = (x - s[i - 1]) / (s[i] - s[i - 1]);
    return (1.0 - w) * y[i - 1] + w * y[i];
  }
};

ScalarPotential sampled_potential(std::vector<double> grid, std::vector<double> values,
                                  double growth) {
  const std::size_t n = grid.size();
  auto value_fn = std::make_shared<SampledFunction>();
  value_fn->s = grid;
  value_fn->y = std::move(values);

  // Centered first and second differences (one-sided at the ends).
  auto prime_fn = std::make_shared<SampledFunction>();
  prime_fn->s = grid;
  prime_fn->y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? i : i + 1;
    prime_fn->y[i] = (value_fn->y[hi] - value_fn->y[lo]) / (grid[hi] - grid[lo]);
  }
  auto second_fn = std::make_shared<SampledFunction>();
  second_fn->s = grid;
  second_fn->y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? i : i + 1;
    second_fn->y[i] = (prime_fn->y[hi] - prime_fn->y[lo]) / (grid[hi] - grid[lo]);
  }

  // Convex-concave split by a quadratic shift big enough to dominate the most
  // negative sampled curvature.
  double min_curvature = 0.0;
  for (double c : second_fn->y) min_curvature = std::min(min_curvature, c);
  const double shift = -min_curvature;

  ScalarPotential p;
  p.value = [value_fn](double x) { return (*value_fn)(x); };
  p.prime = [prime_fn](double x) { return (*prime_fn)(x); };
  p.second = [second_fn](double x) { return (*second_fn)(x); };
  p.convex_prime = [prime_fn, shift](double x) { return (*prime_fn)(x) + shift * x; };
  p.concave_prime = [shift](double x) { return -shift * x; };
  p.convex_second = [second_fn, shift](double x) { return (*second_fn)(x) + shift; };
  p.growth = growth;
  return p;
}

}  // namespace

PotentialSpec builtin_potential(const std::string& name) {
  if (name != "double_well")
    throw config_error("unknown potential '" + name + "' (supported: double_well)");
  PotentialSpec spec;
  spec.name = name;
  spec.F = double_well();
  spec.G = double_well();
  validate_potential(spec);
  return spec;
}

PotentialSpec user_potential(double growth_p, double growth_q,
                             const std::vector<std::array<double, 3>>& samples) {
  if (samples.size() < 5)
    throw model_error("user potential table needs at least 5 samples");
  std::vector<double> grid, f_values, g_values;
  for (const auto& row : samples) {
    if (!grid.empty() && !(row[0] > grid.back()))
      throw model_error("user potential table must be sorted by strictly increasing s");
    grid.push_back(row[0]);
    if (!(row[1] >= 0.0) || !(row[2] >= 0.0))
      throw model_error("user potential table has a negative value at s = " +
                        std::to_string(row[0]));
    f_values.push_back(row[1]);
    g_values.push_back(row[2]);
  }
  PotentialSpec spec;
  spec.name = "user";
  spec.F = sampled_potential(grid, std::move(f_values), growth_p);
  spec.G = sampled_potential(grid, std::move(g_values), growth_q);
  // Sampled validation is restricted to the covered range; outside it the
  // table extrapolates linearly and the usual checks are not meaningful.
  return spec;
}

// ===========================================================================
// Mobilities
// ===========================================================================

void validate_mobility(const MobilitySpec& spec) {
  if (!spec.m) throw model_error("mobility '" + spec.name + "' has no function");
  if (!(spec.lower > 0.0) || !(spec.upper >= spec.lower))
    throw model_error("mobility bounds must satisfy 0 < lower <= upper");
  for (int i = 0; i <= 1200; ++i) {
    const double s = -6.0 + 0.01 * i;
    const double v = spec.m(s);
    if (!(v >= spec.lower - 1e-12) || !(v <= spec.upper + 1e-12))
      throw model_error("mobility '" + spec.name + "' leaves [" +
                        std::to_string(spec.lower) + ", " + std::to_string(spec.upper) +
                        "] at s = " + std::to_string(s));
  }
}

MobilitySpec builtin_mobility(const std::string& name, double parameter) {
  MobilitySpec spec;
  spec.name = name;
  if (name == "constant") {
    if (!(parameter > 0.0))
      throw model_error("constant mobility must be strictly positive");
    spec.m = [parameter](double) { return parameter; };
    spec.lower = spec.upper = parameter;
  } else if (name == "capped_quadratic") {
    if (!(parameter > 0.0) || !(parameter <= 1.0))
      throw model_error("capped_quadratic mobility floor must lie in (0, 1]");
    spec.m = [parameter](double s) { return std::max(parameter, 1.0 - s * s); };
    spec.lower = parameter;
    spec.upper = 1.0;
  } else {
    throw config_error("unknown mobility '" + name +
                       "' (supported: constant, capped_quadratic)");
  }
  validate_mobility(spec);
  return spec;
}

// ===========================================================================
// State, energy, mass
// ===========================================================================

void check_state_sizes(const State& state, const FeOperators& ops) {
  if (state.phi.size() != ops.n_bulk() || state.mu.size() != ops.n_bulk() ||
      state.psi.size() != ops.n_surface() || state.theta.size() != ops.n_surface())
    throw model_error("state vector lengths do not match the operator sizes");
}

double energy(const State& state, const FeOperators& ops,
              const CouplingParams& params, const PotentialSpec& potentials) {
  check_state_sizes(state, ops);
  const Vector trace_mismatch = params.alpha * state.psi - ops.T * state.phi;
  if (params.K.is_zero() && trace_mismatch.cwiseAbs().maxCoeff() > 1e-8)
    throw model_error(
        "state violates the trace constraint required while K = 0 (max "
        "|alpha*psi - phi| = " +
        std::to_string(trace_mismatch.cwiseAbs().maxCoeff()) + ")");

  double total = 0.5 * params.eps * state.phi.dot(ops.A_bulk * state.phi) +
                 0.5 * params.eps_surf * params.kappa *
                     state.psi.dot(ops.A_surf * state.psi);
  for (int i = 0; i < ops.n_bulk(); ++i)
    total += ops.M_bulk_lumped[i] * potentials.F.value(state.phi[i]) / params.eps;
  for (int j = 0; j < ops.n_surface(); ++j)
    total += ops.M_surf_lumped[j] * potentials.G.value(state.psi[j]) / params.eps_surf;
  total += 0.5 * h_of(params.K) *
           trace_mismatch.dot(ops.M_surf_lumped.asDiagonal() * trace_mismatch);
  return total;
}

MassTotals mass(const State& state, const FeOperators& ops,
                const CouplingParams& params) {
  check_state_sizes(state, ops);
  MassTotals totals;
  totals.bulk = (ops.M_bulk * state.phi).sum();
  totals.surf = (ops.M_surf * state.psi).sum();
  totals.combined = params.beta * totals.bulk + totals.surf;
  return totals;
}

}  // namespace bsphase
