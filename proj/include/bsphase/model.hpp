/// \file model.hpp
/// \brief Model data for the coupled bulk-surface phase-field system:
///        coupling parameters (including the zero/finite/infinite switches),
///        potentials with convex-concave splits, mobilities, the nodal state,
///        and the discrete energy and mass functionals.

#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bsphase/assembly.hpp"

namespace bsphase {

/// A coupling coefficient that can be zero, a strictly positive real, or
/// infinite. The three cases select different boundary-coupling regimes.
struct TriState {
  enum class Tag { zero, finite, infinite };
  Tag tag = Tag::finite;
  double value = 1.0;  ///< meaningful only when tag == finite, then > 0

  static TriState zero() { return {Tag::zero, 0.0}; }
  static TriState finite(double v);  ///< throws model_error unless v > 0
  static TriState infinite() { return {Tag::infinite, 0.0}; }

  bool is_zero() const { return tag == Tag::zero; }
  bool is_finite() const { return tag == Tag::finite; }
  bool is_infinite() const { return tag == Tag::infinite; }
};

/// Reciprocal-or-zero switch: 1/x for finite x, 0 for the two limit cases.
double h_of(TriState x);

TriState parse_tristate(const std::string& text);  ///< "0" | positive | "inf"
std::string format_tristate(TriState x);

/// Physical and coupling parameters of the system.
struct CouplingParams {
  TriState K = TriState::finite(1.0);  ///< energy-coupling coefficient
  TriState L = TriState::finite(1.0);  ///< flux-coupling coefficient
  double alpha = 1.0;                  ///< trace weight in the energy coupling
  double beta = 1.0;                   ///< trace weight in the flux coupling
  double eps = 1.0;                    ///< bulk interface width
  double eps_surf = 1.0;               ///< surface interface width
  double kappa = 1.0;                  ///< surface gradient-energy weight
};

/// Check positivity of the width parameters and the compatibility condition
/// alpha*beta*|Omega| + |Gamma| != 0 against the mesh measures; throws
/// config_error naming the computed value.
void validate_params(const CouplingParams& params, double area, double perimeter);

/// One scalar potential with a convex-concave split value' = convex' + concave'.
struct ScalarPotential {
  std::function<double(double)> value;           ///< >= 0
  std::function<double(double)> prime;
  std::function<double(double)> second;
  std::function<double(double)> convex_prime;    ///< nondecreasing
  std::function<double(double)> concave_prime;
  std::function<double(double)> convex_second;   ///< >= 0
  double growth = 4.0;                           ///< polynomial growth exponent
  std::optional<std::pair<double, double>> coercivity;  ///< value >= a s^2 - b
};

/// Bulk potential F and surface potential G.
struct PotentialSpec {
  std::string name;
  ScalarPotential F;
  ScalarPotential G;
};

/// Sampled validation of nonnegativity, the split identity, monotonicity of
/// the convex part, and the optional coercivity bound; throws model_error.
void validate_potential(const PotentialSpec& spec);

/// "double_well": F = G = W with W(s) = (s^2-1)^2/4, split s^3 + (-s),
/// growth 4, coercivity (1/8, 1).
PotentialSpec builtin_potential(const std::string& name);

/// Potentials from a sampled table with rows (s, F(s), G(s)); derivatives by
/// centered differences, values by linear interpolation (clamped linear
/// extrapolation outside the grid), convex-concave split by quadratic shift.
PotentialSpec user_potential(double growth_p, double growth_q,
                             const std::vector<std::array<double, 3>>& samples);

/// A mobility function with its uniform positive bounds.
struct MobilitySpec {
  std::string name;
  std::function<double(double)> m;
  double lower = 1.0;  ///< > 0
  double upper = 1.0;  ///< >= lower

  bool is_constant() const { return lower == upper; }
};

/// Sampled check that m stays inside [lower, upper]; throws model_error.
void validate_mobility(const MobilitySpec& spec);

/// "constant" (value = parameter) or "capped_quadratic" with
/// m(s) = max(floor, 1 - s^2), bounds [floor, 1].
MobilitySpec builtin_mobility(const std::string& name, double parameter);

/// Nodal unknowns of the coupled system at one time.
struct State {
  Vector phi;    ///< bulk order parameter
  Vector psi;    ///< surface order parameter
  Vector mu;     ///< bulk chemical potential
  Vector theta;  ///< surface chemical potential
  double t = 0.0;
};

/// Throws model_error when vector lengths do not match the operator sizes.
void check_state_sizes(const State& state, const FeOperators& ops);

/// Discrete total energy: exact gradient terms, lumped potential terms, and
/// the lumped trace-mismatch penalty weighted by h_of(K). When K is zero the
/// state must already satisfy the trace constraint (within 1e-8), since the
/// penalty is replaced by the hard constraint.
double energy(const State& state, const FeOperators& ops,
              const CouplingParams& params, const PotentialSpec& potentials);

struct MassTotals {
  double combined = 0.0;  ///< beta * bulk + surf, conserved while L is finite or zero
  double bulk = 0.0;      ///< conserved separately when L is infinite
  double surf = 0.0;
};

MassTotals mass(const State& state, const FeOperators& ops,
                const CouplingParams& params);

}  // namespace bsphase
