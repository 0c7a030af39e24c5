/// \file config.cpp
/// \brief INI-style configuration parsing with canonical serialization and
///        hashing, plus the factories that build solver objects from a
///        validated configuration.

#include "bsphase/config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "bsphase/errors.hpp"

namespace bsphase {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0' || !std::isfinite(v))
    throw config_error("key '" + key + "' needs a finite number (got '" +
                       value + "')");
  return v;
}

long parse_long(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long v = std::strtol(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0')
    throw config_error("key '" + key + "' needs an integer (got '" + value +
                       "')");
  return v;
}

int parse_int(const std::string& key, const std::string& value) {
  return static_cast<int>(parse_long(key, value));
}

unsigned parse_unsigned(const std::string& key, const std::string& value) {
  const long v = parse_long(key, value);
  if (v < 0)
    throw config_error("key '" + key + "' needs a nonnegative integer (got '" +
                       value + "')");
  return static_cast<unsigned>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw config_error("key '" + key + "' needs true/false (got '" + value +
                     "')");
}

void require_name(const std::string& key, const std::string& value,
                  const std::vector<std::string>& valid) {
  for (const auto& v : valid)
    if (value == v) return;
  std::string list;
  for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
  throw config_error("key '" + key + "' must be one of {" + list + "} (got '" +
                     value + "')");
}

void require_file(const std::string& key, const std::string& path) {
  if (!std::filesystem::exists(path))
    throw config_error("key '" + key + "' references a file that does not "
                       "exist: '" + path + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

struct KeyEntry {
  const char* key;
  Setter set;
};

const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = {
      {"mesh.shape",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.mesh_shape = shape_name(parse_shape(v));
       }},
      {"mesh.resolution",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.mesh_resolution = parse_int(k, v);
       }},
      {"params.K",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.K = format_tristate(parse_tristate(v));
       }},
      {"params.L",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.L = format_tristate(parse_tristate(v));
       }},
      {"params.alpha",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.alpha = parse_double(k, v);
       }},
      {"params.beta",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.beta = parse_double(k, v);
       }},
      {"params.eps",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.eps = parse_double(k, v);
       }},
      {"params.eps_surf",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.eps_surf = parse_double(k, v);
       }},
      {"params.kappa",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.kappa = parse_double(k, v);
       }},
      {"potentials.name",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         require_name(k, v, {"double_well"});
         c.potentials_name = v;
       }},
      {"potentials.table",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         require_file(k, v);
         c.potentials_table = v;
       }},
      {"potentials.growth_p",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.potentials_growth_p = parse_double(k, v);
       }},
      {"potentials.growth_q",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.potentials_growth_q = parse_double(k, v);
       }},
      {"mobility_bulk.name",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         require_name(k, v, {"constant", "capped_quadratic"});
         c.mobility_bulk_name = v;
       }},
      {"mobility_bulk.value",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.mobility_bulk_value = parse_double(k, v);
       }},
      {"mobility_surf.name",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         require_name(k, v, {"constant", "capped_quadratic"});
         c.mobility_surf_name = v;
       }},
      {"mobility_surf.value",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.mobility_surf_value = parse_double(k, v);
       }},
      {"velocity.name",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         require_name(k, v, {"zero", "rotation", "surface_slide"});
         c.velocity_name = v;
       }},
      {"velocity.magnitude",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.velocity_magnitude = parse_double(k, v);
       }},
      {"velocity.table",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         require_file(k, v);
         c.velocity_table = v;
       }},
      {"initial.name",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         require_name(k, v, {"tanh_disk", "random_smooth"});
         c.initial_name = v;
       }},
      {"initial.r0",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.initial_r0 = parse_double(k, v);
       }},
      {"initial.width",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.initial_width = parse_double(k, v);
       }},
      {"initial.seed",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.initial_seed = parse_unsigned(k, v);
       }},
      {"initial.modes",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.initial_modes = parse_int(k, v);
       }},
      {"initial.file",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         require_file(k, v);
         c.initial_file = v;
       }},
      {"initial.target_mass",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.initial_target_mass = parse_double(k, v);
       }},
      {"time.dt",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.dt = parse_double(k, v);
       }},
      {"time.T_final",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.T_final = parse_double(k, v);
       }},
      {"time.snapshot_stride",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.snapshot_stride = parse_int(k, v);
       }},
      {"scheme.name",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         require_name(k, v, {"convex_split_newton", "stabilized_linear"});
         c.scheme_name = v;
       }},
      {"scheme.newton_tol",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.newton_tol = parse_double(k, v);
       }},
      {"scheme.newton_max_iters",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.newton_max_iters = parse_int(k, v);
       }},
      {"scheme.stab_F",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.stab_F = parse_double(k, v);
       }},
      {"scheme.stab_G",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.stab_G = parse_double(k, v);
       }},
      {"output.dir",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.output_dir = v;
       }},
      {"output.vtk",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.output_vtk = parse_bool(k, v);
       }},
      {"seed",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.seed = parse_unsigned(k, v);
       }},
  };
  return table;
}

std::string valid_key_list() {
  std::string list;
  for (const auto& e : key_table())
    list += (list.empty() ? "" : ", ") + std::string(e.key);
  return list;
}

const char* fmt(double v) {
  static thread_local char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw config_error("missing key before '=' in '" + line + "'");

    const KeyEntry* entry = nullptr;
    for (const auto& e : key_table())
      if (key == e.key) entry = &e;
    if (!entry)
      throw config_error("unknown key '" + key + "' (valid keys: " +
                         valid_key_list() + ")");
    if (!seen.insert(key).second)
      throw config_error("duplicate key '" + key + "'");
    entry->set(cfg, key, value);
  }

  std::string missing;
  for (const char* required :
       {"mesh.shape", "mesh.resolution", "time.dt", "time.T_final"})
    if (!seen.count(required)) missing += (missing.empty() ? "" : ", ") +
                                          std::string(required);
  if (!missing.empty())
    throw config_error("missing required keys: " + missing);

  if (cfg.mesh_resolution < 2)
    throw config_error("mesh.resolution must be at least 2");
  if (!(cfg.dt > 0.0)) throw config_error("time.dt must be positive");
  if (cfg.T_final < 0.0)
    throw config_error("time.T_final must be nonnegative");
  if (cfg.snapshot_stride < 1)
    throw config_error("time.snapshot_stride must be at least 1");
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw config_error("cannot read configuration file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

std::string emit_config(const RunConfig& c) {
  std::ostringstream out;
  const auto put = [&](const char* key, const std::string& value) {
    out << key << " = " << value << "\n";
  };
  put("mesh.shape", c.mesh_shape);
  put("mesh.resolution", std::to_string(c.mesh_resolution));
  put("params.K", c.K);
  put("params.L", c.L);
  put("params.alpha", fmt(c.alpha));
  put("params.beta", fmt(c.beta));
  put("params.eps", fmt(c.eps));
  put("params.eps_surf", fmt(c.eps_surf));
  put("params.kappa", fmt(c.kappa));
  put("potentials.name", c.potentials_name);
  if (!c.potentials_table.empty()) put("potentials.table", c.potentials_table);
  put("potentials.growth_p", fmt(c.potentials_growth_p));
  put("potentials.growth_q", fmt(c.potentials_growth_q));
  put("mobility_bulk.name", c.mobility_bulk_name);
  put("mobility_bulk.value", fmt(c.mobility_bulk_value));
  put("mobility_surf.name", c.mobility_surf_name);
  put("mobility_surf.value", fmt(c.mobility_surf_value));
  put("velocity.name", c.velocity_name);
  put("velocity.magnitude", fmt(c.velocity_magnitude));
  if (!c.velocity_table.empty()) put("velocity.table", c.velocity_table);
  put("initial.name", c.initial_name);
  put("initial.r0", fmt(c.initial_r0));
  put("initial.width", fmt(c.initial_width));
  put("initial.seed", std::to_string(c.initial_seed));
  put("initial.modes", std::to_string(c.initial_modes));
  if (!c.initial_file.empty()) put("initial.file", c.initial_file);
  if (c.initial_target_mass)
    put("initial.target_mass", fmt(*c.initial_target_mass));
  put("time.dt", fmt(c.dt));
  put("time.T_final", fmt(c.T_final));
  put("time.snapshot_stride", std::to_string(c.snapshot_stride));
  put("scheme.name", c.scheme_name);
  put("scheme.newton_tol", fmt(c.newton_tol));
  put("scheme.newton_max_iters", std::to_string(c.newton_max_iters));
  put("scheme.stab_F", fmt(c.stab_F));
  put("scheme.stab_G", fmt(c.stab_G));
  put("output.dir", c.output_dir);
  put("output.vtk", c.output_vtk ? "true" : "false");
  put("seed", std::to_string(c.seed));
  return out.str();
}

std::string config_hash(const RunConfig& config) {
  const std::string text = emit_config(config);
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char byte : text) {
    h ^= byte;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

// ===========================================================================
// Factories
// ===========================================================================

BulkSurfaceMesh make_mesh(const RunConfig& config) {
  return generate_mesh(parse_shape(config.mesh_shape), config.mesh_resolution);
}

CouplingParams make_params(const RunConfig& config) {
  CouplingParams p;
  p.K = parse_tristate(config.K);
  p.L = parse_tristate(config.L);
  p.alpha = config.alpha;
  p.beta = config.beta;
  p.eps = config.eps;
  p.eps_surf = config.eps_surf;
  p.kappa = config.kappa;
  return p;
}

PotentialSpec make_potentials(const RunConfig& config) {
  if (config.potentials_table.empty())
    return builtin_potential(config.potentials_name);
  std::ifstream in(config.potentials_table);
  if (!in)
    throw config_error("cannot read potential table '" +
                       config.potentials_table + "'");
  std::vector<double> raw;
  double value = 0.0;
  while (in >> value) raw.push_back(value);
  if (!in.eof() || raw.empty() || raw.size() % 3 != 0)
    throw config_error("malformed potential table '" + config.potentials_table +
                       "' (expected rows of three numbers)");
  std::vector<std::array<double, 3>> samples;
  for (std::size_t r = 0; r < raw.size(); r += 3)
    samples.push_back({raw[r], raw[r + 1], raw[r + 2]});
  // user_potential validates the covered sample range itself; the global
  // checks are not meaningful under clamped linear extrapolation.
  return user_potential(config.potentials_growth_p, config.potentials_growth_q,
                        samples);
}

MobilitySpec make_mobility_bulk(const RunConfig& config) {
  return builtin_mobility(config.mobility_bulk_name, config.mobility_bulk_value);
}

MobilitySpec make_mobility_surf(const RunConfig& config) {
  return builtin_mobility(config.mobility_surf_name, config.mobility_surf_value);
}

VelocityTable make_velocity(const RunConfig& config,
                            const BulkSurfaceMesh& mesh) {
  if (config.velocity_table.empty())
    return VelocityTable::steady(
        builtin_velocity(config.velocity_name, config.velocity_magnitude, mesh));

  std::ifstream in(config.velocity_table);
  if (!in)
    throw config_error("cannot read velocity table '" + config.velocity_table +
                       "'");
  long n_samples = 0;
  if (!(in >> n_samples) || n_samples < 1)
    throw config_error("velocity table '" + config.velocity_table +
                       "' must start with a positive sample count");
  VelocityTable table;
  double worst_div = 0.0;
  for (long s = 0; s < n_samples; ++s) {
    double t = 0.0;
    if (!(in >> t))
      throw config_error("velocity table '" + config.velocity_table +
                         "' is truncated");
    VelocitySample sample;
    sample.steady = false;
    sample.v_nodes.resize(mesh.n_bulk());
    sample.w_nodes.resize(mesh.n_surface());
    for (auto& v : sample.v_nodes)
      if (!(in >> v.x >> v.y))
        throw config_error("velocity table '" + config.velocity_table +
                           "' is truncated");
    for (auto& w : sample.w_nodes)
      if (!(in >> w.x >> w.y))
        throw config_error("velocity table '" + config.velocity_table +
                           "' is truncated");
    if (!table.times.empty() && t <= table.times.back())
      throw config_error("velocity table '" + config.velocity_table +
                         "' times must be strictly increasing");
    validate_velocity(mesh, sample);
    worst_div = std::max(worst_div, max_element_divergence(mesh, sample));
    table.times.push_back(t);
    table.samples.push_back(std::move(sample));
  }
  if (worst_div > 1e-10)
    std::fprintf(stderr,
                 "warning: velocity table '%s' has nonzero discrete "
                 "divergence (max %.3e); conservation statements assume "
                 "divergence-free transport\n",
                 config.velocity_table.c_str(), worst_div);
  return table;
}

std::pair<Vector, Vector> make_initial(const RunConfig& config,
                                       const BulkSurfaceMesh& mesh,
                                       const FeOperators& ops,
                                       const CouplingParams& params) {
  Vector phi0, psi0;
  if (!config.initial_file.empty()) {
    std::ifstream in(config.initial_file);
    if (!in)
      throw config_error("cannot read initial-data file '" +
                         config.initial_file + "'");
    phi0.resize(mesh.n_bulk());
    psi0.resize(mesh.n_surface());
    for (int i = 0; i < mesh.n_bulk(); ++i)
      if (!(in >> phi0[i]))
        throw config_error("initial-data file '" + config.initial_file +
                           "' is truncated (needs n_bulk + n_surface values)");
    for (int j = 0; j < mesh.n_surface(); ++j)
      if (!(in >> psi0[j]))
        throw config_error("initial-data file '" + config.initial_file +
                           "' is truncated (needs n_bulk + n_surface values)");
  } else {
    InitialDataSpec spec;
    spec.name = config.initial_name;
    spec.r0 = config.initial_r0;
    spec.width = config.initial_width;
    spec.seed = config.initial_seed;
    spec.modes = config.initial_modes;
    std::tie(phi0, psi0) = reference_initial_data(spec, mesh, params);
  }
  return project_initial(phi0, psi0, params, ops, mesh,
                         config.initial_target_mass);
}

StepConfig make_step_config(const RunConfig& config) {
  StepConfig cfg;
  cfg.dt = config.dt;
  cfg.newton_tol = config.newton_tol;
  cfg.newton_max_iters = config.newton_max_iters;
  if (config.scheme_name == "stabilized_linear")
    cfg.scheme = Scheme::stabilized_linear;
  else if (config.scheme_name == "convex_split_newton")
    cfg.scheme = Scheme::convex_split_newton;
  else
    throw config_error("unknown scheme '" + config.scheme_name +
                       "' (expected convex_split_newton or stabilized_linear)");
  cfg.stab_F = config.stab_F;
  cfg.stab_G = config.stab_G;
  validate_step_config(cfg);
  return cfg;
}

SimulationInputs make_inputs(const RunConfig& config, const BulkSurfaceMesh& mesh,
                             const FeOperators& ops,
                             const CouplingParams& params) {
  SimulationInputs in;
  std::tie(in.phi0, in.psi0) = make_initial(config, mesh, ops, params);
  in.velocity = make_velocity(config, mesh);
  in.T_final = config.T_final;
  in.potentials = make_potentials(config);
  in.mobility_bulk = make_mobility_bulk(config);
  in.mobility_surf = make_mobility_surf(config);
  in.step = make_step_config(config);
  in.snapshot_stride = config.snapshot_stride;
  return in;
}

}  // namespace bsphase
