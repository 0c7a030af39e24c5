/// \file errors.hpp
/// \brief Exception taxonomy used across the library; the CLI maps these to
///        process exit codes (configuration 2, solver/runtime 3).

#pragma once

#include <stdexcept>
#include <string>

namespace bsphase {

/// Bad user input: unknown keys, malformed values, unsupported combinations.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Violated modelling assumption: solvability condition, mobility bounds,
/// potential nonnegativity, constraint preconditions on states.
struct model_error : std::runtime_error {
  explicit model_error(const std::string& what) : std::runtime_error(what) {}
};

/// Mesh/operator construction failure (degenerate element, broken topology).
struct assembly_error : std::runtime_error {
  explicit assembly_error(const std::string& what) : std::runtime_error(what) {}
};

/// Linear-solver or Newton failure at run time.
struct solver_error : std::runtime_error {
  explicit solver_error(const std::string& what) : std::runtime_error(what) {}
};

/// An operation was handed data outside its domain (mean constraints,
/// window sizes, fit preconditions).
struct domain_error : std::runtime_error {
  explicit domain_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bsphase
