#pragma once

#include <stdexcept>
#include <string>

namespace gridform {

/// Bad input: scenario files, graph structure, parameter ranges.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric failure during integration (DC link collapse, non-finite state).
struct SimulationError : std::runtime_error {
  explicit SimulationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gridform
