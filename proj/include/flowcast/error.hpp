#pragma once

#include <stdexcept>
#include <string>

namespace flowcast {

/// Raised for every contract violation in the library (bad shapes, infeasible
/// configurations, malformed input files).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flowcast
