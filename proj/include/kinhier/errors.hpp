#pragma once

#include <stdexcept>
#include <string>

namespace kinhier {

/// Violated size or enumeration cap (K, tensor order, partition ground set,
/// dense-operator dimension).  The CLI maps this to its own exit code so that
/// runaway configurations fail loudly instead of thrashing.
struct cap_error : std::runtime_error {
  explicit cap_error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent experiment configuration.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: non-finite values, failed tolerance acceptance,
/// non-convergent refinement.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kinhier
