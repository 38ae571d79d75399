#pragma once

#include <stdexcept>
#include <string>

namespace spinsim {

// A documented interface contract was violated by the caller or by internal
// state (non-unitary gate, non-Hermitian observable, broken invariant).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Projective measurement hit an outcome with (numerically) zero weight.
// Enumeration treats this as a prunable branch; production sampling treats it
// as a broken invariant because the Born chooser cannot select such outcomes.
class ZeroProbabilityError : public std::runtime_error {
 public:
  explicit ZeroProbabilityError(double p)
      : std::runtime_error("projection onto outcome with probability " + std::to_string(p)),
        probability(p) {}
  double probability;
};

// Exact-oracle request exceeds the dense size or enumeration budget caps.
class CapacityError : public std::runtime_error {
 public:
  explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

// Bad CLI arguments or config file contents.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace spinsim
