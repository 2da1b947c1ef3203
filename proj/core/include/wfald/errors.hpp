#pragma once

#include <stdexcept>
#include <string>

namespace wfald {

// Bad configuration value or unknown key. Maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// A runtime invariant of the protocol was violated (power constraint, NaN
// particle, degenerate channel). Maps to exit code 2.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The convergence bound is vacuous for the supplied constants (gamma >= 1).
class BoundVacuousError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace wfald
