#pragma once

#include <stdexcept>
#include <string>

namespace ionlink {

/// Base class for failures of a physical computation (as opposed to bad
/// arguments, which throw std::invalid_argument).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  /// Short machine-readable tag, e.g. "not_a_double_well".
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class NotADoubleWell : public Error {
 public:
  explicit NotADoubleWell(const std::string& what) : Error("not_a_double_well", what) {}
};

class SingularConfiguration : public Error {
 public:
  explicit SingularConfiguration(const std::string& what)
      : Error("singular_configuration", what) {}
};

class EquilibriumFailure : public Error {
 public:
  explicit EquilibriumFailure(const std::string& what) : Error("equilibrium_failure", what) {}
};

class UnstableEquilibrium : public Error {
 public:
  explicit UnstableEquilibrium(const std::string& what) : Error("unstable_equilibrium", what) {}
};

class CutoffTooSmall : public Error {
 public:
  explicit CutoffTooSmall(const std::string& what) : Error("cutoff_too_small", what) {}
};

}  // namespace ionlink
