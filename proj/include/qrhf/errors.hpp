#pragma once

#include <stdexcept>
#include <string>

namespace qrhf {

// Exit codes used by the command-line driver. Each error family below maps to one.
enum class ExitCode : int {
  ok = 0,
  validation = 2,
  convergence = 3,
  degeneracy = 4,
  io = 5,
  dependency = 6,
  domain = 7,
  internal = 10,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& w) : Error(ExitCode::validation, w) {}
};
struct ConvergenceError : Error {
  explicit ConvergenceError(const std::string& w) : Error(ExitCode::convergence, w) {}
};
struct DegeneracyError : Error {
  explicit DegeneracyError(const std::string& w) : Error(ExitCode::degeneracy, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ExitCode::io, w) {}
};
struct DependencyError : Error {
  explicit DependencyError(const std::string& w) : Error(ExitCode::dependency, w) {}
};
// Argument outside the mathematical domain (K0 at alpha <= 0, G at r = 0, ...).
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ExitCode::domain, w) {}
};

}  // namespace qrhf
