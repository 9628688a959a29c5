#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cmmi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

/// Failure category. The numeric values double as CLI exit codes.
enum class ErrorKind : int { usage = 1, data = 2, numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed or inconsistent input: bad files, shape mismatches, broken chains.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// A numerical precondition failed: rank deficiency, nonpositive spectrum.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

/// Collects non-fatal warnings. Functions take an optional pointer; a null
/// pointer discards warnings.
struct Diagnostics {
  std::vector<std::string> warnings;
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warnings.push_back(std::move(message));
}

/// Largest absolute entry, 0 for an empty matrix.
template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace cmmi
