#pragma once

#include <stdexcept>
#include <string>

namespace flowins {

/// Base for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// File/stream content problems (parse failures, inconsistent datasets).
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

/// Numerical failures (singular systems, covariance collapse).
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

class NonpositiveDt : public Error {
 public:
  NonpositiveDt() : Error("time step must be positive") {}
};

class CovarianceNotPSD : public NumericalError {
 public:
  explicit CovarianceNotPSD(const std::string& msg) : NumericalError(msg) {}
};

class SingularInnovation : public NumericalError {
 public:
  explicit SingularInnovation(const std::string& msg) : NumericalError(msg) {}
};

class ProjectionError : public NumericalError {
 public:
  explicit ProjectionError(const std::string& msg) : NumericalError(msg) {}
};

class NotStationary : public DataError {
 public:
  explicit NotStationary(const std::string& msg) : DataError(msg) {}
};

class InconsistentStack : public DataError {
 public:
  explicit InconsistentStack(const std::string& msg) : DataError(msg) {}
};

class EmptyOverlap : public DataError {
 public:
  explicit EmptyOverlap(const std::string& msg) : DataError(msg) {}
};

class ParseError : public DataError {
 public:
  explicit ParseError(const std::string& msg) : DataError(msg) {}
};

class DegenerateAlignment : public NumericalError {
 public:
  explicit DegenerateAlignment(const std::string& msg) : NumericalError(msg) {}
};

}  // namespace flowins
