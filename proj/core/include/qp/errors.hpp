#ifndef QPROP_ERRORS_HPP
#define QPROP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace qp {

// Precondition violations (bad arguments, malformed files, schema mismatch).
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical procedure failed to reach its target (quadrature refinement
// exhausted, optimizer stalled, factorization failed after max jitter).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

class SingularMatrixError : public NumericalError {
 public:
  explicit SingularMatrixError(const std::string& what) : NumericalError(what) {}
};

}  // namespace qp

#endif
