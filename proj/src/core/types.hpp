#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace ksos {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  not_positive_definite,
  singular_system,
  fit_failed,
  tune_failed,
  unsupported,
  io_error,
  empty_input,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace ksos
