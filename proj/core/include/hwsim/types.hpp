#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hwsim {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IntVec = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;
using IntMat = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

enum class ErrorCode {
  NegativeRate,
  NotCriticallyLoaded,
  ResourcePoolingViolated,
  DomainViolation,
  StructureViolation,
  NoAnchorClass,
  InfeasibleShift,
  OutsideJwc,
  StateExplosion,
  Blowup,
  InsufficientTail,
  FitFailed,
  ConfigError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// A point u = (u^c, u^s) of the action set: both components on
/// probability simplices (class weights and pool weights).
struct Control {
  Vec uc;  // size I, nonnegative, sums to 1
  Vec us;  // size J, nonnegative, sums to 1

  void validate(double tol = 1e-9) const;
};

inline double pos_part(double a) { return a > 0 ? a : 0.0; }
inline double neg_part(double a) { return a < 0 ? -a : 0.0; }

}  // namespace hwsim
