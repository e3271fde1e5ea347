#include "hwsim/types.hpp"

#include <cmath>

namespace hwsim {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NegativeRate: return "NegativeRate";
    case ErrorCode::NotCriticallyLoaded: return "NotCriticallyLoaded";
    case ErrorCode::ResourcePoolingViolated: return "ResourcePoolingViolated";
    case ErrorCode::DomainViolation: return "DomainViolation";
    case ErrorCode::StructureViolation: return "StructureViolation";
    case ErrorCode::NoAnchorClass: return "NoAnchorClass";
    case ErrorCode::InfeasibleShift: return "InfeasibleShift";
    case ErrorCode::OutsideJwc: return "OutsideJWC";
    case ErrorCode::StateExplosion: return "StateExplosion";
    case ErrorCode::Blowup: return "Blowup";
    case ErrorCode::InsufficientTail: return "InsufficientTail";
    case ErrorCode::FitFailed: return "FitFailed";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "UnknownError";
}

void Control::validate(double tol) const {
  if (uc.size() == 0 || us.size() == 0)
    throw Error(ErrorCode::DomainViolation, "empty control vector");
  if (uc.minCoeff() < -tol || us.minCoeff() < -tol)
    throw Error(ErrorCode::DomainViolation, "control has negative component");
  if (std::abs(uc.sum() - 1.0) > tol || std::abs(us.sum() - 1.0) > tol)
    throw Error(ErrorCode::DomainViolation, "control does not sum to 1");
}

}  // namespace hwsim
