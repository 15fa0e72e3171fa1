#pragma once

// Shared error type and numeric constants for the patch solver.

#include <cmath>
#include <stdexcept>
#include <string>

namespace ssp {

enum class errc {
  degenerate_sonic,
  slope_overflow,
  out_of_range,
  non_physical,
  malformed_boundary,
  construction_failed,
  sign_violation,
  no_convergence,
  folded_mesh,
  sonic_crossing,
  step_underflow,
  insufficient_depth,
  not_injective,
  blow_up,
  cfl_underflow,
  trace_escaped_domain,
  inadmissible_boundary,
  invalid_config,
  io_failure,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::degenerate_sonic: return "DegenerateSonic";
    case errc::slope_overflow: return "SlopeOverflow";
    case errc::out_of_range: return "OutOfRange";
    case errc::non_physical: return "NonPhysical";
    case errc::malformed_boundary: return "MalformedBoundary";
    case errc::construction_failed: return "ConstructionFailed";
    case errc::sign_violation: return "SignViolation";
    case errc::no_convergence: return "NoConvergence";
    case errc::folded_mesh: return "FoldedMesh";
    case errc::sonic_crossing: return "SonicCrossing";
    case errc::step_underflow: return "StepUnderflow";
    case errc::insufficient_depth: return "InsufficientDepth";
    case errc::not_injective: return "NotInjective";
    case errc::blow_up: return "BlowUp";
    case errc::cfl_underflow: return "CFLUnderflow";
    case errc::trace_escaped_domain: return "TraceEscapedDomain";
    case errc::inadmissible_boundary: return "InadmissibleBoundary";
    case errc::invalid_config: return "InvalidConfig";
    case errc::io_failure: return "IoFailure";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw Error(code, what); }

// A point is treated as sonic when cos(omega) falls below this; every
// degenerate-division guard in the library uses the same constant.
inline constexpr double kSonicCosTol = 1e-9;

inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline double dist(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double sqr(double v) { return v * v; }

}  // namespace ssp
