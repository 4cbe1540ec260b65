#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace driftlab {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;

/// Reduce an angle to [0, 2pi). Idempotent on already-reduced values.
inline double reduce_angle(double a) {
  if (a >= 0.0 && a < kTwoPi) return a;
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;  // fmod(-tiny) + 2pi can round up to 2pi
  return r;
}

/// Signed angular difference folded into (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

/// Short %g rendering for messages.
std::string fmt_g(double v);

enum class ErrorCode : int {
  Ok = 0,
  InvalidArgument,
  NoConvergence,
  OutOfBand,
  GapViolation,
  EscapedChannel,
  NotFound,
  ContinuationFailed,
  DomainExceeded,
  BandOverflow,
  GenerationLimit,
  PaddingFailed,
  ShootingFailed,
  BoundViolated,
  FewerFound,
  GraphFold,
  ConfigError,
  IoError,
};

const char* error_code_name(ErrorCode code);

/// Library error. Every failure mode named by an operation contract maps to one code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Outcome of an invariant check. Checks report failures instead of throwing.
struct CheckReport {
  std::string name;
  bool passed = true;
  double max_residual = 0.0;
  double tolerance = 0.0;
  std::size_t worst_index = 0;
  std::string detail;
};

/// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so results
/// do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Worker count used by parallel_for (default 1).
void set_thread_count(unsigned n);
unsigned thread_count();

}  // namespace driftlab
