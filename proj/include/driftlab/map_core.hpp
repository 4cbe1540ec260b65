#pragma once

#include "driftlab/common.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace driftlab {

/// Phase-space point. phi and x are angles kept in [0,2pi).
struct PhasePoint {
  double phi = 0.0, I = 0.0, x = 0.0, y = 0.0;

  Vec4 vec() const { return Vec4(phi, I, x, y); }
  static PhasePoint from(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }
  PhasePoint reduced() const { return {reduce_angle(phi), I, reduce_angle(x), y}; }
};

// Component indices inside a Vec4.
inline constexpr int kPhi = 0, kI = 1, kX = 2, kY = 3;

/// Componentwise difference with angle components folded into (-pi, pi].
inline Vec4 phase_diff(const Vec4& a, const Vec4& b) {
  Vec4 d = a - b;
  d[kPhi] = wrap_angle(d[kPhi]);
  d[kX] = wrap_angle(d[kX]);
  return d;
}

enum class MapKind { ProductTwistStandard, DoubleStandard, PerturbedComposite };

const char* map_kind_name(MapKind k);
MapKind map_kind_from_name(const std::string& s);

enum class Basis { Sin, Cos };

/// coeff * sin(m phi + n x) or coeff * cos(m phi + n x).
struct TrigTerm {
  int m = 0, n = 0;
  double coeff = 0.0;
  Basis basis = Basis::Sin;
};

/// Time-epsilon flow of the Hamiltonian f(phi, x):
/// I <- I - eps df/dphi, y <- y - eps df/dx, angles frozen.
struct PerturbationStep {
  double epsilon = 0.0;
  std::vector<TrigTerm> terms;

  /// f, gradient (f_phi, f_x) and Hessian (f_pp, f_px, f_xx).
  void eval(double phi, double x, double* f, double grad[2], double hess[3]) const;
};

/// Test fixtures that break symplecticity or exactness on purpose.
struct MapDefect {
  double y_scale = 1.0;  // ybar = y_scale*y + k sin x
  double I_shift = 0.0;  // Ibar = I + I_shift
  bool any() const { return y_scale != 1.0 || I_shift != 0.0; }
};

struct MapDef {
  MapKind kind = MapKind::ProductTwistStandard;
  // base kind when kind == PerturbedComposite
  MapKind base_kind = MapKind::ProductTwistStandard;
  double k = 4.0;
  double k1 = 0.0, k2 = 4.0;
  std::vector<double> omega_coeffs{0.0, 1.0};  // ascending powers of I
  // Applied after the base map, last entry first: X_1 o X_2 o base.
  std::vector<PerturbationStep> perturbations;
  bool has_analytic_jacobian = true;
  MapDefect defect;

  /// Strength of the standard-map factor.
  double normal_k() const;
  MapKind effective_base() const { return kind == MapKind::PerturbedComposite ? base_kind : kind; }
  double omega(double I) const;
  double domega(double I) const;
};

MapDef product_twist_standard(double k, std::vector<double> omega = {0.0, 1.0});
MapDef double_standard(double k1, double k2);
MapDef perturbed(const MapDef& base, std::vector<PerturbationStep> steps);

/// Image with angles reduced to [0,2pi).
PhasePoint apply(const MapDef& map, const PhasePoint& p);
PhasePoint apply_inverse(const MapDef& map, const PhasePoint& p);
/// Lifted versions: angles are not reduced (for winding numbers and tangent pushes).
Vec4 apply_lifted(const MapDef& map, const Vec4& p);
Vec4 apply_inverse_lifted(const MapDef& map, const Vec4& p);

/// 4x4 derivative. Analytic for built-in kinds unless has_analytic_jacobian is false.
Mat4 jacobian(const MapDef& map, const Vec4& p);
inline Mat4 jacobian(const MapDef& map, const PhasePoint& p) { return jacobian(map, p.vec()); }
Mat4 jacobian_fd(const MapDef& map, const Vec4& p, double h = 1e-6);
Mat4 jacobian_inverse(const MapDef& map, const Vec4& p);

/// Symplectic form in (phi, I, x, y) ordering pairing (I,phi) and (y,x).
Mat4 omega_matrix();
inline double omega_pair(const Vec4& u, const Vec4& v) { return u.dot(omega_matrix() * v); }

CheckReport check_symplectic(const MapDef& map, const std::vector<PhasePoint>& pts, double tol);

/// Closed loop t in [0,1) -> lifted phase point (angles may wind).
using Loop = std::function<Vec4(double)>;

struct ExactnessReport {
  CheckReport check;
  double action_loop = 0.0;
  double action_image = 0.0;
  double quad_error = 0.0;
};

/// Compares the action integral of I dphi + y dx along the loop and its image.
ExactnessReport check_exact(const MapDef& map, const Loop& loop, int quadrature_n, double tol);

/// One- or two-parameter family Phi_mu = X_1(mu1) o X_2(mu2) o base.
struct MapFamily {
  MapDef base;
  std::vector<PerturbationStep> steps;

  MapDef evaluate(double mu1, double mu2 = 0.0) const;
};

MapFamily make_family(const MapDef& base, const std::vector<PerturbationStep>& steps);

/// Saddle of the standard-map factor at the origin.
struct SaddleData {
  Vec2 fixed_point{0.0, 0.0};
  double lambda_u = 0.0, lambda_s = 0.0;
  Vec2 eu, es;  // unit eigenvectors, eu with positive x component
  double k = 0.0;
  Mat2 basis() const {
    Mat2 b;
    b.col(0) = eu;
    b.col(1) = es;
    return b;
  }
  /// (x,y) -> (a_u, a_s)
  Mat2 to_eigen() const { return basis().inverse(); }
};

SaddleData standard_saddle(double k);

/// Uniformly distributed sample points (deterministic in seed).
std::vector<PhasePoint> random_points(std::size_t n, std::uint64_t seed, double I_lo = -1.0, double I_hi = 1.0,
                                      double y_lo = -2.0, double y_hi = 2.0);

}  // namespace driftlab
