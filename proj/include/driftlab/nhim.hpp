#pragma once

#include "driftlab/interp.hpp"
#include "driftlab/map_core.hpp"

#include <functional>
#include <string>
#include <vector>

namespace driftlab {

struct Band {
  double lo = 0.0, hi = 1.0;
  bool contains(double I, double slack = 0.0) const { return I >= lo - slack && I <= hi + slack; }
  double height() const { return hi - lo; }
};

struct CylinderPoint {
  double phi = 0.0, I = 0.0;
  Vec2 vec() const { return Vec2(phi, I); }
  static CylinderPoint from(const Vec2& v) { return {v[0], v[1]}; }
};

/// Distance on the cylinder with phi taken mod 2pi.
inline double cyl_dist(const CylinderPoint& a, const CylinderPoint& b) {
  return std::hypot(wrap_angle(a.phi - b.phi), a.I - b.I);
}

/// Invariant cylinder as a graph (x, y) = g(phi, I) near the saddle of the normal factor.
struct CylinderGraph {
  Band band;
  GridField g;  // components: x (signed, near 0), y
  double residual = 0.0;
  double tol = 0.0;
  int sweeps = 0;
  std::string interp = "bicubic-lagrange, periodic in phi, clamped stencil in I";
  SaddleData saddle;

  Vec2 normal(double phi, double I) const;
  /// columns: d/dphi, d/dI
  Mat2 dnormal(double phi, double I) const;
  /// point of the graph over (phi, I)
  Vec4 lift(const CylinderPoint& v) const;
  /// (x,y) offset of P from the graph over base(P), x wrapped
  Vec2 offset(const Vec4& P) const;
  /// offset in saddle eigen-coordinates (a_u, a_s)
  Vec2 eigen_offset(const Vec4& P) const;
  double sup_norm() const;
};

inline CylinderPoint base_of(const Vec4& P) { return {reduce_angle(P[kPhi]), P[kI]}; }

/// Graph-transform fixed point. seed may be null (g = 0 start).
CylinderGraph compute_cylinder(const MapDef& map, Band band, int n_phi, int n_I, double tol, int max_iter,
                               const CylinderGraph* seed = nullptr);

/// Sup over nodes of |offset(Phi(lift(v)))|, the invariance defect of a graph.
double cylinder_residual(const MapDef& map, const CylinderGraph& cyl);

/// F0 = Phi restricted to the cylinder. Throws OutOfBand when the image leaves the band.
CylinderPoint restricted_map(const MapDef& map, const CylinderGraph& cyl, const CylinderPoint& v);
CylinderPoint restricted_map_inverse(const MapDef& map, const CylinderGraph& cyl, const CylinderPoint& v);
/// Unchecked variants on lifted coordinates (phi not reduced); used internally near the band edge.
Vec2 restricted_step(const MapDef& map, const CylinderGraph& cyl, const Vec2& v, int direction);
Vec2 restricted_iterate(const MapDef& map, const CylinderGraph& cyl, Vec2 v, int n);
/// 2x2 derivative of F0 (direction +1) or F0^{-1} (direction -1) by central differences.
Mat2 restricted_jacobian(const MapDef& map, const CylinderGraph& cyl, const Vec2& v, int direction);

struct SpectralGapReport {
  double alpha = 0.0;
  double lambda = 0.0;
  double product_check = 0.0;  // alpha^2 lambda
  Vec2 norm_scaling{1.0, 0.1};
  bool valid = false;
};

/// alpha from the scaled restricted-map derivative, lambda from the normal block in graph-adapted
/// coordinates. Only nodes inside sub (when given) are used. Throws GapViolation.
SpectralGapReport spectral_gap(const MapDef& map, const CylinderGraph& cyl, Vec2 scaling = Vec2(1.0, 0.1),
                               const Band* sub = nullptr);

enum class Direction { Stable, Unstable };

struct HolonomyProjector {
  Direction direction = Direction::Stable;
  int n_iter = 80;     // iteration cap
  int n_burn = 40;     // iterates allowed outside the channel
  double delta = 0.05;
  double tol = 1e-11;
  double accept = 1e-8;  // best estimate accepted below this when tol is not reached
  Vec2 norm_scaling{1.0, 0.1};  // displacements measured as |S^{-1} dv|
  const MapDef* map = nullptr;
  const CylinderGraph* cylinder = nullptr;
};

struct ProjectionResult {
  CylinderPoint v;
  int n = 0;
  std::vector<double> convergence_log;  // |v_n - v_{n-1}| in the adapted norm
  double ratio = 0.0;                   // asymptotic successive ratio inside the channel
  double displacement = 0.0;
};

ProjectionResult project_stable(const Vec4& x, const HolonomyProjector& proj);
ProjectionResult project_unstable(const Vec4& x, const HolonomyProjector& proj);
ProjectionResult project(const Vec4& x, const HolonomyProjector& proj);

/// Asymptotic phase from a stored orbit. Stable: orbit[n] = Phi^n(x); unstable: orbit[n] = Phi^{-n}(x).
ProjectionResult project_orbit(const MapDef& map, const CylinderGraph& cyl, const std::vector<Vec4>& orbit,
                               Direction dir, double tol = 1e-11, Vec2 scaling = Vec2(1.0, 0.1));

/// Point on W^s(A) (stable) or W^u(A) (unstable) over the base point v, obtained by iterating a tiny
/// eigen-offset s0 backward (forward) n times. Returns the point and its base at time 0 of the offset.
Vec4 manifold_point(const MapDef& map, const CylinderGraph& cyl, const CylinderPoint& v, Direction dir, double s0,
                    int n);

struct LambdaLemmaOptions {
  int n_phi = 16, n_I = 5, n_u = 13;
  double half_width = 0.05;  // a_u range
  Band sub{0.1, 0.3};
  int limit_iterations = 40;
};

struct LambdaLemmaReport {
  std::vector<double> c0, c1, ratios;
  double mean_ratio = 0.0;
  bool graph_ok = true;
  std::string detail;
};

/// Seed surface a_s = w(phi, I, a_u) in eigen-coordinates relative to the cylinder.
using SeedSurface = std::function<double(double, double, double)>;

LambdaLemmaReport lambda_lemma_check(const MapDef& map, const CylinderGraph& cyl, const SeedSurface& seed, int m_max,
                                     const LambdaLemmaOptions& opt = {});
/// a_s of W^u_loc(A) over (phi, I, a_u), as used by the check.
SeedSurface local_unstable_manifold(const MapDef& map, const CylinderGraph& cyl, const LambdaLemmaOptions& opt = {});

}  // namespace driftlab
