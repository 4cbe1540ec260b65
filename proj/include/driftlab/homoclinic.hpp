#pragma once

#include "driftlab/nhim.hpp"

#include <string>
#include <vector>

namespace driftlab {

SaddleData find_saddle(double k);

/// Standard map (x, y) -> (x + y + k sin x, y + k sin x) on lifted coordinates.
Vec2 standard_map(double k, const Vec2& p);
Vec2 standard_map_inverse(double k, const Vec2& p);

struct SeparatrixOptions {
  double s0 = 1e-8;          // seed distance from the saddle
  int samples_per_domain = 64;
  double max_segment = 0.05;
  double max_turn = 0.05;    // rad
  double arc_budget = 40.0;  // per branch, after leaving the seed scale
  std::size_t max_points = 400000;
};

/// Branch point as a function of the domain coordinate sigma: the seed s0*lambda^frac along
/// branch*eigvec iterated floor(sigma) times (forward for unstable, backward for stable).
/// n_fixed >= 0 pins the iteration count, so the parametrization is smooth across integers.
Vec2 separatrix_point(const SaddleData& s, Direction dir, int branch, double sigma, double s0 = 1e-8,
                      int n_fixed = -1);

struct Separatrix {
  Direction dir = Direction::Unstable;
  int branch = 1;
  std::vector<double> sigma;
  std::vector<Vec2> pts;  // lifted x
  double arc_length = 0.0;
};

Separatrix grow_separatrix(const SaddleData& s, Direction dir, int branch, const SeparatrixOptions& opt = {});

struct HomoclinicPoint {
  Vec2 p_h{0.0, 0.0};   // x reduced
  double residual = 0.0;
  double angle = 0.0;   // between the separatrix tangents, rad
  double sigma_u = 0.0, sigma_s = 0.0;
  int branch_u = 1, branch_s = 1;
  int wrap = 0;         // U(sigma_u) = S(sigma_s) + (2 pi wrap, 0)
  double s0 = 1e-8;
};

/// Distinct homoclinic orbits ordered by first appearance along the unstable branches.
std::vector<HomoclinicPoint> find_homoclinic_points(const SaddleData& s, std::size_t max_count, double tol,
                                                    const SeparatrixOptions& opt = {});
HomoclinicPoint find_primary_homoclinic(const SaddleData& s, double tol = 1e-10, const SeparatrixOptions& opt = {});

/// Orbit point Phi^j(p_h) (x reduced), from the stable side for j >= 0 and the unstable side for j < 0.
Vec2 homoclinic_orbit_point(const SaddleData& s, const HomoclinicPoint& h, int j);
/// Same point as the same-orbit representation shifted by j (p_h replaced by its j-th iterate).
HomoclinicPoint shift_homoclinic(const SaddleData& s, const HomoclinicPoint& h, int j);

/// Full orbit segment of the 4D map through a homoclinic cylinder. P[centre] lies on B.
struct ExcursionOrbit {
  std::vector<Vec4> P;
  int centre = 0;
  CylinderPoint v_minus, v_plus;  // pi^u and pi^s of P[centre]
  double residual = 0.0;
  int iterations = 0;
};

struct HomoclinicCylinder {
  int id = 0;
  HomoclinicPoint hp;
  int window_minus = 0, window_plus = 0;  // solver window around the excursion
  int m_minus = 0, m_plus = 0;            // channel entry counts for the configured delta
  double delta = 0.05;
  Band domain;
  int n_phi = 0, n_I = 0;
  // per node, phi fastest; parametrized by v_minus on the grid
  std::vector<Vec4> points;
  std::vector<CylinderPoint> v_minus, v_plus;
  double max_residual = 0.0;
  double max_seed_displacement = 0.0;  // sup |x_B - (v, p_h)|
  CylinderPoint node(int i, int j) const;
};

/// Orbit through B whose unstable asymptotic phase is v_minus; shift s selects the cylinder Phi^s(B).
ExcursionOrbit solve_excursion(const MapDef& map, const CylinderGraph& cyl, const HomoclinicCylinder& B,
                               const CylinderPoint& v_minus, int shift = 0, const ExcursionOrbit* seed = nullptr);

HomoclinicCylinder build_homoclinic_cylinder(const MapDef& map, const CylinderGraph& cyl, const HomoclinicPoint& hp,
                                             Band domain, int n_phi, int n_I, double delta = 0.05, int id = 0);

struct ScatteringMapSample {
  int id = 0;
  int shift = 0;
  Band domain;
  GridField disp;  // components: Psi - phi (wrapped), Y - I
  std::string interp = "bicubic-lagrange, periodic in phi, clamped stencil in I";
  double exactness_residual = 0.0;
  double sup_shift = 0.0;  // sup |F - id| over nodes

  CylinderPoint eval(const CylinderPoint& v) const;
  /// lifted image (phi not reduced)
  Vec2 eval_lifted(const Vec2& v) const;
  Mat2 jacobian(const CylinderPoint& v) const;
};

struct ScatteringOptions {
  int exact_circles = 5;
  int exact_nodes = 128;
};

/// F_B = pi^s o (pi^u)^{-1} sampled on the cylinder's grid. shift != 0 resolves new orbits for Phi^shift(B).
ScatteringMapSample scattering_map(const MapDef& map, const CylinderGraph& cyl, const HomoclinicCylinder& B,
                                   int shift = 0, const ScatteringOptions& opt = {});

/// max over circles I=c of |closed action along F(circle) - along the circle|, lifted to the cylinder graph.
double scattering_exactness(const MapDef& map, const CylinderGraph& cyl, const HomoclinicCylinder& B, int shift,
                            int circles, int nodes);

struct SimplicityOptions {
  int stride = 1;              // S1 sampled every stride-th node in each direction
  double fd_step = 1e-5;
  double cond_limit = 1e6;
  bool collapse_fiber = false;  // replaces the fiber tangent by a cylinder tangent
};

struct SimplicityReport {
  bool s1 = false, s2 = false, s3 = false;
  double max_condition = 0.0;
  double min_det = 0.0;     // orientation of the sampled scattering map
  double min_separation = 0.0;
  std::vector<int> winding;  // of phi -> Psi(phi) - phi per row
  std::string detail;
  bool simple() const { return s1 && s2 && s3; }
};

SimplicityReport check_simplicity(const MapDef& map, const CylinderGraph& cyl, const HomoclinicCylinder& B,
                                  const ScatteringMapSample& F, Band bar_band, const SimplicityOptions& opt = {});

/// Tangent data at a node of B.
struct BTangents {
  Vec4 t_phi, t_I, e_uu, e_ss;
};
BTangents cylinder_tangents(const MapDef& map, const CylinderGraph& cyl, const HomoclinicCylinder& B,
                            const ExcursionOrbit& orb, double h = 1e-5);

struct SecondaryOptions {
  SeparatrixOptions separatrix;
  SimplicityOptions simplicity{4};
};

/// Cylinders over further homoclinic orbits of the normal factor, each checked for simplicity.
/// Throws FewerFound if fewer than count are produced.
std::vector<HomoclinicCylinder> generate_secondary(const MapDef& map, const CylinderGraph& cyl,
                                                   const HomoclinicCylinder& B, int count,
                                                   const SecondaryOptions& opt = {});

struct OrthogonalityReport {
  CheckReport check;
  std::vector<double> pairing_log;  // per refinement depth, sup over samples
  double min_det_omega_A = 0.0;
};

OrthogonalityReport symplectic_orthogonality_check(const MapDef& map, const CylinderGraph& cyl,
                                                   const HomoclinicCylinder& B, int stride = 4, double tol = 1e-6);

}  // namespace driftlab
