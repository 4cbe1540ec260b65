#pragma once

#include "driftlab/ifs_transport.hpp"

#include <string>
#include <vector>

namespace driftlab {

/// Cylinder dynamics used to build shadow orbits. Fn[n-1] is the scattering map of IFS index n.
struct ShadowSystem {
  CylMap F0, F0_inv;
  std::vector<CylMap> Fn, Fn_inv;
  std::vector<int> m_minus, m_plus;  // per Fn; Fbar_n = F0^{m+} o F_n o F0^{m-}
  Band inner;                        // odd shadow points must stay here

  std::size_t size() const { return Fn.size(); }
  Vec2 iterate(Vec2 v, int k) const;  // F0^k, k may be negative
  Vec2 fbar(int n, const Vec2& v) const;
  Vec2 fbar_inverse(int n, const Vec2& v) const;
};

/// Newton inverse of a cylinder map with finite-difference derivative; starts from v.
CylMap numeric_inverse(CylMap F, double tol = 1e-13, int max_iter = 40);

/// Shadow system over a 4D map. exact = true evaluates F_n by solving the excursion at every call;
/// otherwise the sampled interpolants are used.
ShadowSystem make_shadow_system(const MapDef& map, const CylinderGraph& cyl,
                                const std::vector<HomoclinicCylinder>& cylinders,
                                const std::vector<ScatteringMapSample>& samples, Band inner, bool exact = true);
/// Shadow system of a synthetic IFS (m+- = 0).
ShadowSystem make_shadow_system(const IFS& ifs);

struct CodeStep {
  int n = 1;  // scattering map index, 1..N
  int k = 0;  // F0 block after it
};

struct Code {
  int k0 = 0;
  std::vector<CodeStep> steps;
  int k_bar = 10;
  double gamma_rate = 2.0;
  int D = 5;

  std::size_t J() const { return steps.size(); }
  int block(std::size_t j) const { return j == 0 ? k0 : steps[j - 1].k; }
  bool proper() const;
  /// first violated condition, empty when proper
  std::string violation() const;
};

/// Itinerary read off an IFS orbit: i0 F0 steps, then (n_j, i_j) pairs.
struct RawCode {
  int i0 = 0;
  std::vector<CodeStep> steps;  // k holds i_j
};

RawCode raw_code_from_orbit(const std::vector<OrbitStep>& orbit);

struct ShadowOrbit {
  std::vector<CylinderPoint> points;  // v*_0 .. v*_{2J+1}
  Code code;
  double start_error = 0.0;  // distance of v*_0 from the start target
  double max_consistency = 0.0;  // re-evaluation error of the recorded relations
};

/// Smallest k in [k_min, k_max] with dist(F0^{-k}(v), v) < radius. Throws NotFound.
int find_return_time(const CylMap& F0_inv, const CylinderPoint& v, double radius, int k_min, int k_max);

struct ProperCodeOptions {
  int k_bar = 10;
  double gamma_rate = 2.0;
  int D = 5;
  double radius = 0.05;  // initial return radius, halved on retry
  int retries = 12;
  int k_max = 20000;
};

/// Backward induction: the last shadow point is the IFS orbit's last point; v*_0 must land within U0 of the
/// start (vertical distance to gamma_minus when given, else distance to the orbit's first point).
/// Throws PaddingFailed.
ShadowOrbit make_proper_code(const RawCode& raw, const ShadowSystem& sys, const CylinderPoint& start, double U0,
                             const ProperCodeOptions& opt = {}, const EssentialCurve* gamma_minus = nullptr);

/// Re-evaluates the shadow relations; returns the largest error.
double shadow_consistency(const ShadowOrbit& s, const ShadowSystem& sys);

struct ChannelOrbit {
  std::vector<Vec4> P;                     // full trajectory
  std::vector<int> station;                // index into P of each station, 2J+2 entries
  std::vector<CylinderPoint> v;            // station estimates
  std::vector<double> deviation;           // |v_s - v*_s|
  double alpha = 0.0, lambda = 0.0, delta = 0.05;
  double bound = 0.0;                      // delta (alpha lambda)^{k_J/2}
  double bound_kbar = 0.0;                 // 2 delta (alpha lambda)^{k_bar/2}
  double final_offset = 0.0;               // |a_s| at the last point
  double max_lamb_ratio = 0.0;             // worst per-iterate normal contraction inside blocks
  double residual = 0.0;
  int iterations = 0;
};

struct ShootOptions {
  double bound_factor = 2.0;
  bool enforce_bound = true;
};

/// Channel orbit realizing the shadow: one boundary-value solve over the whole itinerary with
/// base(P_0) = v*_0, P_0 on the unstable side and P_T on the stable side. Throws ShootingFailed, BoundViolated.
ChannelOrbit shoot_channel_orbit(const MapDef& map, const CylinderGraph& cyl,
                                 const std::vector<HomoclinicCylinder>& cylinders, const ShadowSystem& sys,
                                 const ShadowOrbit& shadow, const SpectralGapReport& gap, double delta,
                                 const ShootOptions& opt = {});

struct ShadowingReport {
  bool ok = false;
  bool deviations_ok = false, kbar_ok = false, lamb_ok = false, orbit_ok = false, endpoints_ok = false;
  double max_deviation = 0.0;
  double bound = 0.0, bound_kbar = 0.0;
  double max_lamb_ratio = 0.0;
  double max_defect = 0.0;
  double max_offset_jump = 0.0;
  double final_offset = 0.0;
  std::vector<double> deviations;
  std::string detail;
};

/// Independent recomputation: orbit defect, station estimates, both deviation bounds and per-block decay.
ShadowingReport verify_shadowing(const MapDef& map, const CylinderGraph& cyl, const ChannelOrbit& orbit,
                                 const ShadowOrbit& shadow, const ShadowSystem& sys, const SpectralGapReport& gap,
                                 double delta, double endpoint_eps = -1.0);

/// Station estimates from the block midpoints of a trajectory: v_{2j} = F0^{-h}(base P_mid), v_{2j+1} = F0^{k-h}(...).
std::vector<CylinderPoint> station_estimates(const ShadowSystem& sys, const std::vector<Vec4>& P,
                                             const std::vector<int>& station);

/// Worst ratio of successive normal offsets inside the blocks (stable part forward, unstable part backward).
double block_contraction(const CylinderGraph& cyl, const std::vector<Vec4>& P, const std::vector<int>& station,
                         double floor = 1e-11);

}  // namespace driftlab
