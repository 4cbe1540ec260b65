#pragma once

#include "driftlab/homoclinic.hpp"

#include <functional>
#include <string>
#include <vector>

namespace driftlab {

/// Cylinder map on lifted coordinates (phi, y): phi is not reduced.
using CylMap = std::function<Vec2(const Vec2&)>;

struct IFS {
  std::vector<CylMap> maps;  // maps[0] is F0
  std::vector<std::string> names;
  Band domain;  // the annulus A'
  double lipschitz = std::numeric_limits<double>::infinity();  // bound for invariant curves of F0
  std::size_t size() const { return maps.size(); }
};

/// max over the domain of max(|dphi'/dphi|, |dy'/dy|) / |dphi'/dy|; infinite without twist.
double twist_lipschitz_bound(const CylMap& F0, Band domain, int n = 64);

struct Provenance {
  int gen = -1;         // -1: seed
  int map = -1;         // -1: carried over from the previous curve
  double pre_phi = 0.0; // preimage on the previous curve
};

struct EssentialCurve {
  std::vector<double> phis;  // 2 pi i / n
  std::vector<double> ys;
  double L = 0.0;            // measured Lipschitz constant
  std::vector<Provenance> prov;

  std::size_t size() const { return phis.size(); }
  double at(double phi) const;  // periodic linear interpolation
  static EssentialCurve constant(double y, int n = 512);
  static EssentialCurve sampled(const std::function<double(double)>& f, int n = 512);
  double measured_lipschitz() const;
};

/// Closed polyline in lifted coordinates; pts.back() is the image of the first sample shifted by 2 pi.
struct Polyline {
  std::vector<Vec2> pts;
  int winding = 0;
};

Polyline curve_image(const CylMap& F, const EssentialCurve& gamma, const Band* domain = nullptr);

/// Upper envelope of gamma and F(gamma) on gamma's grid, by vertical ray shooting.
EssentialCurve upper_boundary_op(const EssentialCurve& gamma, const CylMap& F, int map_index = 0, int gen = 0,
                                 const Band* domain = nullptr);

enum class Outcome { Connecting, Obstruction };
const char* outcome_name(Outcome o);

struct OrbitStep {
  CylinderPoint v;
  int map_index = -1;  // map applied to v to get the next point; -1 on the last point
};

struct TransportCertificate {
  Outcome outcome = Outcome::Obstruction;
  std::vector<OrbitStep> connecting;
  EssentialCurve obstruction;
  std::vector<double> residuals;  // per map, obstruction invariance
  int generations = 0;
  double endpoint_tol = 0.0;
  std::vector<EssentialCurve> history;  // gamma_0 .. gamma_m
  bool monotone = true;
};

struct TransportOptions {
  double tol = 1e-7;
  int max_gen = 2000;
  int stall_generations = 5;
  double endpoint_tol = -1.0;  // default: domain height / samples
  bool keep_history = true;
};

/// Throws GenerationLimit when neither outcome is reached, BandOverflow when the envelope leaves A'.
TransportCertificate birkhoff_transport(const IFS& ifs, const EssentialCurve& gamma_minus,
                                        const EssentialCurve& gamma_plus, const TransportOptions& opt = {});

struct ValidationReport {
  bool ok = false;
  double max_step_error = 0.0;
  double max_residual = 0.0;
  std::string diagnosis;
};

ValidationReport validate_certificate(const TransportCertificate& cert, const IFS& ifs,
                                      const EssentialCurve& gamma_minus, const EssentialCurve& gamma_plus,
                                      double tol);

struct ReachabilityGrid {
  int n_phi = 0, n_I = 0;
  Band domain;
  std::vector<char> reached;  // j * n_phi + i
  bool goal_reached = false;
  bool at(int i, int j) const { return reached[static_cast<std::size_t>(j) * n_phi + i] != 0; }
  /// highest reached row per column
  std::vector<int> top_rows() const;
};

/// Breadth-first closure of the cells meeting gamma_minus; goal = any reached cell reaching gamma_plus.
ReachabilityGrid brute_force_reachability(const IFS& ifs, int n_phi, int n_I, const EssentialCurve& gamma_minus,
                                          const EssentialCurve& gamma_plus, double cell_tol = 0.0);

// synthetic instances -------------------------------------------------------------------------

struct LiftSpec {
  double lo = 0.0, hi = 1.0;  // plateau in phi
  double ramp = 0.2;          // smooth cutoff width on each side
  double amplitude = 0.05;
  double barrier = std::numeric_limits<double>::infinity();  // lift vanishes at and above
  double barrier_width = 0.05;                                // linear taper below the barrier
};

struct SyntheticSpec {
  double rotation = 0.3;  // turns per step
  double twist = 0.0;     // d(turns)/dy
  std::vector<LiftSpec> lifts;
  bool copy_f0 = false;   // F1 = F0
  Band domain{0.0, 0.5};
};

IFS make_synthetic_ifs(const SyntheticSpec& spec);

/// F0 = restricted map and F_n = sampled scattering maps.
IFS make_cylinder_ifs(const MapDef& map, const CylinderGraph& cyl, const std::vector<ScatteringMapSample>& F,
                      Band domain);

}  // namespace driftlab
