#pragma once

// Newton solver for finite orbit segments P_0..P_T of a map with four scalar side
// conditions. Shared by the homoclinic and shadowing modules.

#include "driftlab/map_core.hpp"

#include <functional>
#include <vector>

namespace driftlab::detail {

struct OrbitConstraint {
  int index = 0;
  std::function<double(const Vec4&)> g;
  // analytic gradient; finite differences when empty
  std::function<Vec4(const Vec4&)> grad;
};

struct OrbitSolveOptions {
  int max_iter = 40;
  double tol = 1e-12;     // target sup-norm residual
  double accept = 1e-9;   // accepted when Newton stalls above tol
};

struct OrbitSolveResult {
  std::vector<Vec4> P;
  double residual = 0.0;  // sup-norm of step defects and constraints
  double step_defect = 0.0;
  int iterations = 0;
  bool converged = false;
};

OrbitSolveResult solve_orbit(const MapDef& map, std::vector<Vec4> guess, const std::vector<OrbitConstraint>& cons,
                             const OrbitSolveOptions& opt = {});

/// sup_t |Phi(P_t) - P_{t+1}| with angle components wrapped
double orbit_defect(const MapDef& map, const std::vector<Vec4>& P);

/// Helpers for common linear constraints.
OrbitConstraint fix_phi(int index, double phi);
OrbitConstraint fix_I(int index, double I);

}  // namespace driftlab::detail
