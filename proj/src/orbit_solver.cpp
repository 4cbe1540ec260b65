#include "orbit_solver.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace driftlab::detail {

namespace {

Eigen::VectorXd residual(const MapDef& map, const std::vector<Vec4>& P, const std::vector<OrbitConstraint>& cons) {
  const int T = static_cast<int>(P.size()) - 1;
  Eigen::VectorXd r(4 * T + static_cast<int>(cons.size()));
  for (int t = 0; t < T; ++t) r.segment<4>(4 * t) = phase_diff(apply_lifted(map, P[t]), P[t + 1]);
  for (std::size_t c = 0; c < cons.size(); ++c) r[4 * T + c] = cons[c].g(P[cons[c].index]);
  return r;
}

Vec4 constraint_gradient(const OrbitConstraint& c, const Vec4& p) {
  if (c.grad) return c.grad(p);
  Vec4 g;
  for (int i = 0; i < 4; ++i) {
    const double h = 1e-7 * std::max(1.0, std::abs(p[i]));
    Vec4 a = p, b = p;
    a[i] += h;
    b[i] -= h;
    g[i] = (c.g(a) - c.g(b)) / (2 * h);
  }
  return g;
}

}  // namespace

double orbit_defect(const MapDef& map, const std::vector<Vec4>& P) {
  double m = 0.0;
  for (std::size_t t = 0; t + 1 < P.size(); ++t)
    m = std::max(m, phase_diff(apply_lifted(map, P[t]), P[t + 1]).cwiseAbs().maxCoeff());
  return m;
}

OrbitSolveResult solve_orbit(const MapDef& map, std::vector<Vec4> P, const std::vector<OrbitConstraint>& cons,
                             const OrbitSolveOptions& opt) {
  const int T = static_cast<int>(P.size()) - 1;
  const int N = 4 * (T + 1);
  if (T < 0 || 4 * T + static_cast<int>(cons.size()) != N)
    throw Error(ErrorCode::InvalidArgument, "orbit problem needs exactly four side conditions");
  OrbitSolveResult out;
  Eigen::VectorXd r = residual(map, P, cons);
  double rn = r.cwiseAbs().maxCoeff();
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  bool pattern_done = false;
  int it = 0;
  for (; it < opt.max_iter && rn > opt.tol; ++it) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(20 * T + 4 * cons.size());
    for (int t = 0; t < T; ++t) {
      Mat4 J = jacobian(map, P[t]);
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) trip.emplace_back(4 * t + a, 4 * t + b, J(a, b));
        trip.emplace_back(4 * t + a, 4 * (t + 1) + a, -1.0);
      }
    }
    for (std::size_t c = 0; c < cons.size(); ++c) {
      Vec4 g = constraint_gradient(cons[c], P[cons[c].index]);
      for (int b = 0; b < 4; ++b) trip.emplace_back(4 * T + static_cast<int>(c), 4 * cons[c].index + b, g[b]);
    }
    Eigen::SparseMatrix<double> A(N, N);
    A.setFromTriplets(trip.begin(), trip.end());
    if (!pattern_done) {
      lu.analyzePattern(A);
      pattern_done = true;
    }
    lu.factorize(A);
    if (lu.info() != Eigen::Success) break;
    Eigen::VectorXd dx = lu.solve(-r);
    if (lu.info() != Eigen::Success || !dx.allFinite()) break;
    double step = 1.0;
    bool improved = false;
    for (int k = 0; k < 12; ++k, step *= 0.5) {
      std::vector<Vec4> Q = P;
      for (int t = 0; t <= T; ++t) Q[t] += step * dx.segment<4>(4 * t);
      Eigen::VectorXd rq = residual(map, Q, cons);
      double qn = rq.cwiseAbs().maxCoeff();
      if (std::isfinite(qn) && (qn < rn || (k == 11 && qn < 10 * rn))) {
        P = std::move(Q);
        r = std::move(rq);
        improved = qn < rn;
        rn = qn;
        break;
      }
    }
    if (!improved) break;
  }
  for (auto& p : P) {
    p[kPhi] = reduce_angle(p[kPhi]);
    p[kX] = reduce_angle(p[kX]);
  }
  out.P = std::move(P);
  out.iterations = it;
  out.residual = rn;
  out.step_defect = orbit_defect(map, out.P);
  out.converged = rn <= opt.accept;
  return out;
}

OrbitConstraint fix_phi(int index, double phi) {
  return {index, [phi](const Vec4& p) { return wrap_angle(p[kPhi] - phi); },
          [](const Vec4&) { return Vec4(1, 0, 0, 0); }};
}

OrbitConstraint fix_I(int index, double I) {
  return {index, [I](const Vec4& p) { return p[kI] - I; }, [](const Vec4&) { return Vec4(0, 1, 0, 0); }};
}

}  // namespace driftlab::detail
