#include "driftlab/map_core.hpp"

#include <random>

namespace driftlab {

const char* map_kind_name(MapKind k) {
  switch (k) {
    case MapKind::ProductTwistStandard: return "ProductTwistStandard";
    case MapKind::DoubleStandard: return "DoubleStandard";
    case MapKind::PerturbedComposite: return "PerturbedComposite";
  }
  return "?";
}

MapKind map_kind_from_name(const std::string& s) {
  if (s == "ProductTwistStandard") return MapKind::ProductTwistStandard;
  if (s == "DoubleStandard") return MapKind::DoubleStandard;
  if (s == "PerturbedComposite") return MapKind::PerturbedComposite;
  throw Error(ErrorCode::ConfigError, "unknown map kind '" + s + "'");
}

void PerturbationStep::eval(double phi, double x, double* f, double grad[2], double hess[3]) const {
  double fv = 0.0, gp = 0.0, gx = 0.0, hpp = 0.0, hpx = 0.0, hxx = 0.0;
  for (const auto& t : terms) {
    const double th = t.m * phi + t.n * x;
    const double s = std::sin(th), c = std::cos(th);
    const double m = t.m, n = t.n;
    if (t.basis == Basis::Sin) {
      fv += t.coeff * s;
      gp += t.coeff * m * c;
      gx += t.coeff * n * c;
      hpp -= t.coeff * m * m * s;
      hpx -= t.coeff * m * n * s;
      hxx -= t.coeff * n * n * s;
    } else {
      fv += t.coeff * c;
      gp -= t.coeff * m * s;
      gx -= t.coeff * n * s;
      hpp -= t.coeff * m * m * c;
      hpx -= t.coeff * m * n * c;
      hxx -= t.coeff * n * n * c;
    }
  }
  if (f) *f = fv;
  if (grad) {
    grad[0] = gp;
    grad[1] = gx;
  }
  if (hess) {
    hess[0] = hpp;
    hess[1] = hpx;
    hess[2] = hxx;
  }
}

double MapDef::normal_k() const {
  return effective_base() == MapKind::DoubleStandard ? k2 : k;
}

double MapDef::omega(double I) const {
  double r = 0.0;
  for (std::size_t i = omega_coeffs.size(); i-- > 0;) r = r * I + omega_coeffs[i];
  return r;
}

double MapDef::domega(double I) const {
  double r = 0.0;
  for (std::size_t i = omega_coeffs.size(); i-- > 1;) r = r * I + static_cast<double>(i) * omega_coeffs[i];
  return r;
}

MapDef product_twist_standard(double k, std::vector<double> omega) {
  MapDef m;
  m.kind = MapKind::ProductTwistStandard;
  m.k = k;
  m.omega_coeffs = std::move(omega);
  return m;
}

MapDef double_standard(double k1, double k2) {
  MapDef m;
  m.kind = MapKind::DoubleStandard;
  m.k1 = k1;
  m.k2 = k2;
  return m;
}

MapDef perturbed(const MapDef& base, std::vector<PerturbationStep> steps) {
  MapDef m = base;
  m.kind = MapKind::PerturbedComposite;
  m.base_kind = base.effective_base();
  for (auto& s : base.perturbations) steps.push_back(s);
  m.perturbations = std::move(steps);
  return m;
}

namespace {

Vec4 base_forward(const MapDef& m, const Vec4& p) {
  Vec4 q;
  const double s = m.defect.y_scale;
  if (m.effective_base() == MapKind::DoubleStandard) {
    q[kI] = p[kI] + m.k1 * std::sin(p[kPhi]) + m.defect.I_shift;
    q[kPhi] = p[kPhi] + q[kI];
    q[kY] = s * p[kY] + m.k2 * std::sin(p[kX]);
  } else {
    q[kPhi] = p[kPhi] + m.omega(p[kI]);
    q[kI] = p[kI] + m.defect.I_shift;
    q[kY] = s * p[kY] + m.k * std::sin(p[kX]);
  }
  q[kX] = p[kX] + q[kY];
  return q;
}

Vec4 base_inverse(const MapDef& m, const Vec4& q) {
  Vec4 p;
  const double s = m.defect.y_scale;
  p[kX] = q[kX] - q[kY];
  if (m.effective_base() == MapKind::DoubleStandard) {
    p[kPhi] = q[kPhi] - q[kI];
    p[kI] = q[kI] - m.defect.I_shift - m.k1 * std::sin(p[kPhi]);
    p[kY] = (q[kY] - m.k2 * std::sin(p[kX])) / s;
  } else {
    p[kI] = q[kI] - m.defect.I_shift;
    p[kPhi] = q[kPhi] - m.omega(p[kI]);
    p[kY] = (q[kY] - m.k * std::sin(p[kX])) / s;
  }
  return p;
}

Mat4 base_jacobian(const MapDef& m, const Vec4& p) {
  Mat4 J = Mat4::Zero();
  const double s = m.defect.y_scale;
  if (m.effective_base() == MapKind::DoubleStandard) {
    const double c = m.k1 * std::cos(p[kPhi]);
    J(kI, kPhi) = c;
    J(kI, kI) = 1.0;
    J(kPhi, kPhi) = 1.0 + c;
    J(kPhi, kI) = 1.0;
  } else {
    J(kPhi, kPhi) = 1.0;
    J(kPhi, kI) = m.domega(p[kI]);
    J(kI, kI) = 1.0;
  }
  const double kc = m.normal_k() * std::cos(p[kX]);
  J(kY, kX) = kc;
  J(kY, kY) = s;
  J(kX, kX) = 1.0 + kc;
  J(kX, kY) = s;
  return J;
}

void step_forward(const PerturbationStep& st, Vec4& p, double sign) {
  double g[2];
  st.eval(p[kPhi], p[kX], nullptr, g, nullptr);
  p[kI] -= sign * st.epsilon * g[0];
  p[kY] -= sign * st.epsilon * g[1];
}

Mat4 step_jacobian(const PerturbationStep& st, const Vec4& p) {
  double h[3];
  st.eval(p[kPhi], p[kX], nullptr, nullptr, h);
  Mat4 J = Mat4::Identity();
  J(kI, kPhi) = -st.epsilon * h[0];
  J(kI, kX) = -st.epsilon * h[1];
  J(kY, kPhi) = -st.epsilon * h[1];
  J(kY, kX) = -st.epsilon * h[2];
  return J;
}

}  // namespace

Vec4 apply_lifted(const MapDef& map, const Vec4& p) {
  Vec4 q = base_forward(map, p);
  for (std::size_t i = map.perturbations.size(); i-- > 0;) {
    const auto& st = map.perturbations[i];
    if (st.epsilon != 0.0) step_forward(st, q, 1.0);
  }
  return q;
}

Vec4 apply_inverse_lifted(const MapDef& map, const Vec4& q) {
  Vec4 p = q;
  for (const auto& st : map.perturbations)
    if (st.epsilon != 0.0) step_forward(st, p, -1.0);
  return base_inverse(map, p);
}

PhasePoint apply(const MapDef& map, const PhasePoint& p) {
  return PhasePoint::from(apply_lifted(map, p.vec())).reduced();
}

PhasePoint apply_inverse(const MapDef& map, const PhasePoint& p) {
  return PhasePoint::from(apply_inverse_lifted(map, p.vec())).reduced();
}

Mat4 jacobian_fd(const MapDef& map, const Vec4& p, double h) {
  Mat4 J;
  for (int c = 0; c < 4; ++c) {
    const double hc = h * std::max(1.0, std::abs(p[c]));
    Vec4 a = p, b = p;
    a[c] += hc;
    b[c] -= hc;
    J.col(c) = (apply_lifted(map, a) - apply_lifted(map, b)) / (2.0 * hc);
  }
  return J;
}

Mat4 jacobian(const MapDef& map, const Vec4& p) {
  if (!map.has_analytic_jacobian) return jacobian_fd(map, p);
  Mat4 J = base_jacobian(map, p);
  Vec4 q = base_forward(map, p);
  for (std::size_t i = map.perturbations.size(); i-- > 0;) {
    const auto& st = map.perturbations[i];
    if (st.epsilon == 0.0) continue;
    J = step_jacobian(st, q) * J;
    step_forward(st, q, 1.0);
  }
  return J;
}

Mat4 jacobian_inverse(const MapDef& map, const Vec4& p) {
  return jacobian(map, apply_inverse_lifted(map, p)).inverse();
}

Mat4 omega_matrix() {
  Mat4 O = Mat4::Zero();
  O(kI, kPhi) = 1.0;
  O(kPhi, kI) = -1.0;
  O(kY, kX) = 1.0;
  O(kX, kY) = -1.0;
  return O;
}

CheckReport check_symplectic(const MapDef& map, const std::vector<PhasePoint>& pts, double tol) {
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be positive");
  CheckReport r;
  r.name = "symplectic";
  r.tolerance = tol;
  const Mat4 O = omega_matrix();
  std::vector<double> res(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    Mat4 J = jacobian(map, pts[i]);
    res[i] = (J.transpose() * O * J - O).cwiseAbs().maxCoeff();
  });
  for (std::size_t i = 0; i < res.size(); ++i) {
    if (res[i] > r.max_residual) {
      r.max_residual = res[i];
      r.worst_index = i;
    }
  }
  r.passed = r.max_residual <= tol;
  if (!r.passed) {
    const auto& w = pts[r.worst_index];
    r.detail = "J^T Omega J - Omega residual " + std::to_string(r.max_residual) + " at (" + std::to_string(w.phi) +
               ", " + std::to_string(w.I) + ", " + std::to_string(w.x) + ", " + std::to_string(w.y) + ")";
  }
  return r;
}

namespace {

Vec4 loop_tangent(const Loop& loop, double t) {
  const double h = 1e-4;
  return (-loop(t + 2 * h) + 8.0 * loop(t + h) - 8.0 * loop(t - h) + loop(t - 2 * h)) / (12.0 * h);
}

// action of the loop and of its image at n nodes
std::pair<double, double> actions(const MapDef& map, const Loop& loop, int n) {
  std::vector<double> a(n), b(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const double t = static_cast<double>(i) / n;
    const Vec4 p = loop(t);
    const Vec4 dp = loop_tangent(loop, t);
    const Vec4 q = apply_lifted(map, p);
    const Vec4 dq = jacobian(map, p) * dp;
    a[i] = p[kI] * dp[kPhi] + p[kY] * dp[kX];
    b[i] = q[kI] * dq[kPhi] + q[kY] * dq[kX];
  });
  double sa = 0.0, sb = 0.0;
  for (int i = 0; i < n; ++i) {
    sa += a[i];
    sb += b[i];
  }
  return {sa / n, sb / n};
}

}  // namespace

ExactnessReport check_exact(const MapDef& map, const Loop& loop, int quadrature_n, double tol) {
  if (quadrature_n < 64) throw Error(ErrorCode::InvalidArgument, "quadrature_n must be >= 64");
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be positive");
  ExactnessReport r;
  r.check.name = "exactness";
  r.check.tolerance = tol;
  auto [a, b] = actions(map, loop, quadrature_n);
  auto [ah, bh] = actions(map, loop, quadrature_n / 2);
  auto [a2, b2] = actions(map, loop, quadrature_n * 2);
  r.action_loop = a;
  r.action_image = b;
  r.quad_error = std::max(std::abs(a - ah), std::abs(b - bh));
  const double diff = std::abs(b - a);
  r.check.max_residual = diff;
  const double doubling = std::max(std::abs(a2 - a), std::abs(b2 - b));
  if (doubling > tol) {
    r.check.passed = false;
    r.check.detail = "quadrature not converged: doubling changes integral by " + std::to_string(doubling);
    return r;
  }
  r.check.passed = diff < tol + r.quad_error;
  if (!r.check.passed) r.check.detail = "action integral changed by " + std::to_string(diff);
  return r;
}

MapDef MapFamily::evaluate(double mu1, double mu2) const {
  std::vector<PerturbationStep> st = steps;
  st[0].epsilon = mu1;
  if (st.size() > 1) st[1].epsilon = mu2;
  return perturbed(base, std::move(st));
}

MapFamily make_family(const MapDef& base, const std::vector<PerturbationStep>& steps) {
  if (steps.empty() || steps.size() > 2)
    throw Error(ErrorCode::InvalidArgument, "a family takes 1 or 2 perturbation steps");
  return MapFamily{base, steps};
}

SaddleData standard_saddle(double k) {
  if (!(k > 0.0)) throw Error(ErrorCode::InvalidArgument, "standard map strength must be positive");
  SaddleData s;
  s.k = k;
  const double tr = 2.0 + k;
  s.lambda_u = 0.5 * (tr + std::sqrt(tr * tr - 4.0));
  s.lambda_s = 1.0 / s.lambda_u;
  s.eu = Vec2(1.0, s.lambda_u - 1.0 - k).normalized();
  s.es = Vec2(1.0, s.lambda_s - 1.0 - k).normalized();
  return s;
}

std::vector<PhasePoint> random_points(std::size_t n, std::uint64_t seed, double I_lo, double I_hi, double y_lo,
                                      double y_hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi), act(I_lo, I_hi), mom(y_lo, y_hi);
  std::vector<PhasePoint> out(n);
  for (auto& p : out) {
    p.phi = ang(rng);
    p.I = act(rng);
    p.x = ang(rng);
    p.y = mom(rng);
  }
  return out;
}

}  // namespace driftlab
