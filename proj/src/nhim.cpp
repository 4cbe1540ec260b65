#include "driftlab/nhim.hpp"

#include <memory>

namespace driftlab {

namespace {

Vec4 lift_with(const GridField& g, const Vec2& v) {
  double n[2];
  g.eval(v[0], v[1], n);
  return Vec4(v[0], v[1], n[0], n[1]);
}

Vec2 offset_with(const GridField& g, const Vec4& P) {
  double n[2];
  g.eval(P[kPhi], P[kI], n);
  return Vec2(wrap_angle(P[kX]) - n[0], P[kY] - n[1]);
}

Vec4 step(const MapDef& map, const Vec4& P, int dir) {
  return dir > 0 ? apply_lifted(map, P) : apply_inverse_lifted(map, P);
}

Mat4 step_jacobian(const MapDef& map, const Vec4& P, int dir) {
  return dir > 0 ? jacobian(map, P) : jacobian_inverse(map, P);
}

// v with base(step(lift(v))) = w (phi compared mod 2pi); v returned lifted near the guess
Vec2 base_preimage(const MapDef& map, const GridField& g, const Vec2& w, int dir, Vec2 v) {
  for (int it = 0; it < 30; ++it) {
    Vec4 P = lift_with(g, v);
    Vec4 Q = step(map, P, dir);
    Vec2 G(wrap_angle(Q[kPhi] - w[0]), Q[kI] - w[1]);
    if (G.cwiseAbs().maxCoeff() < 1e-15) break;
    double n[2], dp[2], dI[2];
    g.eval(v[0], v[1], n, dp, dI);
    Mat4 J = step_jacobian(map, P, dir);
    Mat2 Dg;
    Dg << dp[0], dI[0], dp[1], dI[1];
    Mat2 A = J.block<2, 2>(0, 0) + J.block<2, 2>(0, 2) * Dg;
    Vec2 dv = A.partialPivLu().solve(-G);
    v += dv;
    if (dv.cwiseAbs().maxCoeff() < 1e-15) break;
  }
  return v;
}

double residual_of(const MapDef& map, const GridField& g) {
  std::vector<double> r(g.nodes());
  parallel_for(g.nodes(), [&](std::size_t k) {
    int i = static_cast<int>(k % g.n_phi()), j = static_cast<int>(k / g.n_phi());
    Vec4 Q = apply_lifted(map, lift_with(g, Vec2(g.phi_at(i), g.I_at(j))));
    r[k] = offset_with(g, Q).cwiseAbs().maxCoeff();
  });
  double m = 0.0;
  for (double v : r) m = std::max(m, v);
  return m;
}

}  // namespace

Vec2 CylinderGraph::normal(double phi, double I) const {
  double n[2];
  g.eval(phi, I, n);
  return Vec2(n[0], n[1]);
}

Mat2 CylinderGraph::dnormal(double phi, double I) const {
  double n[2], dp[2], dI[2];
  g.eval(phi, I, n, dp, dI);
  Mat2 D;
  D << dp[0], dI[0], dp[1], dI[1];
  return D;
}

Vec4 CylinderGraph::lift(const CylinderPoint& v) const { return lift_with(g, v.vec()); }
Vec2 CylinderGraph::offset(const Vec4& P) const { return offset_with(g, P); }
Vec2 CylinderGraph::eigen_offset(const Vec4& P) const { return saddle.to_eigen() * offset(P); }

double CylinderGraph::sup_norm() const {
  double m = 0.0;
  for (double v : g.raw()) m = std::max(m, std::abs(v));
  return m;
}

double cylinder_residual(const MapDef& map, const CylinderGraph& cyl) { return residual_of(map, cyl.g); }

CylinderGraph compute_cylinder(const MapDef& map, Band band, int n_phi, int n_I, double tol, int max_iter,
                               const CylinderGraph* seed) {
  if (!(band.hi > band.lo)) throw Error(ErrorCode::InvalidArgument, "band needs I_lo < I_hi");
  if (!(tol > 0.0) || max_iter < 1) throw Error(ErrorCode::InvalidArgument, "tol > 0 and max_iter >= 1 required");
  CylinderGraph cyl;
  cyl.band = band;
  cyl.tol = tol;
  cyl.saddle = standard_saddle(map.normal_k());
  cyl.g = GridField(n_phi, n_I, band.lo, band.hi, 2);
  if (seed) {
    if (seed->g.n_phi() != n_phi || seed->g.n_I() != n_I)
      throw Error(ErrorCode::InvalidArgument, "seed graph has a different grid");
    cyl.g = seed->g;
  }
  const Mat2 E = cyl.saddle.basis(), Einv = cyl.saddle.to_eigen();
  double res = residual_of(map, cyl.g);
  int stall = 0;
  int sweep = 0;
  while (res > tol) {
    if (sweep >= max_iter)
      throw Error(ErrorCode::NoConvergence, "graph transform reached max_iter with residual " + fmt_g(res));
    ++sweep;
    const GridField& old = cyl.g;
    GridField next = old;
    parallel_for(old.nodes(), [&](std::size_t k) {
      int i = static_cast<int>(k % n_phi), j = static_cast<int>(k / n_phi);
      Vec2 w(old.phi_at(i), old.I_at(j));
      // stable component pulled forward, unstable component pulled backward
      Vec4 Pw = lift_with(old, w);
      Vec4 back = apply_inverse_lifted(map, Pw), fwd = apply_lifted(map, Pw);
      Vec2 vs = base_preimage(map, old, w, +1, Vec2(back[kPhi], back[kI]));
      Vec2 vu = base_preimage(map, old, w, -1, Vec2(fwd[kPhi], fwd[kI]));
      Vec2 as = Einv * offset_with(old, apply_lifted(map, lift_with(old, vs)));
      Vec2 au = Einv * offset_with(old, apply_inverse_lifted(map, lift_with(old, vu)));
      // offsets above are relative to the old graph at the image; add it back
      Vec2 gw(old.at(i, j, 0), old.at(i, j, 1));
      Vec2 a_old = Einv * gw;
      Vec2 a_new(a_old[0] + au[0], a_old[1] + as[1]);
      Vec2 n = E * a_new;
      next.at(i, j, 0) = n[0];
      next.at(i, j, 1) = n[1];
    });
    double r_new = residual_of(map, next);
    if (r_new > res) {
      for (std::size_t q = 0; q < next.raw().size(); ++q) next.raw()[q] = 0.5 * (next.raw()[q] + old.raw()[q]);
      r_new = residual_of(map, next);
    }
    stall = r_new >= res ? stall + 1 : 0;
    cyl.g = std::move(next);
    res = r_new;
    if (stall >= 10)
      throw Error(ErrorCode::NoConvergence, "graph transform residual stalled at " + fmt_g(res) + " for 10 sweeps (grid too coarse for tol?)");
  }
  cyl.residual = res;
  cyl.sweeps = sweep;
  return cyl;
}

Vec2 restricted_step(const MapDef& map, const CylinderGraph& cyl, const Vec2& v, int direction) {
  Vec4 Q = step(map, lift_with(cyl.g, v), direction);
  return Vec2(Q[kPhi], Q[kI]);
}

Vec2 restricted_iterate(const MapDef& map, const CylinderGraph& cyl, Vec2 v, int n) {
  const int dir = n >= 0 ? 1 : -1;
  for (int i = 0; i < std::abs(n); ++i) v = restricted_step(map, cyl, v, dir);
  return v;
}

CylinderPoint restricted_map(const MapDef& map, const CylinderGraph& cyl, const CylinderPoint& v) {
  if (!cyl.band.contains(v.I)) throw Error(ErrorCode::OutOfBand, "point outside the band");
  Vec2 w = restricted_step(map, cyl, v.vec(), +1);
  if (!cyl.band.contains(w[1])) throw Error(ErrorCode::OutOfBand, "image leaves the band");
  return {reduce_angle(w[0]), w[1]};
}

CylinderPoint restricted_map_inverse(const MapDef& map, const CylinderGraph& cyl, const CylinderPoint& v) {
  if (!cyl.band.contains(v.I)) throw Error(ErrorCode::OutOfBand, "point outside the band");
  Vec2 w = restricted_step(map, cyl, v.vec(), -1);
  if (!cyl.band.contains(w[1])) throw Error(ErrorCode::OutOfBand, "preimage leaves the band");
  return {reduce_angle(w[0]), w[1]};
}

Mat2 restricted_jacobian(const MapDef& map, const CylinderGraph& cyl, const Vec2& v, int direction) {
  Mat2 D;
  for (int c = 0; c < 2; ++c) {
    const double h = 1e-6 * std::max(1.0, std::abs(v[c]));
    Vec2 a = v, b = v;
    a[c] += h;
    b[c] -= h;
    Vec2 fa = restricted_step(map, cyl, a, direction), fb = restricted_step(map, cyl, b, direction);
    D.col(c) = (fa - fb) / (2 * h);
  }
  return D;
}

SpectralGapReport spectral_gap(const MapDef& map, const CylinderGraph& cyl, Vec2 scaling, const Band* sub) {
  if (!(scaling[0] > 0.0 && scaling[1] > 0.0)) throw Error(ErrorCode::InvalidArgument, "scaling weights must be > 0");
  const GridField& g = cyl.g;
  const Eigen::DiagonalMatrix<double, 2> S(scaling), Si(scaling.cwiseInverse());
  std::vector<double> al(g.nodes(), 0.0), la(g.nodes(), 0.0);
  std::vector<char> use(g.nodes(), 0);
  bool complex_normal = false;
  parallel_for(g.nodes(), [&](std::size_t k) {
    int i = static_cast<int>(k % g.n_phi()), j = static_cast<int>(k / g.n_phi());
    Vec2 v(g.phi_at(i), g.I_at(j));
    if (sub && !sub->contains(v[1], 1e-12)) return;
    use[k] = 1;
    Mat2 D = Si * restricted_jacobian(map, cyl, v, +1) * S;
    Mat2 Dinv = Si * restricted_jacobian(map, cyl, v, -1) * S;
    Eigen::JacobiSVD<Mat2> s1(D), s2(Dinv);
    al[k] = std::max(s1.singularValues()[0], s2.singularValues()[0]);
    Vec4 P = lift_with(g, v);
    Mat4 J = jacobian(map, P);
    Vec4 Q = apply_lifted(map, P);
    Mat2 N = J.block<2, 2>(2, 2) - cyl.dnormal(Q[kPhi], Q[kI]) * J.block<2, 2>(0, 2);
    const double tr = N.trace(), det = N.determinant(), disc = tr * tr - 4 * det;
    if (disc <= 0.0) {
      complex_normal = true;
      la[k] = 1.0;
      return;
    }
    const double r1 = 0.5 * (tr + std::copysign(std::sqrt(disc), tr));
    const double r2 = det / r1;
    const double mu_u = std::max(std::abs(r1), std::abs(r2)), mu_s = std::min(std::abs(r1), std::abs(r2));
    la[k] = std::max(mu_s, 1.0 / mu_u);
  });
  SpectralGapReport rep;
  rep.norm_scaling = scaling;
  for (std::size_t k = 0; k < g.nodes(); ++k) {
    if (!use[k]) continue;
    rep.alpha = std::max(rep.alpha, al[k]);
    rep.lambda = std::max(rep.lambda, la[k]);
  }
  rep.product_check = rep.alpha * rep.alpha * rep.lambda;
  rep.valid = !complex_normal && rep.alpha >= 1.0 && rep.lambda < 1.0 && rep.lambda > 0.0 && rep.product_check < 1.0;
  if (complex_normal) throw Error(ErrorCode::GapViolation, "normal block is not hyperbolic at some node");
  if (rep.product_check >= 1.0)
    throw Error(ErrorCode::GapViolation, "alpha^2 lambda = " + fmt_g(rep.product_check) + " >= 1");
  return rep;
}

namespace {

// per-iterate decay rate: least-squares slope of log d from the largest displacement on, above
// round-off. A fit rather than successive ratios, because the displacement vector rotates under
// the twist and single ratios can be large right after a dip.
double decay_rate(const std::vector<double>& d) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > d[peak]) peak = i;
  for (std::size_t i = peak; i < d.size(); ++i) {
    if (d[i] <= 1e-14) continue;
    const double x = static_cast<double>(i), y = std::log(d[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  if (n < 3) return 0.0;
  return std::exp((n * sxy - sx * sy) / (n * sxx - sx * sx));
}

// distance in the adapted norm |S^{-1} dv|, the norm the spectral report uses
double dist2(const Vec2& a, const Vec2& b, const Vec2& w) {
  return std::hypot(wrap_angle(a[0] - b[0]) / w[0], (a[1] - b[1]) / w[1]);
}

}  // namespace

ProjectionResult project(const Vec4& x, const HolonomyProjector& proj) {
  if (!proj.map || !proj.cylinder) throw Error(ErrorCode::InvalidArgument, "projector without map or cylinder");
  const MapDef& map = *proj.map;
  const CylinderGraph& cyl = *proj.cylinder;
  const int fwd = proj.direction == Direction::Stable ? +1 : -1;
  ProjectionResult out;
  Vec2 v0(reduce_angle(x[kPhi]), x[kI]);
  out.v = CylinderPoint::from(v0);
  if (cyl.offset(x).cwiseAbs().maxCoeff() <= 1e-15) return out;

  Vec4 P = x;
  Vec2 prev = v0, best = v0;
  double best_d = std::numeric_limits<double>::infinity();
  int best_n = 0;
  std::vector<double> inside_log;
  for (int n = 1; n <= proj.n_iter; ++n) {
    P = step(map, P, fwd);
    const bool inside = cyl.offset(P).norm() < proj.delta;
    if (!inside && n >= proj.n_burn) {
      if (best_d < proj.accept) break;
      throw Error(ErrorCode::EscapedChannel, "orbit left the channel after " + std::to_string(n) + " iterates");
    }
    Vec2 vh(P[kPhi], P[kI]);
    for (int i = 0; i < n; ++i) vh = restricted_step(map, cyl, vh, -fwd);
    const double d = dist2(vh, prev, proj.norm_scaling);
    out.convergence_log.push_back(d);
    prev = vh;
    if (!inside) {
      inside_log.clear();
      continue;
    }
    inside_log.push_back(d);
    if (d < best_d) {
      best_d = d;
      best = vh;
      best_n = n;
    }
    if (d < proj.tol) break;
    if (best_d < proj.accept && d > 1e3 * best_d) break;  // round-off growth took over
  }
  if (!(best_d < proj.tol || best_d < proj.accept))
    throw Error(ErrorCode::NoConvergence, "asymptotic phase did not settle (best step " + fmt_g(best_d) + ")");
  out.v = {reduce_angle(best[0]), best[1]};
  out.n = best_n;
  out.displacement = best_d;
  out.ratio = decay_rate(inside_log);
  return out;
}

ProjectionResult project_stable(const Vec4& x, const HolonomyProjector& proj) {
  HolonomyProjector p = proj;
  p.direction = Direction::Stable;
  return project(x, p);
}

ProjectionResult project_unstable(const Vec4& x, const HolonomyProjector& proj) {
  HolonomyProjector p = proj;
  p.direction = Direction::Unstable;
  return project(x, p);
}

ProjectionResult project_orbit(const MapDef& map, const CylinderGraph& cyl, const std::vector<Vec4>& orbit,
                               Direction dir, double tol, Vec2 scaling) {
  if (orbit.empty()) throw Error(ErrorCode::InvalidArgument, "empty orbit");
  const int back = dir == Direction::Stable ? -1 : +1;
  ProjectionResult out;
  Vec2 prev(orbit[0][kPhi], orbit[0][kI]);
  out.v = CylinderPoint::from(Vec2(reduce_angle(prev[0]), prev[1]));
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t n = 1; n < orbit.size(); ++n) {
    Vec2 vh(orbit[n][kPhi], orbit[n][kI]);
    for (std::size_t i = 0; i < n; ++i) vh = restricted_step(map, cyl, vh, back);
    const double d = dist2(vh, prev, scaling);
    out.convergence_log.push_back(d);
    prev = vh;
    if (d <= best_d) {
      best_d = d;
      out.v = {reduce_angle(vh[0]), vh[1]};
      out.n = static_cast<int>(n);
    }
    if (d < tol) break;
  }
  out.displacement = best_d;
  out.ratio = decay_rate(out.convergence_log);
  return out;
}

Vec4 manifold_point(const MapDef& map, const CylinderGraph& cyl, const CylinderPoint& v, Direction dir, double s0,
                    int n) {
  const Vec2 e = dir == Direction::Stable ? cyl.saddle.es : cyl.saddle.eu;
  Vec4 P = cyl.lift(v);
  P[kX] += s0 * e[0];
  P[kY] += s0 * e[1];
  const int d = dir == Direction::Stable ? -1 : +1;
  for (int i = 0; i < n; ++i) P = step(map, P, d);
  return P;
}

namespace {

// periodic in phi, clamped stencils in I and a_u
class Field3 {
 public:
  Field3(int np, int ni, int nu, Band b, double hw)
      : np_(np), ni_(ni), nu_(nu), band_(b), hw_(hw), v_(static_cast<std::size_t>(np) * ni * nu, 0.0) {}
  double phi(int i) const { return kTwoPi * i / np_; }
  double I(int j) const { return band_.lo + band_.height() * j / (ni_ - 1); }
  double u(int l) const { return -hw_ + 2 * hw_ * l / (nu_ - 1); }
  std::size_t size() const { return v_.size(); }
  std::size_t idx(int i, int j, int l) const { return (static_cast<std::size_t>(l) * ni_ + j) * np_ + i; }
  double& at(int i, int j, int l) { return v_[idx(i, j, l)]; }
  double at(int i, int j, int l) const { return v_[idx(i, j, l)]; }
  void unpack(std::size_t k, int& i, int& j, int& l) const {
    i = static_cast<int>(k % np_);
    j = static_cast<int>((k / np_) % ni_);
    l = static_cast<int>(k / (static_cast<std::size_t>(np_) * ni_));
  }
  std::vector<double>& raw() { return v_; }
  const std::vector<double>& raw() const { return v_; }

  double eval(double ph, double Iv, double uv) const {
    auto stencil = [](double t, int n, bool periodic, int& i0, double& s) {
      i0 = static_cast<int>(std::floor(t));
      if (!periodic) i0 = std::clamp(i0, 1, n - 3);
      s = t - i0;
    };
    int i0, j0, l0;
    double sp, sI, su;
    stencil(reduce_angle(ph) / (kTwoPi / np_), np_, true, i0, sp);
    stencil((Iv - band_.lo) / (band_.height() / (ni_ - 1)), ni_, false, j0, sI);
    stencil((uv + hw_) / (2 * hw_ / (nu_ - 1)), nu_, false, l0, su);
    double wp[4], wI[4], wu[4], d[4];
    lagrange4(sp, wp, d);
    lagrange4(sI, wI, d);
    lagrange4(su, wu, d);
    double r = 0.0;
    for (int c = 0; c < 4; ++c)
      for (int b = 0; b < 4; ++b)
        for (int a = 0; a < 4; ++a) {
          int i = ((i0 - 1 + a) % np_ + np_) % np_;
          r += wp[a] * wI[b] * wu[c] * at(i, j0 - 1 + b, l0 - 1 + c);
        }
    return r;
  }

 private:
  int np_, ni_, nu_;
  Band band_;
  double hw_;
  std::vector<double> v_;
};

struct TransformCtx {
  const MapDef& map;
  const CylinderGraph& cyl;
  Mat2 E;
};

Vec4 surface_point(const TransformCtx& c, const Field3& w, const Vec3& z) {
  Vec4 P = c.cyl.lift(CylinderPoint{z[0], z[1]});
  Vec2 n = c.E * Vec2(z[2], w.eval(z[0], z[1], z[2]));
  P[kX] += n[0];
  P[kY] += n[1];
  return P;
}

// one forward graph transform step; returns false on a fold
bool transform(const TransformCtx& c, const Field3& w, Field3& out, double lambda_u) {
  std::vector<char> ok(w.size(), 1);
  parallel_for(w.size(), [&](std::size_t k) {
    int i, j, l;
    w.unpack(k, i, j, l);
    const Vec3 target(w.phi(i), w.I(j), w.u(l));
    Vec2 vb = restricted_step(c.map, c.cyl, Vec2(target[0], target[1]), -1);
    Vec3 z(vb[0], vb[1], target[2] / lambda_u);
    auto G = [&](const Vec3& zz, Vec4* img) {
      Vec4 Q = apply_lifted(c.map, surface_point(c, w, zz));
      if (img) *img = Q;
      return Vec3(wrap_angle(Q[kPhi] - target[0]), Q[kI] - target[1], c.cyl.eigen_offset(Q)[0] - target[2]);
    };
    Vec4 Q;
    bool conv = false;
    for (int it = 0; it < 25; ++it) {
      Vec3 r = G(z, nullptr);
      if (r.cwiseAbs().maxCoeff() < 1e-15) {
        conv = true;
        break;
      }
      Eigen::Matrix3d A;
      for (int q = 0; q < 3; ++q) {
        Vec3 a = z, b = z;
        const double h = 1e-7;
        a[q] += h;
        b[q] -= h;
        A.col(q) = (G(a, nullptr) - G(b, nullptr)) / (2 * h);
      }
      if (A(2, 2) <= 0.0) break;  // a_u no longer increasing along the surface
      Vec3 dz = A.partialPivLu().solve(-r);
      z += dz;
      if (dz.cwiseAbs().maxCoeff() < 1e-15) {
        conv = true;
        break;
      }
    }
    Vec3 r = G(z, &Q);
    if (!conv && r.cwiseAbs().maxCoeff() > 1e-12) ok[k] = 0;
    out.raw()[k] = c.cyl.eigen_offset(Q)[1];
  });
  for (char o : ok)
    if (!o) return false;
  return true;
}

}  // namespace

namespace {
std::shared_ptr<Field3> unstable_limit(const MapDef& map, const CylinderGraph& cyl, const LambdaLemmaOptions& opt) {
  TransformCtx c{map, cyl, cyl.saddle.basis()};
  auto w = std::make_shared<Field3>(opt.n_phi, opt.n_I, opt.n_u, opt.sub, opt.half_width);
  Field3 next = *w;
  double last = 1.0;
  for (int m = 0; m < opt.limit_iterations; ++m) {
    if (!transform(c, *w, next, cyl.saddle.lambda_u))
      throw Error(ErrorCode::GraphFold, "unstable manifold graph folded");
    double d = 0.0;
    for (std::size_t k = 0; k < next.size(); ++k) d = std::max(d, std::abs(next.raw()[k] - w->raw()[k]));
    std::swap(*w, next);
    if (d < 1e-16 || (d >= last && d < 1e-14)) break;
    last = d;
  }
  return w;
}
}  // namespace

SeedSurface local_unstable_manifold(const MapDef& map, const CylinderGraph& cyl, const LambdaLemmaOptions& opt) {
  auto w = unstable_limit(map, cyl, opt);
  return [w](double p, double I, double u) { return w->eval(p, I, u); };
}

LambdaLemmaReport lambda_lemma_check(const MapDef& map, const CylinderGraph& cyl, const SeedSurface& seed, int m_max,
                                     const LambdaLemmaOptions& opt) {
  LambdaLemmaReport rep;
  auto h = unstable_limit(map, cyl, opt);
  TransformCtx c{map, cyl, cyl.saddle.basis()};
  Field3 w(opt.n_phi, opt.n_I, opt.n_u, opt.sub, opt.half_width), next = w;
  for (std::size_t k = 0; k < w.size(); ++k) {
    int i, j, l;
    w.unpack(k, i, j, l);
    w.raw()[k] = seed(w.phi(i), w.I(j), w.u(l));
  }
  const double du = 2 * opt.half_width / (opt.n_u - 1);
  auto distances = [&](const Field3& f, double& c0, double& c1) {
    c0 = 0.0;
    c1 = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      int i, j, l;
      f.unpack(k, i, j, l);
      c0 = std::max(c0, std::abs(f.raw()[k] - h->raw()[k]));
      if (l > 0 && l + 1 < opt.n_u) {
        double e1 = f.at(i, j, l + 1) - h->at(i, j, l + 1), e0 = f.at(i, j, l - 1) - h->at(i, j, l - 1);
        c1 = std::max(c1, std::abs(e1 - e0) / (2 * du));
      }
    }
  };
  double c0, c1;
  distances(w, c0, c1);
  rep.c0.push_back(c0);
  rep.c1.push_back(c1);
  for (int m = 1; m <= m_max; ++m) {
    if (!transform(c, w, next, cyl.saddle.lambda_u)) {
      rep.graph_ok = false;
      rep.detail = "iterated surface is not a graph at iterate " + std::to_string(m);
      break;
    }
    std::swap(w, next);
    distances(w, c0, c1);
    rep.c0.push_back(c0);
    rep.c1.push_back(c1);
  }
  double sum = 0.0;
  int cnt = 0;
  for (std::size_t m = 1; m < rep.c0.size(); ++m) {
    if (rep.c0[m - 1] <= 1e-14) break;
    double r = rep.c0[m] / rep.c0[m - 1];
    rep.ratios.push_back(r);
    sum += r;
    ++cnt;
  }
  rep.mean_ratio = cnt ? sum / cnt : 0.0;
  return rep;
}

}  // namespace driftlab
