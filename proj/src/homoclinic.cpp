#include "driftlab/homoclinic.hpp"

#include "orbit_solver.hpp"

#include <Eigen/SVD>

#include <map>

namespace driftlab {

SaddleData find_saddle(double k) { return standard_saddle(k); }

Vec2 standard_map(double k, const Vec2& p) {
  const double y = p[1] + k * std::sin(p[0]);
  return Vec2(p[0] + y, y);
}

Vec2 standard_map_inverse(double k, const Vec2& p) {
  const double x = p[0] - p[1];
  return Vec2(x, p[1] - k * std::sin(x));
}

Vec2 separatrix_point(const SaddleData& s, Direction dir, int branch, double sigma, double s0, int n_fixed) {
  const int n = n_fixed >= 0 ? n_fixed : std::max(0, static_cast<int>(std::floor(sigma)));
  const Vec2& e = dir == Direction::Unstable ? s.eu : s.es;
  Vec2 p = s.fixed_point + (branch * s0 * std::pow(s.lambda_u, sigma - n)) * e;
  for (int i = 0; i < n; ++i) p = dir == Direction::Unstable ? standard_map(s.k, p) : standard_map_inverse(s.k, p);
  return p;
}

namespace {

struct Refiner {
  const SaddleData& s;
  Direction dir;
  int branch;
  const SeparatrixOptions& opt;
  int n;
  Separatrix& out;

  Vec2 at(double sg) const { return separatrix_point(s, dir, branch, sg, opt.s0, n); }

  // appends points strictly after a, up to and including b
  void refine(double sa, const Vec2& a, double sb, const Vec2& b, int depth) {
    const double sm = 0.5 * (sa + sb);
    const Vec2 m = at(sm);
    const double chord = (b - a).norm();
    const double sag = std::abs((b - a)[0] * (m - a)[1] - (b - a)[1] * (m - a)[0]) / std::max(chord, 1e-300);
    const bool ok = chord <= opt.max_segment && sag <= 0.25 * opt.max_turn * chord;
    if (!ok && depth < 40 && sb - sa > 1e-13 && out.pts.size() < opt.max_points) {
      refine(sa, a, sm, m, depth + 1);
      refine(sm, m, sb, b, depth + 1);
      return;
    }
    out.sigma.push_back(sb);
    out.pts.push_back(b);
    out.arc_length += chord;
  }
};

double circ_frac_dist(double a, double b) {
  double d = std::abs((a - std::floor(a)) - (b - std::floor(b)));
  return std::min(d, 1.0 - d);
}

bool segment_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d, double& t, double& u) {
  const Vec2 r = b - a, q = d - c;
  const double den = r[0] * q[1] - r[1] * q[0];
  if (std::abs(den) < 1e-300) return false;
  const Vec2 w = c - a;
  t = (w[0] * q[1] - w[1] * q[0]) / den;
  u = (w[0] * r[1] - w[1] * r[0]) / den;
  return t >= 0.0 && t < 1.0 && u >= 0.0 && u < 1.0;
}

// Newton on (sigma_u, sigma_s) with the iteration counts pinned
bool refine_intersection(const SaddleData& s, HomoclinicPoint& h, double tol) {
  const int nu = std::max(0, static_cast<int>(std::floor(h.sigma_u)));
  const int ns = std::max(0, static_cast<int>(std::floor(h.sigma_s)));
  const Vec2 shift(kTwoPi * h.wrap, 0.0);
  auto R = [&](double a, double b) {
    return Vec2(separatrix_point(s, Direction::Unstable, h.branch_u, a, h.s0, nu) -
                separatrix_point(s, Direction::Stable, h.branch_s, b, h.s0, ns) - shift);
  };
  Vec2 r = R(h.sigma_u, h.sigma_s);
  for (int it = 0; it < 40 && r.norm() > 0.1 * tol; ++it) {
    const double e = 1e-7;
    Mat2 J;
    J.col(0) = (R(h.sigma_u + e, h.sigma_s) - R(h.sigma_u - e, h.sigma_s)) / (2 * e);
    J.col(1) = (R(h.sigma_u, h.sigma_s + e) - R(h.sigma_u, h.sigma_s - e)) / (2 * e);
    Vec2 d = J.partialPivLu().solve(-r);
    if (!d.allFinite()) return false;
    double step = 1.0;
    for (int k = 0; k < 20; ++k, step *= 0.5) {
      Vec2 rn = R(h.sigma_u + step * d[0], h.sigma_s + step * d[1]);
      if (rn.norm() < r.norm() || k == 19) {
        h.sigma_u += step * d[0];
        h.sigma_s += step * d[1];
        r = rn;
        break;
      }
    }
    if (std::abs(d[0]) + std::abs(d[1]) < 1e-15) break;
  }
  h.residual = r.norm();
  const double e = 1e-7;
  Vec2 tu = R(h.sigma_u + e, h.sigma_s) - R(h.sigma_u - e, h.sigma_s);
  Vec2 ts = -(R(h.sigma_u, h.sigma_s + e) - R(h.sigma_u, h.sigma_s - e));
  const double c = std::abs(tu.dot(ts)) / (tu.norm() * ts.norm());
  h.angle = std::acos(std::clamp(c, 0.0, 1.0));
  Vec2 p = separatrix_point(s, Direction::Unstable, h.branch_u, h.sigma_u, h.s0, nu);
  h.p_h = Vec2(reduce_angle(p[0]), p[1]);
  return h.residual < tol;
}

double saddle_dist(const SaddleData& s, const Vec2& p) {
  return std::hypot(wrap_angle(p[0] - s.fixed_point[0]), p[1] - s.fixed_point[1]);
}

}  // namespace

Separatrix grow_separatrix(const SaddleData& s, Direction dir, int branch, const SeparatrixOptions& opt) {
  Separatrix out;
  out.dir = dir;
  out.branch = branch;
  out.sigma.push_back(0.0);
  out.pts.push_back(separatrix_point(s, dir, branch, 0.0, opt.s0, 0));
  for (int n = 0; n < 400; ++n) {
    Refiner r{s, dir, branch, opt, n, out};
    for (int i = 1; i <= opt.samples_per_domain; ++i) {
      const double sa = out.sigma.back();
      const double sb = n + static_cast<double>(i) / opt.samples_per_domain;
      r.refine(sa, r.at(sa), sb, r.at(sb), 0);
      if (out.arc_length > opt.arc_budget || out.pts.size() >= opt.max_points) return out;
    }
  }
  return out;
}

std::vector<HomoclinicPoint> find_homoclinic_points(const SaddleData& s, std::size_t max_count, double tol,
                                                    const SeparatrixOptions& opt) {
  std::vector<HomoclinicPoint> cand;
  for (int bu : {1, -1}) {
    Separatrix U = grow_separatrix(s, Direction::Unstable, bu, opt);
    for (int bs : {1, -1}) {
      Separatrix S = grow_separatrix(s, Direction::Stable, bs, opt);
      // bucket stable segments by y
      const double cell = std::max(opt.max_segment, 1e-3);
      std::multimap<long, std::size_t> buckets;
      for (std::size_t j = 0; j + 1 < S.pts.size(); ++j) {
        long lo = static_cast<long>(std::floor(std::min(S.pts[j][1], S.pts[j + 1][1]) / cell));
        long hi = static_cast<long>(std::floor(std::max(S.pts[j][1], S.pts[j + 1][1]) / cell));
        for (long b = lo; b <= hi; ++b) buckets.emplace(b, j);
      }
      for (std::size_t i = 0; i + 1 < U.pts.size(); ++i) {
        const Vec2 &a = U.pts[i], &b = U.pts[i + 1];
        long lo = static_cast<long>(std::floor(std::min(a[1], b[1]) / cell));
        long hi = static_cast<long>(std::floor(std::max(a[1], b[1]) / cell));
        for (long bk = lo; bk <= hi; ++bk) {
          auto range = buckets.equal_range(bk);
          for (auto it = range.first; it != range.second; ++it) {
            const std::size_t j = it->second;
            const int w = static_cast<int>(std::lround((a[0] - S.pts[j][0]) / kTwoPi));
            const Vec2 sh(kTwoPi * w, 0.0);
            double t, u;
            if (!segment_cross(a, b, S.pts[j] + sh, S.pts[j + 1] + sh, t, u)) continue;
            Vec2 p = a + t * (b - a);
            if (saddle_dist(s, p) < 1e-3) continue;
            HomoclinicPoint h;
            h.branch_u = bu;
            h.branch_s = bs;
            h.wrap = w;
            h.s0 = opt.s0;
            h.sigma_u = U.sigma[i] + t * (U.sigma[i + 1] - U.sigma[i]);
            h.sigma_s = S.sigma[j] + u * (S.sigma[j + 1] - S.sigma[j]);
            cand.push_back(h);
          }
        }
      }
    }
  }
  std::sort(cand.begin(), cand.end(), [](const HomoclinicPoint& a, const HomoclinicPoint& b) {
    return a.sigma_u != b.sigma_u ? a.sigma_u < b.sigma_u : a.branch_u > b.branch_u;
  });
  std::vector<HomoclinicPoint> out;
  for (auto& h : cand) {
    bool dup = false;
    for (const auto& o : out)
      if (o.branch_u == h.branch_u && circ_frac_dist(o.sigma_u, h.sigma_u) < 1e-6) dup = true;
    if (dup) continue;
    if (!refine_intersection(s, h, tol)) continue;
    for (const auto& o : out)
      if (o.branch_u == h.branch_u && circ_frac_dist(o.sigma_u, h.sigma_u) < 1e-6) dup = true;
    if (dup) continue;
    out.push_back(h);
    if (out.size() >= max_count) break;
  }
  return out;
}

HomoclinicPoint find_primary_homoclinic(const SaddleData& s, double tol, const SeparatrixOptions& opt) {
  // first crossing of the symmetry line x = pi by the unstable branch; reversibility puts it on W^s
  Separatrix U = grow_separatrix(s, Direction::Unstable, 1, opt);
  double sig = -1.0;
  for (std::size_t i = 0; i + 1 < U.pts.size() && sig < 0; ++i) {
    const double a = wrap_angle(U.pts[i][0] - kPi), b = wrap_angle(U.pts[i + 1][0] - kPi);
    if (a * b > 0.0 || std::abs(a - b) > kPi) continue;
    double lo = U.sigma[i], hi = U.sigma[i + 1], flo = a;
    const int n = static_cast<int>(std::floor(lo));
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double fm = wrap_angle(separatrix_point(s, Direction::Unstable, 1, mid, opt.s0, n)[0] - kPi);
      if ((fm <= 0.0) == (flo <= 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    sig = 0.5 * (lo + hi);
  }
  auto pts = find_homoclinic_points(s, 64, tol, opt);
  if (pts.empty()) throw Error(ErrorCode::NotFound, "no separatrix intersection within the arc budget");
  for (const auto& h : pts) {
    if (sig < 0 || h.branch_u != 1 || circ_frac_dist(h.sigma_u, sig) > 1e-6) continue;
    HomoclinicPoint o = shift_homoclinic(s, h, static_cast<int>(std::lround(sig - h.sigma_u)));
    refine_intersection(s, o, tol);
    return o;
  }
  return pts.front();
}

Vec2 homoclinic_orbit_point(const SaddleData& s, const HomoclinicPoint& h, int j) {
  Vec2 p;
  if (j >= 0) {
    p = separatrix_point(s, Direction::Stable, h.branch_s, h.sigma_s - j, h.s0);
    p[0] += kTwoPi * h.wrap;
  } else {
    p = separatrix_point(s, Direction::Unstable, h.branch_u, h.sigma_u + j, h.s0);
  }
  return Vec2(reduce_angle(p[0]), p[1]);
}

HomoclinicPoint shift_homoclinic(const SaddleData& s, const HomoclinicPoint& h, int j) {
  HomoclinicPoint o = h;
  o.sigma_u += j;
  o.sigma_s -= j;
  o.p_h = homoclinic_orbit_point(s, h, j);
  return o;
}

// ---------------------------------------------------------------------------------------------

CylinderPoint HomoclinicCylinder::node(int i, int j) const {
  const double h = domain.height() / (n_I - 1);
  return {kTwoPi * i / n_phi, j == n_I - 1 ? domain.hi : domain.lo + j * h};
}

namespace {

MapDef scale_perturbation(const MapDef& map, double s) {
  MapDef m = map;
  for (auto& p : m.perturbations) p.epsilon *= s;
  return m;
}

int window_length(const SaddleData& s, const HomoclinicPoint& h, int sign) {
  for (int m = 1; m < 2000; ++m) {
    if (saddle_dist(s, homoclinic_orbit_point(s, h, sign * m)) < 1e-10) return m;
  }
  throw Error(ErrorCode::NoConvergence, "homoclinic orbit does not approach the saddle");
}

std::vector<detail::OrbitConstraint> excursion_constraints(const CylinderGraph& cyl, const Vec2& b0, int T) {
  std::vector<detail::OrbitConstraint> c;
  c.push_back(detail::fix_phi(0, b0[0]));
  c.push_back(detail::fix_I(0, b0[1]));
  c.push_back({0, [&cyl](const Vec4& P) { return cyl.eigen_offset(P)[1]; }, {}});
  c.push_back({T, [&cyl](const Vec4& P) { return cyl.eigen_offset(P)[0]; }, {}});
  return c;
}

}  // namespace

ExcursionOrbit solve_excursion(const MapDef& map, const CylinderGraph& cyl, const HomoclinicCylinder& B,
                               const CylinderPoint& v_minus, int shift, const ExcursionOrbit* seed) {
  const int Mm = B.window_minus + shift, Mp = B.window_plus - shift;
  if (Mm < 1 || Mp < 1) throw Error(ErrorCode::InvalidArgument, "cylinder shift outside the solver window");
  const int T = Mm + Mp;
  const Vec2 b0 = restricted_iterate(map, cyl, v_minus.vec(), -Mm);
  const double slack = 0.25 * cyl.band.height();
  if (!cyl.band.contains(b0[1], slack))
    throw Error(ErrorCode::DomainExceeded, "excursion start leaves the cylinder band");

  std::vector<Vec4> guess;
  if (seed && static_cast<int>(seed->P.size()) == T + 1) {
    guess = seed->P;
  } else {
    guess.resize(T + 1);
    Vec2 b = b0;
    for (int t = 0; t <= T; ++t) {
      Vec4 P = cyl.lift(CylinderPoint::from(b));
      Vec2 q = homoclinic_orbit_point(cyl.saddle, B.hp, t - B.window_minus);
      P[kX] += wrap_angle(q[0]);
      P[kY] += q[1];
      guess[t] = P;
      if (t < T) b = restricted_step(map, cyl, b, +1);
    }
  }
  const auto cons = excursion_constraints(cyl, b0, T);
  detail::OrbitSolveOptions so;
  auto res = detail::solve_orbit(map, guess, cons, so);
  if (!res.converged) {
    // continuation in the perturbation size from the product solution
    double s = 0.0, ds = 0.25;
    auto cur = detail::solve_orbit(scale_perturbation(map, 0.0), guess, cons, so);
    if (!cur.converged) throw Error(ErrorCode::ContinuationFailed, "product excursion did not converge");
    while (s < 1.0) {
      const double sn = std::min(1.0, s + ds);
      auto nx = detail::solve_orbit(scale_perturbation(map, sn), cur.P, cons, so);
      if (nx.converged) {
        cur = std::move(nx);
        s = sn;
        ds = std::min(0.5, 2 * ds);
      } else {
        ds *= 0.5;
        if (ds < 1.0 / 64)
          throw Error(ErrorCode::ContinuationFailed,
                      "excursion continuation stalled at scale " + fmt_g(s) + " (residual " + fmt_g(nx.residual) + ")");
      }
    }
    res = std::move(cur);
  }
  ExcursionOrbit out;
  out.P = std::move(res.P);
  out.centre = Mm;
  out.residual = res.residual;
  out.iterations = res.iterations;
  out.v_minus = {reduce_angle(v_minus.phi), v_minus.I};
  Vec2 bT(out.P[T][kPhi], out.P[T][kI]);
  if (!cyl.band.contains(bT[1], slack))
    throw Error(ErrorCode::DomainExceeded, "excursion end leaves the cylinder band");
  // keep the image phase continuous with v_minus
  Vec2 vp = restricted_iterate(map, cyl, bT, -Mp);
  out.v_plus = {reduce_angle(vp[0]), vp[1]};
  return out;
}

HomoclinicCylinder build_homoclinic_cylinder(const MapDef& map, const CylinderGraph& cyl, const HomoclinicPoint& hp,
                                             Band domain, int n_phi, int n_I, double delta, int id) {
  HomoclinicCylinder B;
  B.id = id;
  B.hp = hp;
  B.delta = delta;
  B.domain = domain;
  B.n_phi = n_phi;
  B.n_I = n_I;
  B.window_minus = window_length(cyl.saddle, hp, -1);
  B.window_plus = window_length(cyl.saddle, hp, +1);
  const std::size_t N = static_cast<std::size_t>(n_phi) * n_I;
  B.points.resize(N);
  B.v_minus.resize(N);
  B.v_plus.resize(N);
  std::vector<double> resid(N), disp(N);
  std::vector<int> mm(N), mp(N);
  parallel_for(N, [&](std::size_t k) {
    const int i = static_cast<int>(k % n_phi), j = static_cast<int>(k / n_phi);
    ExcursionOrbit o;
    try {
      o = solve_excursion(map, cyl, B, B.node(i, j));
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " at node (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
    const int c = o.centre;
    B.points[k] = o.P[c];
    B.v_minus[k] = o.v_minus;
    B.v_plus[k] = o.v_plus;
    resid[k] = o.residual;
    Vec4 seedp(o.v_minus.phi, o.v_minus.I, hp.p_h[0], hp.p_h[1]);
    disp[k] = phase_diff(o.P[c], seedp).cwiseAbs().maxCoeff();
    int a = 0;
    for (int t = 1; t <= c; ++t)
      if (cyl.offset(o.P[c - t]).norm() >= delta) a = t + 1;
    int b = 0;
    for (int t = 1; t < static_cast<int>(o.P.size()) - c; ++t)
      if (cyl.offset(o.P[c + t]).norm() >= delta) b = t + 1;
    mm[k] = a;
    mp[k] = b;
  });
  for (std::size_t k = 0; k < N; ++k) {
    B.max_residual = std::max(B.max_residual, resid[k]);
    B.max_seed_displacement = std::max(B.max_seed_displacement, disp[k]);
    B.m_minus = std::max(B.m_minus, mm[k]);
    B.m_plus = std::max(B.m_plus, mp[k]);
  }
  return B;
}

// ---------------------------------------------------------------------------------------------

CylinderPoint ScatteringMapSample::eval(const CylinderPoint& v) const {
  Vec2 w = eval_lifted(v.vec());
  return {reduce_angle(w[0]), w[1]};
}

Vec2 ScatteringMapSample::eval_lifted(const Vec2& v) const {
  double d[2];
  disp.eval(v[0], v[1], d);
  return Vec2(v[0] + d[0], v[1] + d[1]);
}

Mat2 ScatteringMapSample::jacobian(const CylinderPoint& v) const {
  double d[2], dp[2], dI[2];
  disp.eval(v.phi, v.I, d, dp, dI);
  Mat2 J;
  J << 1.0 + dp[0], dI[0], dp[1], 1.0 + dI[1];
  return J;
}

double scattering_exactness(const MapDef& map, const CylinderGraph& cyl, const HomoclinicCylinder& B, int shift,
                            int circles, int nodes) {
  const double h = kTwoPi / nodes;
  double worst = 0.0;
  for (int c = 0; c < circles; ++c) {
    const double Ic = B.domain.lo + B.domain.height() * (c + 1) / (circles + 1);
    std::vector<double> d(nodes), Y(nodes);
    parallel_for(nodes, [&](std::size_t i) {
      ExcursionOrbit o = solve_excursion(map, cyl, B, {h * i, Ic}, shift);
      d[i] = wrap_angle(o.v_plus.phi - o.v_minus.phi);
      Y[i] = o.v_plus.I;
    });
    auto deriv = [&](const std::vector<double>& f, int i) {
      auto at = [&](int j) { return f[((j % nodes) + nodes) % nodes]; };
      return (8 * (at(i + 1) - at(i - 1)) - (at(i + 2) - at(i - 2))) / (12 * h);
    };
    double a_loop = 0.0, a_img = 0.0;
    for (int i = 0; i < nodes; ++i) {
      const double phi = h * i;
      Mat2 Dg = cyl.dnormal(phi, Ic);
      Vec2 g = cyl.normal(phi, Ic);
      a_loop += Ic + g[1] * Dg(0, 0);
      const double Psi = phi + d[i];
      const double dPsi = 1.0 + deriv(d, i), dY = deriv(Y, i);
      Mat2 Dg2 = cyl.dnormal(Psi, Y[i]);
      Vec2 g2 = cyl.normal(Psi, Y[i]);
      a_img += Y[i] * dPsi + g2[1] * (Dg2(0, 0) * dPsi + Dg2(0, 1) * dY);
    }
    worst = std::max(worst, std::abs(a_img - a_loop) * h);
  }
  return worst;
}

ScatteringMapSample scattering_map(const MapDef& map, const CylinderGraph& cyl, const HomoclinicCylinder& B, int shift,
                                   const ScatteringOptions& opt) {
  ScatteringMapSample F;
  F.id = B.id;
  F.shift = shift;
  F.domain = B.domain;
  F.disp = GridField(B.n_phi, B.n_I, B.domain.lo, B.domain.hi, 2);
  const std::size_t N = static_cast<std::size_t>(B.n_phi) * B.n_I;
  std::vector<double> sh(N);
  parallel_for(N, [&](std::size_t k) {
    const int i = static_cast<int>(k % B.n_phi), j = static_cast<int>(k / B.n_phi);
    CylinderPoint vm, vp;
    if (shift == 0) {
      vm = B.v_minus[k];
      vp = B.v_plus[k];
    } else {
      ExcursionOrbit o = solve_excursion(map, cyl, B, B.node(i, j), shift);
      vm = o.v_minus;
      vp = o.v_plus;
    }
    F.disp.at(i, j, 0) = wrap_angle(vp.phi - vm.phi);
    F.disp.at(i, j, 1) = vp.I - vm.I;
    sh[k] = std::hypot(F.disp.at(i, j, 0), F.disp.at(i, j, 1));
  });
  for (double v : sh) F.sup_shift = std::max(F.sup_shift, v);
  if (opt.exact_circles > 0)
    F.exactness_residual = scattering_exactness(map, cyl, B, shift, opt.exact_circles, opt.exact_nodes);
  return F;
}

// ---------------------------------------------------------------------------------------------

BTangents cylinder_tangents(const MapDef& map, const CylinderGraph& cyl, const HomoclinicCylinder& B,
                            const ExcursionOrbit& orb, double h) {
  BTangents t;
  auto centre = [&](double dphi, double dI) {
    return solve_excursion(map, cyl, B, {orb.v_minus.phi + dphi, orb.v_minus.I + dI}, 0, &orb).P[orb.centre];
  };
  t.t_phi = phase_diff(centre(h, 0), centre(-h, 0)) / (2 * h);
  t.t_I = phase_diff(centre(0, h), centre(0, -h)) / (2 * h);
  Vec4 w(0, 0, cyl.saddle.eu[0], cyl.saddle.eu[1]);
  for (int s = 0; s < orb.centre; ++s) w = (jacobian(map, orb.P[s]) * w).normalized();
  t.e_uu = w;
  const int T = static_cast<int>(orb.P.size()) - 1;
  w = Vec4(0, 0, cyl.saddle.es[0], cyl.saddle.es[1]);
  for (int s = T; s > orb.centre; --s) w = (jacobian_inverse(map, orb.P[s]) * w).normalized();
  t.e_ss = w;
  return t;
}

SimplicityReport check_simplicity(const MapDef& map, const CylinderGraph& cyl, const HomoclinicCylinder& B,
                                  const ScatteringMapSample& F, Band bar_band, const SimplicityOptions& opt) {
  SimplicityReport r;
  // S1
  std::vector<std::size_t> nodes;
  for (int j = 0; j < B.n_I; j += opt.stride)
    for (int i = 0; i < B.n_phi; i += opt.stride) nodes.push_back(static_cast<std::size_t>(j) * B.n_phi + i);
  std::vector<double> cond(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t q) {
    const std::size_t k = nodes[q];
    const int i = static_cast<int>(k % B.n_phi), j = static_cast<int>(k / B.n_phi);
    ExcursionOrbit o = solve_excursion(map, cyl, B, B.node(i, j));
    BTangents t = cylinder_tangents(map, cyl, B, o, opt.fd_step);
    Mat4 A;
    A.col(0) = t.t_phi.normalized();
    A.col(1) = t.t_I.normalized();
    A.col(2) = opt.collapse_fiber ? A.col(0) : Vec4(t.e_uu.normalized());
    A.col(3) = t.e_ss.normalized();
    Eigen::JacobiSVD<Mat4> svd(A);
    const auto sv = svd.singularValues();
    cond[q] = sv[3] > 0 ? sv[0] / sv[3] : std::numeric_limits<double>::infinity();
  });
  for (double c : cond) r.max_condition = std::max(r.max_condition, c);
  r.s1 = r.max_condition < opt.cond_limit;

  // S2 and S3 on the rows inside bar_band
  std::vector<std::pair<CylinderPoint, CylinderPoint>> img;
  r.min_det = std::numeric_limits<double>::infinity();
  bool rows_ok = true;
  for (int j = 0; j < B.n_I; ++j) {
    const CylinderPoint v0 = B.node(0, j);
    if (!bar_band.contains(v0.I, 1e-12)) continue;
    double wind = 0.0;
    for (int i = 0; i < B.n_phi; ++i) {
      const CylinderPoint v = B.node(i, j);
      r.min_det = std::min(r.min_det, F.jacobian(v).determinant());
      img.push_back({v, F.eval(v)});
      const double d0 = F.disp.at(i, j, 0), d1 = F.disp.at((i + 1) % B.n_phi, j, 0);
      wind += wrap_angle(d1 - d0);
    }
    const int w = static_cast<int>(std::lround(wind / kTwoPi));
    r.winding.push_back(w);
    if (w != 0) rows_ok = false;
  }
  r.min_separation = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < img.size(); ++a)
    for (std::size_t b = a + 1; b < img.size(); ++b) {
      const double dv = cyl_dist(img[a].first, img[b].first);
      const double dw = cyl_dist(img[a].second, img[b].second);
      r.min_separation = std::min(r.min_separation, dw / dv);
    }
  if (img.empty()) {
    r.detail = "no grid rows inside the sub-band";
    return r;
  }
  r.s2 = r.min_det > 0.0 && r.min_separation > 0.25;
  r.s3 = rows_ok;
  r.detail = "S1 cond " + fmt_g(r.max_condition) + ", S2 det " + fmt_g(r.min_det) + " sep " +
             fmt_g(r.min_separation) + ", S3 " + (rows_ok ? "winding 0" : "nonzero winding");
  return r;
}

// ---------------------------------------------------------------------------------------------

std::vector<HomoclinicCylinder> generate_secondary(const MapDef& map, const CylinderGraph& cyl,
                                                   const HomoclinicCylinder& B, int count,
                                                   const SecondaryOptions& opt) {
  const SaddleData& s = cyl.saddle;
  auto pts = find_homoclinic_points(s, static_cast<std::size_t>(4 * count + 8), 1e-10, opt.separatrix);
  std::vector<HomoclinicCylinder> out;
  std::vector<HomoclinicPoint> used{B.hp};
  auto same_orbit = [&](const HomoclinicPoint& a, const HomoclinicPoint& b) {
    const int W = B.m_minus + B.m_plus + 2;
    for (int j = -W; j <= W; ++j) {
      Vec2 q = homoclinic_orbit_point(s, b, j);
      if (std::hypot(wrap_angle(q[0] - a.p_h[0]), q[1] - a.p_h[1]) < 1e-6) return true;
    }
    return false;
  };
  for (const auto& h0 : pts) {
    if (static_cast<int>(out.size()) >= count) break;
    bool dup = false;
    for (const auto& u : used) dup = dup || same_orbit(u, h0) || same_orbit(h0, u);
    if (dup) continue;
    // centre the excursion at the orbit point farthest from the saddle
    HomoclinicPoint h = h0;
    {
      int best = 0;
      double bd = 0.0;
      const int span = static_cast<int>(std::ceil(std::max(h.sigma_u, h.sigma_s)));
      for (int j = -span; j <= span; ++j) {
        double d = saddle_dist(s, homoclinic_orbit_point(s, h, j));
        if (d > bd) {
          bd = d;
          best = j;
        }
      }
      h = shift_homoclinic(s, h, best);
    }
    try {
      HomoclinicCylinder C =
          build_homoclinic_cylinder(map, cyl, h, B.domain, B.n_phi, B.n_I, B.delta, static_cast<int>(out.size()) + 1);
      ScatteringOptions so;
      so.exact_circles = 0;
      ScatteringMapSample F = scattering_map(map, cyl, C, 0, so);
      Band bar = B.domain;
      SimplicityReport rep = check_simplicity(map, cyl, C, F, bar, opt.simplicity);
      if (!rep.simple()) continue;
      out.push_back(std::move(C));
      used.push_back(h);
    } catch (const Error&) {
      continue;
    }
  }
  if (static_cast<int>(out.size()) < count)
    throw Error(ErrorCode::FewerFound, "found " + std::to_string(out.size()) + " of " + std::to_string(count) +
                                           " secondary cylinders");
  return out;
}

OrthogonalityReport symplectic_orthogonality_check(const MapDef& map, const CylinderGraph& cyl,
                                                   const HomoclinicCylinder& B, int stride, double tol) {
  OrthogonalityReport rep;
  rep.check.name = "symplectic_orthogonality";
  rep.check.tolerance = tol;
  std::vector<std::size_t> nodes;
  for (int j = 0; j < B.n_I; j += stride)
    for (int i = 0; i < B.n_phi; i += stride) nodes.push_back(static_cast<std::size_t>(j) * B.n_phi + i);
  const int depth = B.window_plus;
  std::vector<std::vector<double>> logs(nodes.size(), std::vector<double>(depth, 0.0));
  const Mat4 O = omega_matrix();
  parallel_for(nodes.size(), [&](std::size_t q) {
    const std::size_t k = nodes[q];
    const int i = static_cast<int>(k % B.n_phi), j = static_cast<int>(k / B.n_phi);
    ExcursionOrbit o = solve_excursion(map, cyl, B, B.node(i, j));
    BTangents t = cylinder_tangents(map, cyl, B, o);
    for (int n = 1; n <= depth; ++n) {
      Vec4 w(0, 0, cyl.saddle.es[0], cyl.saddle.es[1]);
      for (int s = o.centre + n; s > o.centre; --s) w = (jacobian_inverse(map, o.P[s]) * w).normalized();
      const double a = std::abs(w.dot(O * t.t_phi)) / t.t_phi.norm();
      const double b = std::abs(w.dot(O * t.t_I)) / t.t_I.norm();
      logs[q][n - 1] = std::max(a, b);
    }
  });
  rep.pairing_log.assign(depth, 0.0);
  for (std::size_t q = 0; q < nodes.size(); ++q)
    for (int n = 0; n < depth; ++n) rep.pairing_log[n] = std::max(rep.pairing_log[n], logs[q][n]);
  rep.check.max_residual = rep.pairing_log.empty() ? 0.0 : rep.pairing_log.back();
  rep.check.passed = rep.check.max_residual < tol;

  rep.min_det_omega_A = std::numeric_limits<double>::infinity();
  for (int j = 0; j < cyl.g.n_I(); ++j)
    for (int i = 0; i < cyl.g.n_phi(); ++i) {
      const double phi = cyl.g.phi_at(i), I = cyl.g.I_at(j);
      Mat2 D = cyl.dnormal(phi, I);
      Vec4 tp(1, 0, D(0, 0), D(1, 0)), tI(0, 1, D(0, 1), D(1, 1));
      const double w = tp.dot(O * tI);
      rep.min_det_omega_A = std::min(rep.min_det_omega_A, w * w);
    }
  rep.check.detail = "final pairing " + fmt_g(rep.check.max_residual) + ", min det Omega|A " +
                     fmt_g(rep.min_det_omega_A);
  return rep;
}

}  // namespace driftlab
