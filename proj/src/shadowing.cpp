#include "driftlab/shadowing.hpp"

#include "orbit_solver.hpp"

#include <memory>

namespace driftlab {

Vec2 ShadowSystem::iterate(Vec2 v, int k) const {
  for (int i = 0; i < k; ++i) v = F0(v);
  for (int i = 0; i < -k; ++i) v = F0_inv(v);
  return v;
}

Vec2 ShadowSystem::fbar(int n, const Vec2& v) const {
  return iterate(Fn.at(n - 1)(iterate(v, m_minus.at(n - 1))), m_plus.at(n - 1));
}

Vec2 ShadowSystem::fbar_inverse(int n, const Vec2& v) const {
  return iterate(Fn_inv.at(n - 1)(iterate(v, -m_plus.at(n - 1))), -m_minus.at(n - 1));
}

CylMap numeric_inverse(CylMap F, double tol, int max_iter) {
  return [F = std::move(F), tol, max_iter](const Vec2& v) {
    Vec2 u = v;
    Vec2 r = F(u) - v;
    double rn = r.cwiseAbs().maxCoeff();
    for (int it = 0; it < max_iter && rn > tol; ++it) {
      const double h = 1e-7;
      Mat2 J;
      J.col(0) = (F(u + Vec2(h, 0)) - F(u - Vec2(h, 0))) / (2 * h);
      J.col(1) = (F(u + Vec2(0, h)) - F(u - Vec2(0, h))) / (2 * h);
      Vec2 du = J.partialPivLu().solve(r);
      Vec2 un = u - du;
      Vec2 rnew = F(un) - v;
      const double nn = rnew.cwiseAbs().maxCoeff();
      if (!(nn < rn)) break;
      u = un;
      r = rnew;
      rn = nn;
    }
    if (!(rn < 1e-9)) throw Error(ErrorCode::NoConvergence, "map inverse did not converge (residual " + fmt_g(rn) + ")");
    return u;
  };
}

ShadowSystem make_shadow_system(const MapDef& map, const CylinderGraph& cyl,
                                const std::vector<HomoclinicCylinder>& cylinders,
                                const std::vector<ScatteringMapSample>& samples, Band inner, bool exact) {
  if (!exact && samples.size() != cylinders.size())
    throw Error(ErrorCode::InvalidArgument, "one scattering sample per cylinder required");
  ShadowSystem s;
  s.inner = inner;
  auto m = std::make_shared<const MapDef>(map);
  auto c = std::make_shared<const CylinderGraph>(cyl);
  s.F0 = [m, c](const Vec2& v) { return restricted_step(*m, *c, v, +1); };
  s.F0_inv = [m, c](const Vec2& v) { return restricted_step(*m, *c, v, -1); };
  for (std::size_t i = 0; i < cylinders.size(); ++i) {
    CylMap F;
    if (exact) {
      auto B = std::make_shared<const HomoclinicCylinder>(cylinders[i]);
      F = [m, c, B](const Vec2& v) {
        ExcursionOrbit o = solve_excursion(*m, *c, *B, CylinderPoint::from(v));
        return Vec2(v[0] + wrap_angle(o.v_plus.phi - v[0]), o.v_plus.I);
      };
    } else {
      auto fs = std::make_shared<const ScatteringMapSample>(samples[i]);
      F = [fs](const Vec2& v) { return fs->eval_lifted(v); };
    }
    s.Fn.push_back(F);
    s.Fn_inv.push_back(numeric_inverse(F, 1e-13));
    s.m_minus.push_back(cylinders[i].m_minus);
    s.m_plus.push_back(cylinders[i].m_plus);
  }
  return s;
}

ShadowSystem make_shadow_system(const IFS& ifs) {
  if (ifs.size() < 1) throw Error(ErrorCode::InvalidArgument, "empty IFS");
  ShadowSystem s;
  s.inner = ifs.domain;
  s.F0 = ifs.maps[0];
  s.F0_inv = numeric_inverse(ifs.maps[0], 1e-14);
  for (std::size_t i = 1; i < ifs.size(); ++i) {
    s.Fn.push_back(ifs.maps[i]);
    s.Fn_inv.push_back(numeric_inverse(ifs.maps[i], 1e-14));
    s.m_minus.push_back(0);
    s.m_plus.push_back(0);
  }
  return s;
}

// ---------------------------------------------------------------------------------------------

std::string Code::violation() const {
  for (std::size_t j = 0; j <= J(); ++j) {
    if (block(j) < k_bar) return "k_" + std::to_string(j) + "=" + std::to_string(block(j)) + " below k_bar";
    if (j < J() && block(j) < gamma_rate * block(j + 1) + D)
      return "k_" + std::to_string(j) + "=" + std::to_string(block(j)) + " below gamma*k_" + std::to_string(j + 1) +
             "+D";
  }
  return {};
}

bool Code::proper() const { return violation().empty(); }

RawCode raw_code_from_orbit(const std::vector<OrbitStep>& orbit) {
  RawCode r;
  for (const auto& s : orbit) {
    if (s.map_index < 0) break;
    if (s.map_index == 0) {
      if (r.steps.empty()) ++r.i0; else ++r.steps.back().k;
    } else {
      r.steps.push_back({s.map_index, 0});
    }
  }
  return r;
}

int find_return_time(const CylMap& F0_inv, const CylinderPoint& v, double radius, int k_min, int k_max) {
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "return radius must be positive");
  if (k_min <= 0) return 0;
  Vec2 w = v.vec();
  for (int k = 1; k <= k_max; ++k) {
    w = F0_inv(w);
    if (k >= k_min && cyl_dist(CylinderPoint::from(w), v) < radius) return k;
  }
  throw Error(ErrorCode::NotFound, "no return within " + std::to_string(k_max) + " steps at radius " + fmt_g(radius));
}

ShadowOrbit make_proper_code(const RawCode& raw, const ShadowSystem& sys, const CylinderPoint& start, double U0,
                             const ProperCodeOptions& opt, const EssentialCurve* gamma_minus) {
  const std::size_t J = raw.steps.size();
  for (const auto& s : raw.steps)
    if (s.n < 1 || s.n > static_cast<int>(sys.size()))
      throw Error(ErrorCode::InvalidArgument, "raw code refers to scattering map " + std::to_string(s.n));
  // IFS orbit: block ends
  std::vector<Vec2> e(J + 1);
  Vec2 w = start.vec();
  e[0] = sys.iterate(w, raw.i0);
  for (std::size_t j = 1; j <= J; ++j) e[j] = sys.iterate(sys.Fn[raw.steps[j - 1].n - 1](e[j - 1]), raw.steps[j - 1].k);

  std::string last_failure;
  int failed_stage = -1;
  double radius = opt.radius;
  for (int attempt = 0; attempt <= opt.retries; ++attempt, radius *= 0.5) {
    ShadowOrbit out;
    out.code.k_bar = opt.k_bar;
    out.code.gamma_rate = opt.gamma_rate;
    out.code.D = opt.D;
    out.code.steps.resize(J);
    std::vector<Vec2> pts(2 * J + 2);
    Vec2 t = e[J];
    int k_next = 0;
    bool ok = true;
    for (int j = static_cast<int>(J); j >= 0 && ok; --j) {
      const int i_j = j == 0 ? raw.i0 : raw.steps[j - 1].k;
      int ms = 0;
      if (j >= 1) ms += sys.m_plus[raw.steps[j - 1].n - 1];
      if (j < static_cast<int>(J)) ms += sys.m_minus[raw.steps[j].n - 1];
      const int kmin = j == static_cast<int>(J)
                           ? opt.k_bar
                           : std::max(opt.k_bar, static_cast<int>(std::ceil(opt.gamma_rate * k_next + opt.D - 1e-12)));
      const int need = kmin + ms - i_j;
      int r = 0;
      try {
        r = find_return_time(sys.F0_inv, CylinderPoint::from(t), radius, need, opt.k_max);
      } catch (const Error& ex) {
        ok = false;
        failed_stage = j;
        last_failure = ex.what();
        break;
      }
      const int k = i_j + r - ms;
      if (j == 0) out.code.k0 = k; else out.code.steps[j - 1] = {raw.steps[j - 1].n, k};
      k_next = k;
      pts[2 * j + 1] = t;
      pts[2 * j] = sys.iterate(t, -k);
      if (j >= 1) t = sys.fbar_inverse(raw.steps[j - 1].n, pts[2 * j]);
    }
    if (!ok) continue;
    for (const auto& p : pts) out.points.push_back({reduce_angle(p[0]), p[1]});
    out.start_error = gamma_minus ? std::abs(out.points[0].I - gamma_minus->at(out.points[0].phi))
                                  : cyl_dist(out.points[0], {reduce_angle(start.phi), start.I});
    bool inside = true;
    for (std::size_t s = 1; s < out.points.size(); s += 2) inside &= sys.inner.contains(out.points[s].I);
    if (!inside) {
      failed_stage = 0;
      last_failure = "odd shadow point outside the inner band";
      continue;
    }
    if (out.start_error > U0) {
      failed_stage = 0;
      last_failure = "start error " + fmt_g(out.start_error) + " exceeds " + fmt_g(U0);
      continue;
    }
    out.max_consistency = shadow_consistency(out, sys);
    return out;
  }
  throw Error(ErrorCode::PaddingFailed,
              "padding failed at stage " + std::to_string(failed_stage) + ": " + last_failure);
}

double shadow_consistency(const ShadowOrbit& s, const ShadowSystem& sys) {
  const std::size_t J = s.code.J();
  if (s.points.size() != 2 * J + 2) throw Error(ErrorCode::InvalidArgument, "shadow orbit size mismatch");
  double err = 0.0;
  for (std::size_t j = 0; j <= J; ++j) {
    Vec2 a = sys.iterate(s.points[2 * j].vec(), s.code.block(j));
    err = std::max(err, cyl_dist({reduce_angle(a[0]), a[1]}, s.points[2 * j + 1]));
    if (j < J) {
      Vec2 b = sys.fbar(s.code.steps[j].n, s.points[2 * j + 1].vec());
      err = std::max(err, cyl_dist({reduce_angle(b[0]), b[1]}, s.points[2 * j + 2]));
    }
  }
  return err;
}

// ---------------------------------------------------------------------------------------------

std::vector<CylinderPoint> station_estimates(const ShadowSystem& sys, const std::vector<Vec4>& P,
                                             const std::vector<int>& station) {
  std::vector<CylinderPoint> v(station.size());
  for (std::size_t j = 0; 2 * j + 1 < station.size(); ++j) {
    const int a = station[2 * j], b = station[2 * j + 1], h = (b - a) / 2;
    const Vec2 w(P[a + h][kPhi], P[a + h][kI]);
    Vec2 s = sys.iterate(w, -h), e = sys.iterate(w, b - a - h);
    v[2 * j] = {reduce_angle(s[0]), s[1]};
    v[2 * j + 1] = {reduce_angle(e[0]), e[1]};
  }
  return v;
}

double block_contraction(const CylinderGraph& cyl, const std::vector<Vec4>& P, const std::vector<int>& station,
                         double floor) {
  double worst = 0.0;
  for (std::size_t j = 0; 2 * j + 1 < station.size(); ++j) {
    const int a = station[2 * j], b = station[2 * j + 1], mid = (a + b) / 2;
    for (int t = a; t < mid; ++t) {
      const double s0 = std::abs(cyl.eigen_offset(P[t])[1]), s1 = std::abs(cyl.eigen_offset(P[t + 1])[1]);
      if (s0 > floor && s1 > floor) worst = std::max(worst, s1 / s0);
    }
    for (int t = b; t > mid; --t) {
      const double u0 = std::abs(cyl.eigen_offset(P[t])[0]), u1 = std::abs(cyl.eigen_offset(P[t - 1])[0]);
      if (u0 > floor && u1 > floor) worst = std::max(worst, u1 / u0);
    }
  }
  return worst;
}

namespace {

std::vector<int> station_layout(const Code& code, const ShadowSystem& sys) {
  std::vector<int> st{0, code.k0};
  for (const auto& s : code.steps) {
    const int L = sys.m_minus.at(s.n - 1) + sys.m_plus.at(s.n - 1);
    st.push_back(st.back() + L);
    st.push_back(st.back() + s.k);
  }
  return st;
}

double shade_bound(double delta, double alpha, double lambda, int k) { return delta * std::pow(alpha * lambda, 0.5 * k); }

}  // namespace

ChannelOrbit shoot_channel_orbit(const MapDef& map, const CylinderGraph& cyl,
                                 const std::vector<HomoclinicCylinder>& cylinders, const ShadowSystem& sys,
                                 const ShadowOrbit& shadow, const SpectralGapReport& gap, double delta,
                                 const ShootOptions& opt) {
  const Code& code = shadow.code;
  const std::size_t J = code.J();
  if (!code.proper()) throw Error(ErrorCode::InvalidArgument, "code is not proper: " + code.violation());
  if (shadow.points.size() != 2 * J + 2) throw Error(ErrorCode::InvalidArgument, "shadow orbit size mismatch");
  for (const auto& s : code.steps)
    if (s.n < 1 || s.n > static_cast<int>(cylinders.size()))
      throw Error(ErrorCode::InvalidArgument, "code refers to a missing cylinder");
  const std::vector<int> st = station_layout(code, sys);
  const int T = st.back();

  // seed: cylinder lifts along the shadow blocks, solved excursions spliced in
  std::vector<Vec4> seed(T + 1);
  for (std::size_t j = 0; j <= J; ++j) {
    Vec2 b = shadow.points[2 * j].vec();
    for (int t = st[2 * j]; t <= st[2 * j + 1]; ++t) {
      seed[t] = cyl.lift(CylinderPoint::from(b));
      b = sys.F0(b);
    }
  }
  for (std::size_t j = 1; j <= J; ++j) {
    const int n = code.steps[j - 1].n;
    const HomoclinicCylinder& B = cylinders[n - 1];
    const int mm = sys.m_minus[n - 1];
    const Vec2 vm = sys.iterate(shadow.points[2 * j - 1].vec(), mm);
    ExcursionOrbit o;
    try {
      o = solve_excursion(map, cyl, B, CylinderPoint::from(vm));
    } catch (const Error& e) {
      throw Error(ErrorCode::ShootingFailed, "excursion " + std::to_string(j) + " seed: " + e.what());
    }
    const int tc = st[2 * j - 1] + mm;
    for (int q = 0; q < static_cast<int>(o.P.size()); ++q) {
      const int tau = tc + q - o.centre;
      if (tau < 0 || tau > T) continue;
      if (tau >= st[2 * j - 1] && tau <= st[2 * j]) {
        seed[tau] = o.P[q];
      } else {
        Vec2 off = cyl.offset(o.P[q]);
        seed[tau][kX] += off[0];
        seed[tau][kY] += off[1];
      }
    }
  }

  std::vector<detail::OrbitConstraint> cons;
  cons.push_back(detail::fix_phi(0, shadow.points[0].phi));
  cons.push_back(detail::fix_I(0, shadow.points[0].I));
  cons.push_back({0, [&cyl](const Vec4& P) { return cyl.eigen_offset(P)[1]; }, {}});
  cons.push_back({T, [&cyl](const Vec4& P) { return cyl.eigen_offset(P)[0]; }, {}});
  detail::OrbitSolveOptions so;
  so.max_iter = 60;
  auto res = detail::solve_orbit(map, seed, cons, so);
  if (!res.converged) {
    // report the excursion nearest to the worst step defect
    int worst_t = 0;
    double wd = -1.0;
    for (int t = 0; t < T; ++t) {
      const double d = phase_diff(apply_lifted(map, res.P[t]), res.P[t + 1]).cwiseAbs().maxCoeff();
      if (d > wd) {
        wd = d;
        worst_t = t;
      }
    }
    std::size_t jj = 0;
    for (std::size_t j = 1; j <= J; ++j)
      if (worst_t >= st[2 * j - 1]) jj = j;
    throw Error(ErrorCode::ShootingFailed, "channel solve stalled near excursion " + std::to_string(jj) +
                                               " (residual " + fmt_g(res.residual) + ", worst step " +
                                               std::to_string(worst_t) + ")");
  }

  ChannelOrbit out;
  out.P = std::move(res.P);
  out.station = st;
  out.residual = res.residual;
  out.iterations = res.iterations;
  out.alpha = gap.alpha;
  out.lambda = gap.lambda;
  out.delta = delta;
  out.v = station_estimates(sys, out.P, st);
  for (std::size_t s = 0; s < out.v.size(); ++s) out.deviation.push_back(cyl_dist(out.v[s], shadow.points[s]));
  out.bound = shade_bound(delta, gap.alpha, gap.lambda, code.block(J));
  out.bound_kbar = 2.0 * shade_bound(delta, gap.alpha, gap.lambda, code.k_bar);
  out.final_offset = std::abs(cyl.eigen_offset(out.P.back())[1]);
  out.max_lamb_ratio = block_contraction(cyl, out.P, st);
  if (opt.enforce_bound) {
    for (std::size_t s = 0; s < out.deviation.size(); ++s)
      if (out.deviation[s] > opt.bound_factor * out.bound)
        throw Error(ErrorCode::BoundViolated, "station " + std::to_string(s) + " deviation " +
                                                  fmt_g(out.deviation[s]) + " exceeds bound " + fmt_g(out.bound));
  }
  return out;
}

ShadowingReport verify_shadowing(const MapDef& map, const CylinderGraph& cyl, const ChannelOrbit& orbit,
                                 const ShadowOrbit& shadow, const ShadowSystem& sys, const SpectralGapReport& gap,
                                 double delta, double endpoint_eps) {
  ShadowingReport r;
  const Code& code = shadow.code;
  const std::vector<int> st = station_layout(code, sys);
  if (st != orbit.station || static_cast<int>(orbit.P.size()) != st.back() + 1) {
    r.detail = "station layout does not match the code";
    return r;
  }
  for (std::size_t t = 0; t + 1 < orbit.P.size(); ++t) {
    Vec4 img = apply_lifted(map, orbit.P[t]);
    r.max_defect = std::max(r.max_defect, phase_diff(img, orbit.P[t + 1]).cwiseAbs().maxCoeff());
    r.max_offset_jump =
        std::max(r.max_offset_jump, (cyl.eigen_offset(img) - cyl.eigen_offset(orbit.P[t + 1])).cwiseAbs().maxCoeff());
  }
  r.orbit_ok = r.max_defect < 1e-9 && r.max_offset_jump < 1e-9;

  std::vector<CylinderPoint> v = station_estimates(sys, orbit.P, st);
  r.bound = shade_bound(delta, gap.alpha, gap.lambda, code.block(code.J()));
  r.bound_kbar = 2.0 * shade_bound(delta, gap.alpha, gap.lambda, code.k_bar);
  for (std::size_t s = 0; s < v.size(); ++s) {
    r.deviations.push_back(cyl_dist(v[s], shadow.points[s]));
    r.max_deviation = std::max(r.max_deviation, r.deviations.back());
  }
  r.deviations_ok = r.max_deviation <= 2.0 * r.bound;
  r.kbar_ok = r.max_deviation <= 2.0 * r.bound_kbar && r.bound <= r.bound_kbar;
  r.max_lamb_ratio = block_contraction(cyl, orbit.P, st);
  r.lamb_ok = r.max_lamb_ratio <= gap.lambda + 0.05;
  r.final_offset = std::abs(cyl.eigen_offset(orbit.P.back())[1]);
  const double eps = endpoint_eps > 0 ? endpoint_eps : 2.0 * r.bound;
  r.endpoints_ok = !r.deviations.empty() && r.deviations.front() <= eps && r.deviations.back() <= eps;
  const double cons = shadow_consistency(shadow, sys);
  const bool proper = code.proper();
  r.ok = r.orbit_ok && r.deviations_ok && r.kbar_ok && r.lamb_ok && r.endpoints_ok && proper && cons < 1e-8;
  r.detail = "defect " + fmt_g(r.max_defect) + ", max deviation " + fmt_g(r.max_deviation) + " (bound " +
             fmt_g(r.bound) + "), contraction " + fmt_g(r.max_lamb_ratio) + ", shadow consistency " + fmt_g(cons) +
             (proper ? "" : ", code not proper: " + code.violation());
  return r;
}

}  // namespace driftlab
