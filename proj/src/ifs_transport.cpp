#include "driftlab/ifs_transport.hpp"

#include <deque>
#include <memory>

namespace driftlab {

double twist_lipschitz_bound(const CylMap& F0, Band domain, int n) {
  double L = 0.0;
  const double h = 1e-6;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      Vec2 v(kTwoPi * i / n, domain.lo + domain.height() * j / (n - 1));
      Vec2 dp = (F0(v + Vec2(h, 0)) - F0(v - Vec2(h, 0))) / (2 * h);
      Vec2 dy = (F0(v + Vec2(0, h)) - F0(v - Vec2(0, h))) / (2 * h);
      if (std::abs(dy[0]) < 1e-9) return std::numeric_limits<double>::infinity();
      L = std::max(L, std::max(std::abs(dp[0]), std::abs(dy[1])) / std::abs(dy[0]));
    }
  return L;
}

// ---------------------------------------------------------------------------------------------

double EssentialCurve::at(double phi) const {
  const int n = static_cast<int>(ys.size());
  const double t = reduce_angle(phi) / (kTwoPi / n);
  int i = static_cast<int>(std::floor(t));
  const double s = t - i;
  i %= n;
  return (1.0 - s) * ys[i] + s * ys[(i + 1) % n];
}

EssentialCurve EssentialCurve::constant(double y, int n) {
  return sampled([y](double) { return y; }, n);
}

EssentialCurve EssentialCurve::sampled(const std::function<double(double)>& f, int n) {
  EssentialCurve c;
  c.phis.resize(n);
  c.ys.resize(n);
  c.prov.assign(n, Provenance{});
  for (int i = 0; i < n; ++i) {
    c.phis[i] = kTwoPi * i / n;
    c.ys[i] = f(c.phis[i]);
    c.prov[i].pre_phi = c.phis[i];
  }
  c.L = c.measured_lipschitz();
  return c;
}

double EssentialCurve::measured_lipschitz() const {
  const std::size_t n = ys.size();
  const double h = kTwoPi / n;
  double L = 0.0;
  for (std::size_t i = 0; i < n; ++i) L = std::max(L, std::abs(ys[(i + 1) % n] - ys[i]) / h);
  return L;
}

Polyline curve_image(const CylMap& F, const EssentialCurve& gamma, const Band* domain) {
  Polyline out;
  const std::size_t n = gamma.size();
  out.pts.resize(n + 1);
  for (std::size_t i = 0; i < n; ++i) out.pts[i] = F(Vec2(gamma.phis[i], gamma.ys[i]));
  out.pts[n] = F(Vec2(gamma.phis[0] + kTwoPi, gamma.ys[0]));
  out.winding = static_cast<int>(std::lround((out.pts[n][0] - out.pts[0][0]) / kTwoPi));
  if (domain)
    for (const auto& p : out.pts)
      if (!domain->contains(p[1], 1e-12))
        throw Error(ErrorCode::DomainExceeded, "curve image leaves the annulus at y=" + fmt_g(p[1]));
  return out;
}

namespace {

// for each grid node: highest crossing of the polyline with the vertical line, and its preimage phi
void ray_shoot(const Polyline& poly, std::size_t n, std::vector<double>& best, std::vector<double>& pre) {
  const double h = kTwoPi / n;
  best.assign(n, -std::numeric_limits<double>::infinity());
  pre.assign(n, 0.0);
  for (std::size_t i = 0; i + 1 < poly.pts.size(); ++i) {
    const Vec2 &a = poly.pts[i], &b = poly.pts[i + 1];
    const double lo = std::min(a[0], b[0]), hi = std::max(a[0], b[0]);
    const long k0 = static_cast<long>(std::ceil(lo / h - 1e-12)), k1 = static_cast<long>(std::floor(hi / h + 1e-12));
    for (long K = k0; K <= k1; ++K) {
      const std::size_t j = static_cast<std::size_t>(((K % static_cast<long>(n)) + n) % n);
      double t = b[0] == a[0] ? (b[1] > a[1] ? 1.0 : 0.0) : (K * h - a[0]) / (b[0] - a[0]);
      t = std::clamp(t, 0.0, 1.0);
      const double y = a[1] + t * (b[1] - a[1]);
      if (y > best[j]) {
        best[j] = y;
        pre[j] = h * (static_cast<double>(i) + t);
      }
    }
  }
}

// vertical two-sided distance between a curve and its image
double invariance_residual(const CylMap& F, const EssentialCurve& c) {
  Polyline p = curve_image(F, c);
  double r = 0.0;
  for (const auto& q : p.pts) r = std::max(r, std::abs(q[1] - c.at(q[0])));
  std::vector<double> best, pre;
  ray_shoot(p, c.size(), best, pre);
  for (std::size_t j = 0; j < c.size(); ++j)
    if (std::isfinite(best[j])) r = std::max(r, std::abs(best[j] - c.ys[j]));
  return r;
}

EssentialCurve resample(const EssentialCurve& c, int n) {
  return EssentialCurve::sampled([&c](double phi) { return c.at(phi); }, n);
}

}  // namespace

EssentialCurve upper_boundary_op(const EssentialCurve& gamma, const CylMap& F, int map_index, int gen,
                                 const Band* domain) {
  Polyline p = curve_image(F, gamma);
  if (p.winding != 1) throw Error(ErrorCode::InvalidArgument, "map is not homotopic to the identity on this curve");
  std::vector<double> best, pre;
  ray_shoot(p, gamma.size(), best, pre);
  EssentialCurve out = gamma;
  for (std::size_t j = 0; j < gamma.size(); ++j) {
    if (best[j] > gamma.ys[j]) {
      out.ys[j] = best[j];
      out.prov[j] = {gen, map_index, pre[j]};
    }
  }
  if (domain)
    for (double y : out.ys)
      if (y > domain->hi) throw Error(ErrorCode::BandOverflow, "envelope reached the top of the annulus");
  out.L = out.measured_lipschitz();
  return out;
}

const char* outcome_name(Outcome o) { return o == Outcome::Connecting ? "Connecting" : "Obstruction"; }

namespace {

struct Chain {
  std::vector<int> maps;  // in forward order
  double phi0 = 0.0;
};

Chain backtrack(const std::vector<EssentialCurve>& hist, int gen, int map, double pre_phi) {
  Chain c;
  c.maps.push_back(map);
  double phi = pre_phi;
  int g = gen;
  while (g >= 0) {
    const EssentialCurve& cur = hist[g];
    const std::size_t n = cur.size();
    const std::size_t i = static_cast<std::size_t>(std::lround(reduce_angle(phi) / (kTwoPi / n))) % n;
    const Provenance& pv = cur.prov[i];
    if (pv.gen < 0) break;
    c.maps.push_back(pv.map);
    phi = pv.pre_phi;
    g = pv.gen;
  }
  std::reverse(c.maps.begin(), c.maps.end());
  c.phi0 = phi;
  return c;
}

// forward orbit of the chain from gamma_minus at phi0; returns the excess over gamma_plus at the end
double shoot(const IFS& ifs, const Chain& c, double phi0, const EssentialCurve& gm, const EssentialCurve& gp,
             std::vector<OrbitStep>* steps) {
  Vec2 v(reduce_angle(phi0), gm.at(phi0));
  if (steps) steps->clear();
  double excess = v[1] - gp.at(v[0]);
  for (std::size_t s = 0; s < c.maps.size(); ++s) {
    if (steps) steps->push_back({{reduce_angle(v[0]), v[1]}, c.maps[s]});
    v = ifs.maps[c.maps[s]](v);
    excess = v[1] - gp.at(v[0]);
    if (excess >= 0.0) break;
  }
  if (steps) steps->push_back({{reduce_angle(v[0]), v[1]}, -1});
  return excess;
}

bool extract_orbit(const IFS& ifs, const Chain& c, const EssentialCurve& gm, const EssentialCurve& gp, double tol,
                   std::vector<OrbitStep>& steps) {
  const double h = kTwoPi / gm.size();
  double best_phi = c.phi0, best = shoot(ifs, c, c.phi0, gm, gp, nullptr);
  for (int k = -60; k <= 60; ++k) {
    const double phi = c.phi0 + 0.05 * k * h;
    const double e = shoot(ifs, c, phi, gm, gp, nullptr);
    if (e > best) {
      best = e;
      best_phi = phi;
    }
  }
  // golden refinement around the best scan point
  double a = best_phi - 0.05 * h, b = best_phi + 0.05 * h;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 40 && best < 0.0; ++it) {
    const double x1 = b - g * (b - a), x2 = a + g * (b - a);
    const double f1 = shoot(ifs, c, x1, gm, gp, nullptr), f2 = shoot(ifs, c, x2, gm, gp, nullptr);
    if (f1 > f2) b = x2; else a = x1;
    const double xm = 0.5 * (a + b), fm = shoot(ifs, c, xm, gm, gp, nullptr);
    if (fm > best) {
      best = fm;
      best_phi = xm;
    }
  }
  if (best < -tol) return false;
  shoot(ifs, c, best_phi, gm, gp, &steps);
  return true;
}

}  // namespace

TransportCertificate birkhoff_transport(const IFS& ifs, const EssentialCurve& gamma_minus,
                                        const EssentialCurve& gamma_plus, const TransportOptions& opt) {
  const std::size_t n = gamma_minus.size();
  if (gamma_plus.size() != n) throw Error(ErrorCode::InvalidArgument, "curves must share the phi grid");
  for (std::size_t i = 0; i < n; ++i)
    if (!(gamma_minus.ys[i] < gamma_plus.ys[i]))
      throw Error(ErrorCode::InvalidArgument, "gamma_minus must lie strictly below gamma_plus");
  TransportCertificate cert;
  cert.endpoint_tol = opt.endpoint_tol > 0 ? opt.endpoint_tol : ifs.domain.height() / static_cast<double>(n);
  std::vector<EssentialCurve> hist;
  EssentialCurve g = gamma_minus;
  for (auto& p : g.prov) p = Provenance{};
  hist.push_back(g);
  int stall = 0;
  for (int m = 0; m < opt.max_gen; ++m) {
    std::vector<EssentialCurve> env(ifs.size());
    parallel_for(ifs.size(), [&](std::size_t k) {
      env[k] = upper_boundary_op(g, ifs.maps[k], static_cast<int>(k), m);
    });
    // connection test, largest excess first
    std::vector<std::pair<double, std::pair<int, std::size_t>>> hits;
    for (std::size_t k = 0; k < env.size(); ++k)
      for (std::size_t j = 0; j < n; ++j)
        if (env[k].prov[j].gen == m && env[k].ys[j] >= gamma_plus.ys[j])
          hits.push_back({env[k].ys[j] - gamma_plus.ys[j], {static_cast<int>(k), j}});
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t q = 0; q < std::min<std::size_t>(hits.size(), 16); ++q) {
      const int k = hits[q].second.first;
      const std::size_t j = hits[q].second.second;
      Chain c = backtrack(hist, m, k, env[k].prov[j].pre_phi);
      std::vector<OrbitStep> steps;
      if (extract_orbit(ifs, c, gamma_minus, gamma_plus, cert.endpoint_tol, steps)) {
        cert.outcome = Outcome::Connecting;
        cert.connecting = std::move(steps);
        cert.generations = m + 1;
        if (opt.keep_history) cert.history = std::move(hist);
        return cert;
      }
    }
    EssentialCurve next = g;
    for (std::size_t k = 0; k < env.size(); ++k)
      for (std::size_t j = 0; j < n; ++j)
        if (env[k].ys[j] > next.ys[j]) {
          next.ys[j] = env[k].ys[j];
          next.prov[j] = env[k].prov[j];
        }
    next.L = next.measured_lipschitz();
    double diff = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (next.ys[j] < g.ys[j]) cert.monotone = false;
      diff = std::max(diff, next.ys[j] - g.ys[j]);
      if (next.ys[j] > ifs.domain.hi)
        throw Error(ErrorCode::BandOverflow, "envelope left the annulus at generation " + std::to_string(m + 1));
    }
    hist.push_back(next);
    g = std::move(next);
    if (diff <= 1e-15)
      stall = opt.stall_generations;
    else if (diff < opt.tol)
      ++stall;
    else
      stall = 0;
    if (stall >= opt.stall_generations) {
      cert.outcome = Outcome::Obstruction;
      cert.obstruction = g;
      cert.generations = m + 1;
      EssentialCurve fine = resample(g, 1024);
      for (const auto& F : ifs.maps) cert.residuals.push_back(invariance_residual(F, fine));
      if (opt.keep_history) cert.history = std::move(hist);
      return cert;
    }
  }
  throw Error(ErrorCode::GenerationLimit, "no outcome after " + std::to_string(opt.max_gen) + " generations");
}

ValidationReport validate_certificate(const TransportCertificate& cert, const IFS& ifs,
                                      const EssentialCurve& gamma_minus, const EssentialCurve& gamma_plus,
                                      double tol) {
  ValidationReport r;
  if (cert.outcome == Outcome::Connecting) {
    const auto& s = cert.connecting;
    if (s.size() < 2) {
      r.diagnosis = "connecting orbit has fewer than two points";
      return r;
    }
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      const int k = s[i].map_index;
      if (k < 0 || k >= static_cast<int>(ifs.size())) {
        r.diagnosis = "invalid map index at step " + std::to_string(i);
        return r;
      }
      Vec2 w = ifs.maps[k](s[i].v.vec());
      const double e = cyl_dist({reduce_angle(w[0]), w[1]}, s[i + 1].v);
      r.max_step_error = std::max(r.max_step_error, e);
      if (e > tol) {
        r.diagnosis = "step error " + fmt_g(e) + " at step " + std::to_string(i);
        return r;
      }
    }
    const double start = std::abs(s.front().v.I - gamma_minus.at(s.front().v.phi));
    if (start > tol) {
      r.diagnosis = "first point is " + fmt_g(start) + " off gamma_minus";
      return r;
    }
    const double end = s.back().v.I - gamma_plus.at(s.back().v.phi);
    if (end < -cert.endpoint_tol) {
      r.diagnosis = "last point is " + fmt_g(-end) + " below gamma_plus";
      return r;
    }
    r.ok = true;
    r.diagnosis = "connecting orbit of " + std::to_string(s.size() - 1) + " steps";
    return r;
  }
  if (cert.residuals.size() != ifs.size()) {
    r.diagnosis = "residual count does not match the IFS";
    return r;
  }
  double reported = 0.0;
  for (double v : cert.residuals) reported = std::max(reported, v);
  EssentialCurve fine = resample(cert.obstruction, 1024);
  for (std::size_t k = 0; k < ifs.size(); ++k)
    r.max_residual = std::max(r.max_residual, invariance_residual(ifs.maps[k], fine));
  const double limit = std::max(tol, reported);
  if (r.max_residual > limit * (1 + 1e-9) + 1e-15) {
    r.diagnosis = "invariance residual " + fmt_g(r.max_residual) + " exceeds " + fmt_g(limit);
    return r;
  }
  if (std::isfinite(ifs.lipschitz)) {
    const double L = cert.obstruction.measured_lipschitz();
    if (L > 1.1 * ifs.lipschitz + 1e-9) {
      r.diagnosis = "obstruction Lipschitz constant " + fmt_g(L) + " exceeds " + fmt_g(ifs.lipschitz);
      return r;
    }
  }
  for (double y : cert.obstruction.ys)
    if (!ifs.domain.contains(y)) {
      r.diagnosis = "obstruction leaves the annulus";
      return r;
    }
  r.ok = true;
  r.diagnosis = "obstruction residual " + fmt_g(r.max_residual);
  return r;
}

// ---------------------------------------------------------------------------------------------

std::vector<int> ReachabilityGrid::top_rows() const {
  std::vector<int> top(n_phi, -1);
  for (int j = 0; j < n_I; ++j)
    for (int i = 0; i < n_phi; ++i)
      if (at(i, j)) top[i] = j;
  return top;
}

ReachabilityGrid brute_force_reachability(const IFS& ifs, int n_phi, int n_I, const EssentialCurve& gamma_minus,
                                          const EssentialCurve& gamma_plus, double cell_tol) {
  if (n_phi > 512 || n_I > 512 || n_phi < 1 || n_I < 1)
    throw Error(ErrorCode::InvalidArgument, "reachability grid limited to 512 x 512");
  ReachabilityGrid R;
  R.n_phi = n_phi;
  R.n_I = n_I;
  R.domain = ifs.domain;
  R.reached.assign(static_cast<std::size_t>(n_phi) * n_I, 0);
  const double hp = kTwoPi / n_phi, hy = ifs.domain.height() / n_I;
  auto row_of = [&](double y, double fudge) { return static_cast<int>(std::floor((y - ifs.domain.lo) / hy + fudge)); };
  std::deque<std::size_t> queue;
  auto mark = [&](int i, int j) {
    i = ((i % n_phi) + n_phi) % n_phi;
    if (j < 0 || j >= n_I) return;
    const std::size_t k = static_cast<std::size_t>(j) * n_phi + i;
    if (!R.reached[k]) {
      R.reached[k] = 1;
      queue.push_back(k);
    }
  };
  // goal: cell top at or above gamma_plus somewhere in the column
  std::vector<double> goal_min(n_phi);
  for (int i = 0; i < n_phi; ++i) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int s = 0; s <= 4; ++s) {
      const double phi = hp * (i + s / 4.0);
      lo = std::min(lo, gamma_minus.at(phi));
      hi = std::max(hi, gamma_minus.at(phi));
      goal_min[i] = s == 0 ? gamma_plus.at(phi) : std::min(goal_min[i], gamma_plus.at(phi));
    }
    for (int j = row_of(lo, 1e-9); j <= row_of(hi, 1e-9); ++j) mark(i, j);
  }
  const double in = 1e-6;
  const double offs[5][2] = {{in, in}, {1 - in, in}, {in, 1 - in}, {1 - in, 1 - in}, {0.5, 0.5}};
  const int tol_i = static_cast<int>(std::ceil(cell_tol / hp)), tol_j = static_cast<int>(std::ceil(cell_tol / hy));
  while (!queue.empty()) {
    const std::size_t k = queue.front();
    queue.pop_front();
    const int i = static_cast<int>(k % n_phi), j = static_cast<int>(k / n_phi);
    if (ifs.domain.lo + (j + 1) * hy >= goal_min[i]) R.goal_reached = true;
    for (const auto& F : ifs.maps)
      for (const auto& o : offs) {
        Vec2 w = F(Vec2(hp * (i + o[0]), ifs.domain.lo + hy * (j + o[1])));
        if (!ifs.domain.contains(w[1])) continue;
        const int ii = static_cast<int>(std::floor(reduce_angle(w[0]) / hp)), jj = row_of(w[1], 0.0);
        for (int a = -tol_i; a <= tol_i; ++a)
          for (int b = -tol_j; b <= tol_j; ++b) mark(ii + a, jj + b);
      }
  }
  return R;
}

// ---------------------------------------------------------------------------------------------

namespace {

double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

double plateau(const LiftSpec& l, double phi) {
  const double u = reduce_angle(phi - l.lo), W = l.hi - l.lo;
  if (u <= W) return 1.0;
  const double d = std::min(u - W, kTwoPi - u);
  return d >= l.ramp ? 0.0 : smooth_step(1.0 - d / l.ramp);
}

double taper(const LiftSpec& l, double y) {
  if (!std::isfinite(l.barrier)) return 1.0;
  if (y >= l.barrier) return 0.0;
  if (y <= l.barrier - l.barrier_width) return 1.0;
  return (l.barrier - y) / l.barrier_width;
}

}  // namespace

IFS make_synthetic_ifs(const SyntheticSpec& spec) {
  IFS ifs;
  ifs.domain = spec.domain;
  const double rho = spec.rotation, tau = spec.twist, y0 = spec.domain.lo;
  CylMap F0 = [rho, tau, y0](const Vec2& v) { return Vec2(v[0] + kTwoPi * (rho + tau * (v[1] - y0)), v[1]); };
  ifs.maps.push_back(F0);
  ifs.names.push_back(tau == 0.0 ? "rotation" : "twist");
  if (spec.copy_f0) {
    ifs.maps.push_back(F0);
    ifs.names.push_back("copy");
  }
  for (const auto& l : spec.lifts) {
    if (std::isfinite(l.barrier) && l.amplitude >= l.barrier_width)
      throw Error(ErrorCode::InvalidArgument, "lift amplitude must stay below the barrier taper width");
    ifs.maps.push_back([l](const Vec2& v) { return Vec2(v[0], v[1] + l.amplitude * plateau(l, v[0]) * taper(l, v[1])); });
    ifs.names.push_back("lift");
  }
  ifs.lipschitz = twist_lipschitz_bound(F0, spec.domain, 16);
  return ifs;
}

IFS make_cylinder_ifs(const MapDef& map, const CylinderGraph& cyl, const std::vector<ScatteringMapSample>& F,
                      Band domain) {
  IFS ifs;
  ifs.domain = domain;
  auto m = std::make_shared<const MapDef>(map);
  auto c = std::make_shared<const CylinderGraph>(cyl);
  ifs.maps.push_back([m, c](const Vec2& v) { return restricted_step(*m, *c, v, +1); });
  ifs.names.push_back("F0");
  for (const auto& f : F) {
    auto fs = std::make_shared<const ScatteringMapSample>(f);
    ifs.maps.push_back([fs](const Vec2& v) { return fs->eval_lifted(v); });
    ifs.names.push_back("F" + std::to_string(ifs.maps.size() - 1));
  }
  ifs.lipschitz = twist_lipschitz_bound(ifs.maps[0], domain, 32);
  return ifs;
}

}  // namespace driftlab
