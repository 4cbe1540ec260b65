#include <doctest.h>

#include "driftlab/ifs_transport.hpp"

#include <random>

using namespace driftlab;

namespace {

SyntheticSpec lift_case() {
  SyntheticSpec s;
  s.rotation = 0.3;
  s.lifts.push_back(LiftSpec{0.0, 1.0, 0.2, 0.05});
  return s;
}

// highest point of the union of gamma and a dense sampling of F(gamma) in each column
std::vector<double> raster_top(const CylMap& F, const EssentialCurve& g, int n_dense, double col_half) {
  const std::size_t n = g.size();
  std::vector<double> top(g.ys);
  for (int k = 0; k < n_dense; ++k) {
    const double phi = kTwoPi * k / n_dense;
    Vec2 w = F(Vec2(phi, g.at(phi)));
    const double u = reduce_angle(w[0]) / (kTwoPi / n);
    const long c = std::lround(u);
    if (std::abs(u - c) * (kTwoPi / n) > col_half) continue;
    const std::size_t j = static_cast<std::size_t>(c) % n;
    top[j] = std::max(top[j], w[1]);
  }
  return top;
}

}  // namespace

TEST_CASE("curve image examples") {
  EssentialCurve g = EssentialCurve::constant(0.2);
  CylMap id = [](const Vec2& v) { return v; };
  Polyline p = curve_image(id, g);
  CHECK(p.winding == 1);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(p.pts[i][0] == g.phis[i]);
    CHECK(p.pts[i][1] == g.ys[i]);
  }
  CylMap twist = [](const Vec2& v) { return Vec2(v[0] + v[1], v[1]); };
  p = curve_image(twist, g);
  CHECK(p.winding == 1);
  for (const auto& q : p.pts) CHECK(q[1] == doctest::Approx(0.2).epsilon(1e-15));
  CylMap bump = [](const Vec2& v) { return Vec2(v[0], v[1] + 0.01 * std::sin(v[0])); };
  p = curve_image(bump, g);
  for (const auto& q : p.pts) CHECK(std::abs(q[1] - (0.2 + 0.01 * std::sin(q[0]))) < 1e-15);
  Band small{0.0, 0.205};
  CHECK_THROWS_AS(curve_image(bump, g, &small), Error);
}

TEST_CASE("upper boundary operator") {
  EssentialCurve g = EssentialCurve::constant(0.5);
  CylMap up = [](const Vec2& v) { return Vec2(v[0], v[1] + 0.1 * std::sin(v[0])); };
  EssentialCurve e = upper_boundary_op(g, up, 1, 0);
  double err = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    err = std::max(err, std::abs(e.ys[j] - std::max(0.5, 0.5 + 0.1 * std::sin(g.phis[j]))));
    CHECK(e.ys[j] >= g.ys[j]);
  }
  CHECK(err < 1e-14);
  CylMap id = [](const Vec2& v) { return v; };
  EssentialCurve same = upper_boundary_op(g, id);
  for (std::size_t j = 0; j < g.size(); ++j) CHECK(same.ys[j] == g.ys[j]);
  Band tight{0.0, 0.55};
  CHECK_THROWS_AS(upper_boundary_op(g, up, 1, 0, &tight), Error);
}

TEST_CASE("folded image envelope against a raster scan") {
  EssentialCurve g = EssentialCurve::sampled([](double phi) { return 0.2 + 0.02 * std::cos(2 * phi); });
  // phi' is not monotone: the image folds back over itself
  CylMap fold = [](const Vec2& v) { return Vec2(v[0] + 1.6 * std::sin(v[0]), v[1] + 0.1 * std::cos(v[0])); };
  Polyline p = curve_image(fold, g);
  bool folds = false;
  for (std::size_t i = 0; i + 1 < p.pts.size(); ++i) folds |= p.pts[i + 1][0] < p.pts[i][0];
  REQUIRE(folds);
  EssentialCurve e = upper_boundary_op(g, fold);
  const double h = kTwoPi / g.size();
  std::vector<double> top = raster_top(fold, g, 400000, 0.02 * h);
  double worst = 0.0, mean = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    worst = std::max(worst, std::abs(e.ys[j] - top[j]));
    mean += std::abs(e.ys[j] - top[j]) / g.size();
  }
  CHECK(worst < 5e-3);
  CHECK(mean < 2e-4);
}

TEST_CASE("common invariant circles give an immediate obstruction") {
  SyntheticSpec s;
  s.rotation = (std::sqrt(5.0) - 1.0) / 2.0;
  s.copy_f0 = true;
  IFS ifs = make_synthetic_ifs(s);
  EssentialCurve gm = EssentialCurve::constant(0.1), gp = EssentialCurve::constant(0.4);
  TransportCertificate c = birkhoff_transport(ifs, gm, gp);
  CHECK(c.outcome == Outcome::Obstruction);
  CHECK(c.generations == 1);
  REQUIRE(c.residuals.size() == 2);
  for (double r : c.residuals) CHECK(r < 1e-9);
  ValidationReport v = validate_certificate(c, ifs, gm, gp, 1e-7);
  CHECK(v.ok);
  CHECK(v.max_residual < 1e-9);

  ReachabilityGrid R = brute_force_reachability(ifs, 100, 100, gm, gp);
  CHECK_FALSE(R.goal_reached);
  auto top = R.top_rows();
  for (int t : top) CHECK(t == 20);
}

TEST_CASE("lifted rotation connects and validates") {
  IFS ifs = make_synthetic_ifs(lift_case());
  EssentialCurve gm = EssentialCurve::constant(0.1), gp = EssentialCurve::constant(0.4);
  TransportCertificate c = birkhoff_transport(ifs, gm, gp);
  REQUIRE(c.outcome == Outcome::Connecting);
  CHECK(c.connecting.size() - 1 <= 60);
  CHECK(c.monotone);
  for (std::size_t m = 0; m + 1 < c.history.size(); ++m)
    for (std::size_t j = 0; j < gm.size(); ++j) CHECK(c.history[m + 1].ys[j] >= c.history[m].ys[j]);
  ValidationReport v = validate_certificate(c, ifs, gm, gp, 1e-9);
  CHECK(v.ok);
  CHECK(v.max_step_error < 1e-12);

  TransportCertificate bad = c;
  bad.connecting[bad.connecting.size() / 2].v.I += 1e-2;
  ValidationReport vb = validate_certificate(bad, ifs, gm, gp, 1e-9);
  CHECK_FALSE(vb.ok);
  CHECK(vb.diagnosis.find("step error") != std::string::npos);

  // coarser grids over-approximate finer ones
  bool prev = false;
  for (int n : {400, 200, 100}) {
    ReachabilityGrid R = brute_force_reachability(ifs, n, n, gm, gp);
    CHECK(R.goal_reached);
    CHECK((R.goal_reached || !prev));
    prev = R.goal_reached;
  }
}

TEST_CASE("barrier gives an obstruction, refinement never adds reach") {
  SyntheticSpec s = lift_case();
  s.lifts[0].barrier = 0.3;
  s.lifts[0].barrier_width = 0.08;
  IFS ifs = make_synthetic_ifs(s);
  EssentialCurve gm = EssentialCurve::constant(0.1), gp = EssentialCurve::constant(0.4);
  TransportCertificate c = birkhoff_transport(ifs, gm, gp);
  REQUIRE(c.outcome == Outcome::Obstruction);
  for (double y : c.obstruction.ys) CHECK(std::abs(y - 0.3) < 1e-5);
  CHECK(validate_certificate(c, ifs, gm, gp, 1e-7).ok);

  double prev_top = -1.0;
  for (int n : {400, 200, 100}) {
    ReachabilityGrid R = brute_force_reachability(ifs, n, n, gm, gp);
    CHECK_FALSE(R.goal_reached);
    const double hy = ifs.domain.height() / n;
    double top = 0.0;
    for (int t : R.top_rows()) top = std::max(top, (t + 1) * hy);
    CHECK(top >= prev_top - 1e-12);
    prev_top = top;
  }
}

TEST_CASE("random synthetic instances agree with brute force") {
  std::mt19937_64 rng(20261018);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  int connecting = 0, obstruction = 0;
  for (int trial = 0; trial < 10; ++trial) {
    SyntheticSpec s;
    s.rotation = 0.1 + 0.8 * U(rng);
    s.twist = trial % 3 == 0 ? 0.4 * U(rng) : 0.0;
    const int nl = 1 + static_cast<int>(2 * U(rng));
    const bool barrier = trial % 2 == 1;
    const double yb = 0.2 + 0.15 * U(rng);
    for (int l = 0; l < nl; ++l) {
      LiftSpec L;
      L.lo = kTwoPi * U(rng);
      L.hi = L.lo + 0.3 + 0.7 * U(rng);
      L.amplitude = 0.02 + 0.04 * U(rng);
      if (barrier) {
        L.barrier = yb;
        L.barrier_width = 0.08;
      }
      s.lifts.push_back(L);
    }
    IFS ifs = make_synthetic_ifs(s);
    EssentialCurve gm = EssentialCurve::constant(0.1), gp = EssentialCurve::constant(0.4);
    TransportCertificate c = birkhoff_transport(ifs, gm, gp);
    ReachabilityGrid R = brute_force_reachability(ifs, 200, 200, gm, gp);
    INFO("trial " << trial << " rotation " << s.rotation << " twist " << s.twist);
    CHECK((c.outcome == Outcome::Connecting) == R.goal_reached);
    CHECK((c.outcome == Outcome::Connecting) == !barrier);
    CHECK(validate_certificate(c, ifs, gm, gp, 1e-7).ok);
    CHECK(c.monotone);
    (c.outcome == Outcome::Connecting ? connecting : obstruction)++;
  }
  CHECK(connecting == 5);
  CHECK(obstruction == 5);
}

TEST_CASE("twist Lipschitz bound") {
  SyntheticSpec s;
  s.twist = 0.5;
  IFS ifs = make_synthetic_ifs(s);
  CHECK(ifs.lipschitz == doctest::Approx(1.0 / (kTwoPi * 0.5)).epsilon(1e-6));
  SyntheticSpec r;
  CHECK(std::isinf(make_synthetic_ifs(r).lipschitz));
  EssentialCurve g = EssentialCurve::sampled([](double phi) { return 0.1 * std::sin(phi); });
  CHECK(g.measured_lipschitz() == doctest::Approx(0.1).epsilon(1e-3));
}

TEST_CASE("bad inputs") {
  IFS ifs = make_synthetic_ifs(lift_case());
  EssentialCurve a = EssentialCurve::constant(0.3), b = EssentialCurve::constant(0.2);
  CHECK_THROWS_AS(birkhoff_transport(ifs, a, b), Error);
  TransportOptions o;
  o.max_gen = 2;
  try {
    birkhoff_transport(ifs, EssentialCurve::constant(0.1), EssentialCurve::constant(0.4), o);
    FAIL("expected GenerationLimit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GenerationLimit);
  }
  LiftSpec bad{0.0, 1.0, 0.2, 0.1, 0.3, 0.05};
  SyntheticSpec s;
  s.lifts.push_back(bad);
  CHECK_THROWS_AS(make_synthetic_ifs(s), Error);
}
