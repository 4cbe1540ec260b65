#include <doctest.h>

#include "driftlab/homoclinic.hpp"

#include <cmath>

using namespace driftlab;

namespace {

// independent standard map and unstable-branch walk for the x = pi oracle
struct Std {
  double k;
  void fwd(double& x, double& y) const {
    y += k * std::sin(x);
    x += y;
  }
};

Vec2 first_pi_crossing(double k) {
  const double tr = 2.0 + k, lu = 0.5 * (tr + std::sqrt(tr * tr - 4.0));
  const double ex = 1.0, ey = lu - 1.0 - k, en = std::hypot(ex, ey);
  Std m{k};
  auto pt = [&](double s) {
    double x = s * ex / en, y = s * ey / en;
    for (int i = 0; i < 12; ++i) m.fwd(x, y);
    return Vec2(x, y);
  };
  // s spans one fundamental domain, scanned densely over the next few domains
  const double s0 = 1e-9;
  double prev_s = s0;
  Vec2 prev = pt(prev_s);
  for (int i = 1; i < 200000; ++i) {
    const double s = s0 * std::pow(lu, 3.0 * i / 200000.0);
    Vec2 p = pt(s);
    if ((prev[0] - kPi) * (p[0] - kPi) <= 0.0) {
      double lo = prev_s, hi = s;
      for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if ((pt(mid)[0] - kPi) * (prev[0] - kPi) > 0.0)
          lo = mid;
        else
          hi = mid;
      }
      return pt(0.5 * (lo + hi));
    }
    prev = p;
    prev_s = s;
  }
  return Vec2(NAN, NAN);
}

MapDef perturbed_map(double eps) {
  PerturbationStep st;
  st.epsilon = eps;
  st.terms = {{1, -1, 1.0, Basis::Sin}};
  return perturbed(product_twist_standard(4.0), {st});
}

const Band kBand{0.05, 0.35};
const Band kDomain{0.1, 0.3};

}  // namespace

TEST_CASE("saddle multipliers") {
  SaddleData s = find_saddle(4.0);
  CHECK(s.lambda_u == doctest::Approx(3.0 + 2.0 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(s.lambda_s == doctest::Approx(3.0 - 2.0 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(std::abs(s.lambda_u * s.lambda_s - 1.0) < 1e-12);
  SaddleData s1 = find_saddle(1.0);
  CHECK(s1.lambda_u == doctest::Approx((3.0 + std::sqrt(5.0)) / 2).epsilon(1e-12));
  CHECK(s1.lambda_s == doctest::Approx((3.0 - std::sqrt(5.0)) / 2).epsilon(1e-12));
  for (double k : {0.3, 1.0, 4.0, 9.0}) CHECK(std::abs(find_saddle(k).lambda_u * find_saddle(k).lambda_s - 1) < 1e-12);
  CHECK_THROWS_AS(find_saddle(0.0), Error);
}

TEST_CASE("primary homoclinic point, k=4") {
  SaddleData s = find_saddle(4.0);
  HomoclinicPoint h = find_primary_homoclinic(s);
  CHECK(h.residual < 1e-8);
  CHECK(h.angle > 1e-3);
  CHECK(std::abs(h.p_h[0] - kPi) < 1e-9);

  // bisection oracle on the unstable branch
  Vec2 q = first_pi_crossing(4.0);
  CHECK(std::abs(q[0] - kPi) < 1e-9);
  CHECK(std::abs(q[1] - h.p_h[1]) < 1e-7);

  // reversor (x, y) -> (-x, y + k sin x) fixes the point and maps W^u to W^s
  Vec2 r(reduce_angle(-h.p_h[0]), h.p_h[1] + 4.0 * std::sin(h.p_h[0]));
  CHECK(std::abs(wrap_angle(r[0] - h.p_h[0])) < 1e-9);
  CHECK(std::abs(r[1] - h.p_h[1]) < 1e-9);

  // orbit consistency and forward decay rate
  for (int j = -15; j < 15; ++j) {
    Vec2 a = homoclinic_orbit_point(s, h, j), b = homoclinic_orbit_point(s, h, j + 1);
    Vec2 fa = standard_map(4.0, a);
    CHECK(std::hypot(wrap_angle(fa[0] - b[0]), fa[1] - b[1]) < 1e-8);
  }
  auto dist = [&](int j) {
    Vec2 p = homoclinic_orbit_point(s, h, j);
    return std::hypot(wrap_angle(p[0]), p[1]);
  };
  const double ratio = dist(11) / dist(10);
  CHECK(std::abs(ratio / s.lambda_s - 1.0) < 0.05);
}

TEST_CASE("transversality angle is positive and larger for k=4") {
  HomoclinicPoint h4 = find_primary_homoclinic(find_saddle(4.0));
  HomoclinicPoint h05 = find_primary_homoclinic(find_saddle(0.5));
  CHECK(h05.residual < 1e-8);
  CHECK(h05.angle > 0.0);
  CHECK(h4.angle > h05.angle);
}

TEST_CASE("distinct homoclinic orbits") {
  SaddleData s = find_saddle(4.0);
  auto pts = find_homoclinic_points(s, 10, 1e-10);
  REQUIRE(pts.size() == 10);
  for (std::size_t a = 0; a < pts.size(); ++a) {
    CHECK(pts[a].residual < 1e-10);
    for (std::size_t b = a + 1; b < pts.size(); ++b)
      for (int j = -20; j <= 20; ++j) {
        Vec2 q = homoclinic_orbit_point(s, pts[b], j);
        CHECK(std::hypot(wrap_angle(q[0] - pts[a].p_h[0]), q[1] - pts[a].p_h[1]) > 1e-6);
      }
  }
}

TEST_CASE("unperturbed homoclinic cylinder is the product and F_B is the identity") {
  MapDef m = product_twist_standard(4.0);
  SaddleData s = find_saddle(4.0);
  HomoclinicPoint h = find_primary_homoclinic(s);
  CylinderGraph cyl = compute_cylinder(m, kBand, 64, 16, 1e-9, 100);
  HomoclinicCylinder B = build_homoclinic_cylinder(m, cyl, h, kDomain, 32, 16, 0.05);
  for (int j = 0; j < B.n_I; ++j)
    for (int i = 0; i < B.n_phi; ++i) {
      const Vec4& P = B.points[static_cast<std::size_t>(j) * B.n_phi + i];
      CylinderPoint v = B.node(i, j);
      CHECK(std::abs(wrap_angle(P[kPhi] - v.phi)) < 1e-12);
      CHECK(std::abs(P[kI] - v.I) < 1e-12);
      CHECK(std::abs(wrap_angle(P[kX] - h.p_h[0])) < 1e-12);
      CHECK(std::abs(P[kY] - h.p_h[1]) < 1e-12);
    }
  CHECK(B.m_minus <= 30);
  CHECK(B.m_plus <= 30);
  CHECK(B.m_minus >= 1);

  ScatteringMapSample F = scattering_map(m, cyl, B);
  CHECK(F.sup_shift < 1e-6);
  CHECK(F.exactness_residual < 1e-6);
  SimplicityReport r = check_simplicity(m, cyl, B, F, Band{0.12, 0.28}, SimplicityOptions{4});
  CHECK(r.s1);
  CHECK(r.s2);
  CHECK(r.s3);

  OrthogonalityReport o = symplectic_orthogonality_check(m, cyl, B, 8);
  CHECK(o.check.max_residual < 1e-14);
  CHECK(o.min_det_omega_A == doctest::Approx(1.0).epsilon(1e-14));

  // both projectors recover the base point from samples of B
  HolonomyProjector hp;
  hp.map = &m;
  hp.cylinder = &cyl;
  for (std::size_t k : {0u, 77u, 300u}) {
    ProjectionResult ps = project_stable(B.points[k], hp);
    ProjectionResult pu = project_unstable(B.points[k], hp);
    CHECK(cyl_dist(ps.v, B.v_plus[k]) < 1e-7);
    CHECK(cyl_dist(pu.v, B.v_minus[k]) < 1e-7);
  }
}

TEST_CASE("perturbed cylinder, scattering scaling, simplicity") {
  SaddleData s = find_saddle(4.0);
  HomoclinicPoint h = find_primary_homoclinic(s);
  MapDef m0 = product_twist_standard(4.0);
  CylinderGraph cyl0 = compute_cylinder(m0, kBand, 64, 16, 1e-9, 100);
  HomoclinicCylinder B0 = build_homoclinic_cylinder(m0, cyl0, h, kDomain, 32, 16, 0.05);
  ScatteringMapSample F0 = scattering_map(m0, cyl0, B0, 0, {0, 0});
  SimplicityReport r0 = check_simplicity(m0, cyl0, B0, F0, Band{0.12, 0.28}, SimplicityOptions{4});

  double disp[2], shift[2];
  const double eps[2] = {1e-3, 5e-4};
  for (int e = 0; e < 2; ++e) {
    MapDef m = perturbed_map(eps[e]);
    CylinderGraph cyl = compute_cylinder(m, kBand, 128, 32, 1e-9, 200);
    HomoclinicCylinder B = build_homoclinic_cylinder(m, cyl, h, kDomain, 32, 16, 0.05, 1);
    CHECK(B.max_residual < 1e-9);
    disp[e] = B.max_seed_displacement;
    CHECK(disp[e] <= 10 * eps[e]);
    ScatteringMapSample F = scattering_map(m, cyl, B);
    shift[e] = F.sup_shift;
    CHECK(F.sup_shift >= eps[e] / 10);
    CHECK(F.sup_shift <= 10 * eps[e]);
    CHECK(F.exactness_residual < 1e-6);

    SimplicityReport r = check_simplicity(m, cyl, B, F, Band{0.12, 0.28}, SimplicityOptions{4});
    CHECK(r.simple());
    CHECK(r.max_condition <= 2 * r0.max_condition);

    // exactness consequence: F(circle) crosses the circle
    for (int j = 0; j < B.n_I; ++j) {
      double lo = 1e9, hi = -1e9;
      for (int i = 0; i < B.n_phi; ++i) {
        lo = std::min(lo, F.disp.at(i, j, 1));
        hi = std::max(hi, F.disp.at(i, j, 1));
      }
      CHECK(lo < 0.0);
      CHECK(hi > 0.0);
    }

    HolonomyProjector hp;
    hp.map = &m;
    hp.cylinder = &cyl;
    for (std::size_t k : {5u, 130u, 411u}) {
      CHECK(cyl_dist(project_stable(B.points[k], hp).v, B.v_plus[k]) < 1e-7);
      CHECK(cyl_dist(project_unstable(B.points[k], hp).v, B.v_minus[k]) < 1e-7);
    }
    if (e == 0) {
      OrthogonalityReport o = symplectic_orthogonality_check(m, cyl, B, 8);
      CHECK(o.check.passed);
      CHECK(o.pairing_log.front() > o.pairing_log.back());
      CHECK(o.min_det_omega_A > 0.9);
    }
  }
  CHECK(disp[1] / disp[0] == doctest::Approx(0.5).epsilon(0.2));
  CHECK(shift[1] / shift[0] == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("collapsed fiber tangent fails S1") {
  MapDef m = product_twist_standard(4.0);
  HomoclinicPoint h = find_primary_homoclinic(find_saddle(4.0));
  CylinderGraph cyl = compute_cylinder(m, kBand, 64, 16, 1e-9, 100);
  HomoclinicCylinder B = build_homoclinic_cylinder(m, cyl, h, kDomain, 16, 8, 0.05);
  ScatteringMapSample F = scattering_map(m, cyl, B, 0, {0, 0});
  SimplicityOptions so;
  so.collapse_fiber = true;
  so.stride = 4;
  SimplicityReport r = check_simplicity(m, cyl, B, F, Band{0.12, 0.28}, so);
  CHECK_FALSE(r.s1);
  CHECK(r.max_condition > 1e8);
  CHECK(r.s2);
  CHECK(r.s3);
}

TEST_CASE("secondary cylinders and conjugacy") {
  MapDef m = perturbed_map(1e-3);
  HomoclinicPoint h = find_primary_homoclinic(find_saddle(4.0));
  CylinderGraph cyl = compute_cylinder(m, kBand, 128, 32, 1e-9, 200);
  HomoclinicCylinder B = build_homoclinic_cylinder(m, cyl, h, kDomain, 16, 8, 0.05);
  auto sec = generate_secondary(m, cyl, B, 8);
  REQUIRE(sec.size() == 8);
  for (std::size_t a = 0; a < sec.size(); ++a)
    for (std::size_t b = a + 1; b < sec.size(); ++b) CHECK(sec[a].hp.p_h != sec[b].hp.p_h);

  // F_{Phi(B)} = F0 o F_B o F0^{-1}, checked at F0-images of sample nodes
  for (const HomoclinicCylinder* C : {&B, &sec[0], &sec[5]}) {
    for (int i = 0; i < 16; i += 5) {
      CylinderPoint v = C->node(i, 3);
      ExcursionOrbit o = solve_excursion(m, cyl, *C, v);
      CylinderPoint lhs = solve_excursion(m, cyl, *C, restricted_map(m, cyl, v), 1).v_plus;
      CylinderPoint rhs = restricted_map(m, cyl, o.v_plus);
      CHECK(cyl_dist(lhs, rhs) < 1e-6);
    }
  }
  // unperturbed: each secondary cylinder is A x {p_h'}
  MapDef m0 = product_twist_standard(4.0);
  CylinderGraph cyl0 = compute_cylinder(m0, kBand, 64, 16, 1e-9, 100);
  HomoclinicCylinder B0 = build_homoclinic_cylinder(m0, cyl0, h, kDomain, 16, 8, 0.05);
  auto sec0 = generate_secondary(m0, cyl0, B0, 3);
  for (const auto& C : sec0)
    for (std::size_t k = 0; k < C.points.size(); k += 7) {
      CHECK(std::abs(wrap_angle(C.points[k][kX] - C.hp.p_h[0])) < 1e-12);
      CHECK(std::abs(C.points[k][kY] - C.hp.p_h[1]) < 1e-12);
    }
}

TEST_CASE("excursion leaving the band") {
  MapDef m = product_twist_standard(4.0);
  HomoclinicPoint h = find_primary_homoclinic(find_saddle(4.0));
  CylinderGraph cyl = compute_cylinder(m, kBand, 64, 16, 1e-9, 100);
  HomoclinicCylinder B = build_homoclinic_cylinder(m, cyl, h, kDomain, 16, 8, 0.05);
  try {
    solve_excursion(m, cyl, B, {1.0, 2.0});
    FAIL("expected DomainExceeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DomainExceeded);
  }
}
