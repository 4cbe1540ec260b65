#include <doctest.h>

#include "driftlab/nhim.hpp"

#include <random>

using namespace driftlab;

namespace {

MapDef pert(double eps) {
  return perturbed(product_twist_standard(4.0), {PerturbationStep{eps, {{1, -1, 1.0, Basis::Sin}}}});
}

const Band kBand{0.05, 0.35};

}  // namespace

TEST_CASE("unperturbed cylinder is the zero graph") {
  MapDef m = product_twist_standard(4.0);
  CylinderGraph c = compute_cylinder(m, kBand, 32, 8, 1e-10, 10);
  CHECK(c.residual == 0.0);
  CHECK(c.sup_norm() == 0.0);
  CHECK(c.sweeps == 0);
  CHECK_THROWS_AS(compute_cylinder(m, Band{0.3, 0.1}, 32, 8, 1e-10, 10), Error);
}

TEST_CASE("perturbed cylinder and first-order scaling") {
  const double eps = 1e-3;
  CylinderGraph c1 = compute_cylinder(pert(eps), kBand, 128, 32, 1e-8, 100);
  CylinderGraph c2 = compute_cylinder(pert(eps / 2), kBand, 128, 32, 1e-8, 100);
  CHECK(c1.residual < 1e-8);
  CHECK(c1.sup_norm() <= 10 * eps);
  CHECK(c1.sup_norm() > 0.0);
  const double ratio = c1.sup_norm() / c2.sup_norm();
  CHECK(ratio > 1.6);
  CHECK(ratio < 2.4);
  // independent recheck of invariance at every node
  CHECK(cylinder_residual(pert(eps), c1) <= 2 * c1.residual);
  double worst = 0.0;
  for (int j = 0; j < 32; ++j)
    for (int i = 0; i < 128; ++i) {
      Vec4 P(c1.g.phi_at(i), c1.g.I_at(j), c1.g.at(i, j, 0), c1.g.at(i, j, 1));
      Vec4 Q = apply_lifted(pert(eps), P);
      Vec2 gq = c1.normal(Q[kPhi], Q[kI]);
      worst = std::max(worst, std::max(std::abs(wrap_angle(Q[kX]) - gq[0]), std::abs(Q[kY] - gq[1])));
    }
  CHECK(worst <= 2 * c1.residual + 1e-15);
}

TEST_CASE("graph transform contracts noise back to zero") {
  MapDef m = product_twist_standard(4.0);
  CylinderGraph seed;
  seed.g = GridField(64, 16, kBand.lo, kBand.hi, 2);
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1e-2, 1e-2);
  for (double& v : seed.g.raw()) v = u(rng);
  CylinderGraph c = compute_cylinder(m, kBand, 64, 16, 1e-10, 50, &seed);
  CHECK(c.sweeps <= 50);
  CHECK(c.sup_norm() < 1e-9);
}

TEST_CASE("restricted map") {
  MapDef m = product_twist_standard(4.0);
  CylinderGraph c = compute_cylinder(m, Band{0.0, 1.0}, 32, 8, 1e-10, 10);
  CylinderPoint w = restricted_map(m, c, {0.0, 0.2});
  CHECK(w.phi == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(w.I == doctest::Approx(0.2).epsilon(1e-15));
  for (double I : {0.1, 0.5, 0.9}) {
    Mat2 D = restricted_jacobian(m, c, Vec2(1.0, I), +1);
    CHECK(D(0, 1) == doctest::Approx(1.0).epsilon(1e-8));
  }
  CHECK_THROWS_AS(restricted_map(m, c, {0.0, 1.5}), Error);

  const double eps = 1e-3;
  CylinderGraph cp = compute_cylinder(pert(eps), kBand, 128, 32, 1e-9, 100);
  CylinderGraph c0 = compute_cylinder(m, kBand, 32, 8, 1e-10, 10);
  double worst = 0.0;
  for (int j = 0; j < 16; ++j)
    for (int i = 0; i < 64; ++i) {
      CylinderPoint v{kTwoPi * i / 64, 0.06 + 0.28 * j / 15};
      Vec2 a = restricted_step(pert(eps), cp, v.vec(), 1), b = restricted_step(m, c0, v.vec(), 1);
      worst = std::max(worst, std::hypot(wrap_angle(a[0] - b[0]), a[1] - b[1]));
    }
  CHECK(worst <= 10 * eps);
  CHECK(worst > 0.0);
}

TEST_CASE("spectral gap") {
  MapDef m = product_twist_standard(4.0);
  CylinderGraph c = compute_cylinder(m, kBand, 32, 8, 1e-10, 10);
  SpectralGapReport r = spectral_gap(m, c);
  CHECK(std::abs(r.lambda - (3.0 - 2.0 * std::sqrt(2.0))) < 1e-9);
  // scaled shear [[1, s],[0, 1]]: largest singular value (s + sqrt(s^2 + 4)) / 2
  const double s = 0.1, a_s = (s + std::sqrt(s * s + 4)) / 2;
  CHECK(r.alpha <= 1.1);
  CHECK(r.alpha == doctest::Approx(a_s).epsilon(1e-6));
  CHECK(r.product_check < 1.0);
  CHECK(r.product_check == doctest::Approx(a_s * a_s * r.lambda).epsilon(1e-6));
  CHECK(r.valid);

  SpectralGapReport n = spectral_gap(m, c, Vec2(1.0, 1.0));
  CHECK(n.alpha == doctest::Approx((1 + std::sqrt(5.0)) / 2).epsilon(1e-6));
  CHECK(n.product_check == doctest::Approx(0.449).epsilon(2e-3));
  CHECK_THROWS_AS(spectral_gap(m, c, Vec2(1.0, 10.0)), Error);

  CylinderGraph cp = compute_cylinder(pert(1e-3), kBand, 64, 16, 1e-8, 100);
  SpectralGapReport full = spectral_gap(pert(1e-3), cp);
  Band sub{0.15, 0.25};
  SpectralGapReport part = spectral_gap(pert(1e-3), cp, Vec2(1.0, 0.1), &sub);
  CHECK(part.alpha <= full.alpha);
  CHECK(part.lambda <= full.lambda);
}

TEST_CASE("holonomy projectors") {
  MapDef m = product_twist_standard(4.0);
  CylinderGraph c = compute_cylinder(m, kBand, 32, 8, 1e-10, 10);
  HolonomyProjector hp;
  hp.map = &m;
  hp.cylinder = &c;

  Vec4 on = c.lift({1.0, 0.2});
  ProjectionResult r0 = project_stable(on, hp);
  CHECK(r0.n == 0);
  CHECK(r0.v.phi == 1.0);
  CHECK(r0.v.I == 0.2);

  // product foliation: fibres are vertical, so the phase is the base point
  CylinderPoint v{2.0, 0.2};
  Vec4 xs = manifold_point(m, c, v, Direction::Stable, 1e-10, 12);
  ProjectionResult rs = project_stable(xs, hp);
  CHECK(cyl_dist(rs.v, base_of(xs)) < 1e-10);
  Vec4 xu = manifold_point(m, c, v, Direction::Unstable, 1e-10, 12);
  ProjectionResult ru = project_unstable(xu, hp);
  CHECK(cyl_dist(ru.v, base_of(xu)) < 1e-10);

  Vec4 bad = on;
  bad[kX] += 0.01 * c.saddle.eu[0];
  bad[kY] += 0.01 * c.saddle.eu[1];
  CHECK_THROWS_AS(project_stable(bad, hp), Error);
}

TEST_CASE("projector equivariance and rate, perturbed") {
  const double eps = 1e-3;
  MapDef m = pert(eps);
  CylinderGraph c = compute_cylinder(m, kBand, 128, 32, 1e-9, 100);
  SpectralGapReport gap = spectral_gap(m, c);
  HolonomyProjector hp;
  hp.map = &m;
  hp.cylinder = &c;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ph(0, kTwoPi), ac(0.15, 0.25), sg(-1.0, 1.0);
  double worst_s = 0.0, worst_u = 0.0, worst_ratio = 0.0;
  for (int k = 0; k < 100; ++k) {
    CylinderPoint v{ph(rng), ac(rng)};
    const double s0 = 1e-10 * sg(rng);
    Vec4 xs = manifold_point(m, c, v, Direction::Stable, s0, 9);
    ProjectionResult a = project_stable(xs, hp);
    ProjectionResult b = project_stable(apply_lifted(m, xs), hp);
    Vec2 Fa = restricted_step(m, c, a.v.vec(), 1);
    worst_s = std::max(worst_s, cyl_dist(b.v, CylinderPoint{Fa[0], Fa[1]}));
    worst_ratio = std::max(worst_ratio, a.ratio);

    Vec4 xu = manifold_point(m, c, v, Direction::Unstable, s0, 9);
    ProjectionResult au = project_unstable(xu, hp);
    ProjectionResult bu = project_unstable(apply_inverse_lifted(m, xu), hp);
    Vec2 Fu = restricted_step(m, c, au.v.vec(), -1);
    worst_u = std::max(worst_u, cyl_dist(bu.v, CylinderPoint{Fu[0], Fu[1]}));
    worst_ratio = std::max(worst_ratio, au.ratio);
  }
  CHECK(worst_s < 1e-7);
  CHECK(worst_u < 1e-7);
  CHECK(worst_ratio <= gap.alpha * gap.lambda + 0.1);
}

TEST_CASE("lambda lemma") {
  MapDef m = product_twist_standard(4.0);
  CylinderGraph c = compute_cylinder(m, kBand, 32, 8, 1e-10, 10);
  const double lam = c.saddle.lambda_s;
  SeedSurface h = local_unstable_manifold(m, c);
  LambdaLemmaReport same = lambda_lemma_check(m, c, h, 5);
  for (double d : same.c0) CHECK(d < 1e-13);

  LambdaLemmaReport r = lambda_lemma_check(m, c, [](double, double, double) { return 0.1; }, 10);
  REQUIRE(r.graph_ok);
  REQUIRE(r.ratios.size() == 10);
  for (double q : r.ratios) CHECK(std::abs(q / lam - 1.0) < 0.2);
  for (std::size_t k = 0; k < r.c0.size(); ++k)
    CHECK(std::abs(r.c0[k] / (0.1 * std::pow(lam, double(k))) - 1.0) < 0.2);

  MapDef mp = pert(1e-3);
  CylinderGraph cp = compute_cylinder(mp, kBand, 64, 16, 1e-8, 100);
  LambdaLemmaReport rp = lambda_lemma_check(mp, cp, [](double, double, double) { return 0.1; }, 10);
  REQUIRE(rp.graph_ok);
  CHECK(std::abs(rp.mean_ratio / r.mean_ratio - 1.0) < 0.2);
}
