#include <doctest.h>

#include "driftlab/map_core.hpp"

using namespace driftlab;

namespace {

PerturbationStep sin_phi_minus_x(double eps) {
  return PerturbationStep{eps, {{1, -1, 1.0, Basis::Sin}}};
}

PerturbationStep cos_phi_plus_x(double eps) {
  return PerturbationStep{eps, {{1, 1, 1.0, Basis::Cos}}};
}

double angdist(double a, double b) { return std::abs(wrap_angle(a - b)); }

// five closed loops used for the exactness checks; defined for all real t
std::vector<Loop> test_loops() {
  return {
      [](double t) { return Vec4(kTwoPi * t, 0.2, 0.0, 0.0); },
      [](double t) {
        double s = kTwoPi * t;
        return Vec4(s, 0.3 + 0.1 * std::sin(2 * s), 0.1 * std::cos(s), 0.2 * std::sin(s));
      },
      [](double t) {
        double s = kTwoPi * t;
        return Vec4(0.5 + 0.1 * std::sin(s), 0.1, s, 0.3 + 0.2 * std::cos(s));
      },
      [](double t) {
        double s = kTwoPi * t;
        return Vec4(1.0 + 0.3 * std::cos(s), 0.2 + 0.3 * std::sin(s), 1.0 + 0.2 * std::sin(2 * s),
                    -0.4 + 0.1 * std::cos(s));
      },
      [](double t) {
        double s = kTwoPi * t;
        return Vec4(s, -0.2 + 0.05 * std::cos(3 * s), s + 0.3 * std::sin(s), 0.5 * std::sin(s));
      },
  };
}

std::vector<MapDef> builtin_maps() {
  MapDef p = product_twist_standard(4.0);
  MapDef q = product_twist_standard(1.3, {0.1, 1.0, 0.5});
  MapDef d = double_standard(0.5, 4.0);
  MapDef c = perturbed(p, {sin_phi_minus_x(1e-3)});
  MapDef c2 = perturbed(d, {sin_phi_minus_x(1e-2), cos_phi_plus_x(5e-3)});
  return {p, q, d, c, c2};
}

}  // namespace

TEST_CASE("angle reduction is idempotent") {
  for (double a : {-7.0, -1e-18, 0.0, 3.0, kTwoPi, 13.5, 1e6}) {
    double r = reduce_angle(a);
    CHECK(r >= 0.0);
    CHECK(r < kTwoPi);
    CHECK(reduce_angle(r) == r);
  }
}

TEST_CASE("apply examples") {
  MapDef m = product_twist_standard(4.0);
  PhasePoint z = apply(m, {0, 0, 0, 0});
  CHECK(z.phi == 0.0);
  CHECK(z.I == 0.0);
  CHECK(z.x == 0.0);
  CHECK(z.y == 0.0);

  MapDef d = double_standard(0.5, 4.0);
  PhasePoint a = apply(d, {kPi / 2, 0.0, 0.0, 0.0});
  CHECK(a.phi == doctest::Approx(kPi / 2 + 0.5).epsilon(1e-14));
  CHECK(a.I == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(angdist(a.x, 0.0) < 1e-14);
  CHECK(std::abs(a.y) < 1e-14);

  // hand evaluation: ybar = 0 + 4 sin(pi) = 0, xbar = pi, phibar = 0 + 0.3
  PhasePoint b = apply(m, {0.0, 0.3, kPi, 0.0});
  CHECK(b.phi == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(b.I == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(angdist(b.x, kPi) < 1e-14);
  CHECK(std::abs(b.y) < 1e-14);
}

TEST_CASE("jacobian of the standard factor at the origin") {
  Mat4 J = jacobian(product_twist_standard(4.0), PhasePoint{0, 0, 0, 0});
  CHECK(J(kX, kX) == doctest::Approx(5.0));
  CHECK(J(kX, kY) == doctest::Approx(1.0));
  CHECK(J(kY, kX) == doctest::Approx(4.0));
  CHECK(J(kY, kY) == doctest::Approx(1.0));
}

TEST_CASE("unit determinant and analytic vs finite differences") {
  auto pts = random_points(200, 7);
  for (const auto& m : builtin_maps()) {
    for (const auto& p : pts) {
      Mat4 J = jacobian(m, p);
      CHECK(std::abs(J.determinant() - 1.0) < 1e-9);
      Mat4 F = jacobian_fd(m, p.vec());
      CHECK((J - F).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("perturbation step derivatives by hand") {
  const double eps = 0.01;
  MapDef base = product_twist_standard(4.0);
  MapDef m = perturbed(base, {sin_phi_minus_x(eps)});
  for (const auto& p : random_points(50, 3)) {
    // hand formulas: after the base map (P, Q, X, Y), the step gives
    // Ibar = Q - eps cos(P - X), ybar = Y + eps cos(P - X)
    const double P = p.phi + p.I, Y = p.y + 4.0 * std::sin(p.x), X = p.x + Y;
    PhasePoint q = apply(m, p);
    CHECK(std::abs(q.I - (p.I - eps * std::cos(P - X))) < 1e-13);
    CHECK(std::abs(q.y - (Y + eps * std::cos(P - X))) < 1e-12);
    // the step alone: dIbar/dphi = -eps d2f/dphi2 = eps sin(phi - x)
    Mat4 J = jacobian(m, p);
    Mat4 Jb = jacobian(base, p);
    Mat4 Jx = Mat4::Identity();
    Jx(kI, kPhi) = eps * std::sin(P - X);
    Jx(kI, kX) = -eps * std::sin(P - X);
    Jx(kY, kPhi) = -eps * std::sin(P - X);
    Jx(kY, kX) = eps * std::sin(P - X);
    CHECK((J - Jx * Jb).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("symplectic check") {
  auto pts = random_points(1000, 11);
  CHECK(check_symplectic(product_twist_standard(4.0), pts, 1e-9).passed);
  CHECK(check_symplectic(perturbed(product_twist_standard(4.0), {sin_phi_minus_x(1e-3)}), pts, 1e-9).passed);
  for (const auto& m : builtin_maps()) CHECK(check_symplectic(m, pts, 1e-9).passed);

  MapDef broken = product_twist_standard(4.0);
  broken.defect.y_scale = 1.1;
  CheckReport r = check_symplectic(broken, pts, 1e-9);
  CHECK_FALSE(r.passed);
  // J^T Omega J = det(normal block) * Omega on that block, so the defect is 0.1
  CHECK(r.max_residual == doctest::Approx(0.1).epsilon(1e-9));
  CHECK_THROWS_AS(check_symplectic(broken, pts, 0.0), Error);
}

TEST_CASE("inverse maps") {
  for (const auto& m : builtin_maps()) {
    for (const auto& p : random_points(300, 5)) {
      PhasePoint q = apply_inverse(m, apply(m, p));
      CHECK(angdist(q.phi, p.phi) < 1e-10);
      CHECK(std::abs(q.I - p.I) < 1e-10);
      CHECK(angdist(q.x, p.x) < 1e-10);
      CHECK(std::abs(q.y - p.y) < 1e-10);
    }
  }
}

namespace {
// independent oracle: Simpson rule on a very fine grid using differences of image points
double image_action_oracle(const MapDef& m, const Loop& loop, int n) {
  auto img = [&](double t) { return apply_lifted(m, loop(t)); };
  double sum = 0.0;
  const double h = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    double t = i * h;
    Vec4 a = img(t), b = img(t + 0.5 * h), c = img(t + h);
    auto f = [&](const Vec4& p, double tt) {
      Vec4 d = (img(tt + 1e-5) - img(tt - 1e-5)) / 2e-5;
      return p[kI] * d[kPhi] + p[kY] * d[kX];
    };
    sum += h / 6.0 * (f(a, t) + 4.0 * f(b, t + 0.5 * h) + f(c, t + h));
  }
  return sum;
}
}  // namespace

TEST_CASE("exactness on test loops") {
  auto loops = test_loops();
  ExactnessReport r0 = check_exact(product_twist_standard(4.0), loops[0], 256, 1e-8);
  CHECK(r0.check.passed);
  CHECK(r0.action_loop == doctest::Approx(0.4 * kPi).epsilon(1e-12));
  CHECK(r0.action_image == doctest::Approx(0.4 * kPi).epsilon(1e-12));

  MapDef pc = perturbed(product_twist_standard(4.0), {sin_phi_minus_x(1e-3)});
  ExactnessReport r1 = check_exact(pc, loops[0], 512, 1e-8);
  CHECK(r1.check.passed);
  CHECK(std::abs(r1.action_image - r1.action_loop) < 1e-8);
  CHECK(std::abs(r1.action_image - image_action_oracle(pc, loops[0], 2000)) < 1e-7);

  for (const auto& m : builtin_maps())
    for (const auto& l : loops) CHECK(check_exact(m, l, 512, 1e-8).check.passed);

  MapDef shift = product_twist_standard(4.0);
  shift.defect.I_shift = 0.01;
  ExactnessReport r2 = check_exact(shift, loops[0], 256, 1e-8);
  CHECK_FALSE(r2.check.passed);
  CHECK(r2.action_image - r2.action_loop == doctest::Approx(0.02 * kPi).epsilon(1e-9));
  CHECK_THROWS_AS(check_exact(shift, loops[0], 32, 1e-8), Error);
}

TEST_CASE("families") {
  MapDef base = product_twist_standard(4.0);
  MapFamily fam = make_family(base, {sin_phi_minus_x(1.0)});
  MapDef zero = fam.evaluate(0.0);
  PhasePoint a{0.3, 0.2, 1.0, 0.1}, b = a;
  for (int i = 0; i < 10000; ++i) {
    a = apply(base, a);
    b = apply(zero, b);
    REQUIRE(a.phi == b.phi);
    REQUIRE(a.I == b.I);
    REQUIRE(a.x == b.x);
    REQUIRE(a.y == b.y);
  }

  MapDef small = fam.evaluate(1e-3);
  for (const auto& p : random_points(500, 2)) {
    Vec4 d = phase_diff(apply(small, p).vec(), apply(base, p).vec());
    CHECK(d.cwiseAbs().maxCoeff() <= 1e-3 * (1.0 + 1e-12));
  }

  MapFamily two = make_family(base, {sin_phi_minus_x(1.0), cos_phi_plus_x(1.0)});
  MapDef m2 = two.evaluate(1e-2, 2e-2);
  for (const auto& p : random_points(50, 9)) {
    // X_1 o X_2 o base by hand
    Vec4 q = apply_lifted(base, p.vec());
    double P = q[kPhi], X = q[kX];
    // f2 = cos(phi+x): f_phi = f_x = -sin(phi+x)
    q[kI] += 2e-2 * std::sin(P + X);
    q[kY] += 2e-2 * std::sin(P + X);
    // f1 = sin(phi-x): f_phi = cos, f_x = -cos
    q[kI] -= 1e-2 * std::cos(P - X);
    q[kY] += 1e-2 * std::cos(P - X);
    Vec4 r = apply_lifted(m2, p.vec());
    CHECK((q - r).cwiseAbs().maxCoeff() < 1e-14);
  }
  CHECK_THROWS_AS(make_family(base, {sin_phi_minus_x(1), sin_phi_minus_x(1), sin_phi_minus_x(1)}), Error);
  CHECK_THROWS_AS(make_family(base, {}), Error);
}

TEST_CASE("standard saddle") {
  SaddleData s = standard_saddle(4.0);
  CHECK(std::abs(s.lambda_u - (3.0 + 2.0 * std::sqrt(2.0))) < 1e-12);
  CHECK(std::abs(s.lambda_s - (3.0 - 2.0 * std::sqrt(2.0))) < 1e-12);
  CHECK(std::abs(s.lambda_u * s.lambda_s - 1.0) < 1e-12);
  SaddleData s1 = standard_saddle(1.0);
  CHECK(std::abs(s1.lambda_u - (3.0 + std::sqrt(5.0)) / 2.0) < 1e-12);
  CHECK(std::abs(s1.lambda_s - (3.0 - std::sqrt(5.0)) / 2.0) < 1e-12);
  Mat2 A;
  A << 5, 1, 4, 1;
  CHECK((A * s.eu - s.lambda_u * s.eu).norm() < 1e-12);
  CHECK((A * s.es - s.lambda_s * s.es).norm() < 1e-12);
}
