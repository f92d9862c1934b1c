#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ddbh/error.hpp"
#include "ddbh/meanfield.hpp"

using namespace ddbh;

namespace {

// Closed-form (Cardano / trigonometric) real roots of a x^3 + b x^2 + c x + d.
std::vector<double> cardano(double a, double b, double c, double d) {
  const double p = (3 * a * c - b * b) / (3 * a * a);
  const double q = (2 * b * b * b - 9 * a * b * c + 27 * a * a * d) / (27 * a * a * a);
  const double shift = -b / (3 * a);
  std::vector<double> r;
  const double disc = q * q / 4 + p * p * p / 27;
  if (disc > 0) {
    const double s = std::sqrt(disc);
    r.push_back(std::cbrt(-q / 2 + s) + std::cbrt(-q / 2 - s) + shift);
  } else {
    const double m = 2 * std::sqrt(-p / 3);
    const double theta = std::acos(std::clamp(3 * q / (p * m), -1.0, 1.0)) / 3;
    for (int k = 0; k < 3; ++k) r.push_back(m * std::cos(theta - 2 * std::numbers::pi * k / 3) + shift);
  }
  std::sort(r.begin(), r.end());
  return r;
}

ModelParams reference(double f, int z = 2) {
  ModelParams p;
  p.delta = 0.1;
  p.u = 0.1;
  p.f = f;
  p.z = z;
  p.j_hop = 0.9 / z;
  return p;
}

double cubic_residual(const ModelParams& p, double n) {
  const double d = p.delta + p.zj() - p.u * n;
  return n * (d * d + 0.25 * p.gamma * p.gamma) - p.f * p.f;
}

}  // namespace

TEST_CASE("undriven vacuum") {
  ModelParams p = reference(0.0);
  const auto r = meanfield_roots(p);
  REQUIRE(r.size() == 1);
  CHECK(r[0].n == 0.0);
  CHECK(r[0].stable);
}

TEST_CASE("linear case U = 0") {
  ModelParams p = reference(1.0);
  p.u = 0.0;
  const auto r = meanfield_roots(p);
  REQUIRE(r.size() == 1);
  CHECK(r[0].n == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(r[0].stable);
}

TEST_CASE("three roots at F = 1.5695 with outer branches stable") {
  const ModelParams p = reference(1.5695);
  const auto r = meanfield_roots(p);
  REQUIRE(r.size() == 3);
  CHECK(r[0].stable);
  CHECK_FALSE(r[1].stable);
  CHECK(r[2].stable);
  const auto c = steady_state_cubic(p);
  const auto oracle = cardano(c[0], c[1], c[2], c[3]);
  REQUIRE(oracle.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(r[i].n - oracle[i]) < 1e-10);
    CHECK(std::abs(cubic_residual(p, r[i].n)) < 1e-10 * std::max(p.f * p.f, 1.0));
    CHECK(std::abs(std::norm(r[i].alpha) - r[i].n) < 1e-12 * r[i].n);
    // fixed point: i F = alpha (i (D - U n) - gamma/2)
    const complex lhs(0, p.f);
    const complex rhs = r[i].alpha * complex(-0.5, p.delta + p.zj() - p.u * r[i].n);
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("stability flag agrees with Jacobian eigenvalues") {
  for (double f : {0.5, 1.52, 1.55, 1.5695, 1.58, 2.0}) {
    const ModelParams p = reference(f);
    for (const auto& b : meanfield_roots(p)) {
      const auto ev = stability_eigenvalues(p, b.alpha);
      CHECK(b.stable == (ev[0].real() < 0 && ev[1].real() < 0));
    }
  }
}

TEST_CASE("bistable window contains F = 1.5695") {
  std::vector<double> grid;
  for (int i = 0; i <= 300; ++i) grid.push_back(1.4 + 0.001 * i);
  const auto sweep = meanfield_sweep(reference(0.0), grid);
  REQUIRE(sweep.bistable_window.has_value());
  const auto [lo, hi] = *sweep.bistable_window;
  CHECK(lo < 1.5695);
  CHECK(hi > 1.5695);
  CHECK(lo == doctest::Approx(1.52145).epsilon(1e-5));
  CHECK(hi == doctest::Approx(1.58114).epsilon(1e-5));
  // the window edges are where the discriminant changes sign
  ModelParams p = reference(lo - 1e-5);
  CHECK(cubic_discriminant(p) < 0);
  p.f = lo + 1e-5;
  CHECK(cubic_discriminant(p) > 0);
  for (const auto& pt : sweep.points) {
    CHECK((pt.branches.size() == 1 || pt.branches.size() == 3));
    CHECK(((pt.f > lo && pt.f < hi) == (pt.branches.size() == 3)));
  }
}

TEST_CASE("linear sweep has one branch everywhere") {
  ModelParams p = reference(0.0);
  p.u = 0.0;
  const std::vector<double> grid{0.0, 0.5, 1.0, 2.0, 5.0};
  const auto sweep = meanfield_sweep(p, grid);
  CHECK_FALSE(sweep.bistable_window.has_value());
  for (const auto& pt : sweep.points) CHECK(pt.branches.size() == 1);
}

TEST_CASE("sweep input validation") {
  CHECK_THROWS_AS(meanfield_sweep(reference(0.0), std::vector<double>{}), UsageError);
  CHECK_THROWS_AS(meanfield_sweep(reference(0.0), std::vector<double>{-1.0}), UsageError);
}

TEST_CASE("results depend on z and J only through zJ") {
  for (double f : {0.3, 1.5, 1.5695, 1.6, 3.0}) {
    const auto a = meanfield_roots(reference(f, 2));
    const auto b = meanfield_roots(reference(f, 4));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].n == b[i].n);
      CHECK(a[i].stable == b[i].stable);
    }
  }
}

TEST_CASE("companion roots match the closed form on random cubics") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    // build from known roots to cover both one- and three-root cases
    const double r1 = u(rng), r2 = u(rng), r3 = u(rng);
    const std::array<double, 4> c{1.0, -(r1 + r2 + r3), r1 * r2 + r1 * r3 + r2 * r3, -r1 * r2 * r3};
    auto roots = real_polynomial_roots(c);
    std::vector<double> expect{r1, r2, r3};
    std::sort(expect.begin(), expect.end());
    if (expect[1] - expect[0] < 1e-3 || expect[2] - expect[1] < 1e-3) continue;  // near-degenerate
    REQUIRE(roots.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(roots[i] == doctest::Approx(expect[i]).epsilon(1e-9));
  }
}

TEST_CASE("property: root count is 1 or 3 and every residual is tiny") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    ModelParams p = reference(4.0 * u01(rng));
    p.u = 0.02 + 0.3 * u01(rng);
    p.delta = -1.0 + 2.0 * u01(rng);
    const auto r = meanfield_roots(p);
    CHECK((r.size() == 1 || r.size() == 3));
    for (const auto& b : r) {
      CHECK(b.n >= 0.0);
      CHECK(std::abs(cubic_residual(p, b.n)) < 1e-10 * std::max(p.f * p.f, 1.0));
    }
    for (std::size_t i = 1; i < r.size(); ++i) CHECK(r[i - 1].n <= r[i].n);
  }
}
