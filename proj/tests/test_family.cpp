#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bifscope/family.hpp"

using namespace bifscope;

namespace {

const char* kLattes = "(z^2-c)^2/(4*z*(z-1)*(z-c))";

SpherePoint affine(cd z) { return SpherePoint::from_affine(z); }

double sphere_gap(const SpherePoint& a, const SpherePoint& b) { return chordal_distance(a, b); }

}  // namespace

TEST(BuildFamily, Quadratic) {
  const auto pr = build_family("z^2+c", "c");
  const auto& f = pr.family;
  EXPECT_EQ(f.degree(), 2);
  // lift (Z^2 + lambda W^2, W^2)
  const FiberMap m = f.fiber(cd(0.3, -0.2));
  EXPECT_EQ(m.p[2], cd(1.0));
  EXPECT_EQ(m.p[1], cd(0.0));
  EXPECT_EQ(m.p[0], cd(0.3, -0.2));
  EXPECT_EQ(m.q[0], cd(1.0));
  EXPECT_EQ(m.q[1], cd(0.0));
  EXPECT_EQ(m.q[2], cd(0.0));
  auto [A, B] = pr.marked.lift(cd(0.3, -0.2));
  EXPECT_EQ(A, cd(0.3, -0.2));
  EXPECT_EQ(B, cd(1.0));
  EXPECT_FALSE(f.is_constant());
}

TEST(BuildFamily, LattesHasDegreeFourAndNonzeroResultant) {
  const auto pr = build_family(kLattes, "2");
  EXPECT_EQ(pr.family.degree(), 4);
  const cd lam(0.3, 0.1);
  const FiberMap m = pr.family.fiber(lam);
  const cd res = binary_resultant(m.p, m.q, 4);
  EXPECT_GT(std::abs(res), 1e-6);
  EXPECT_GT(RationalFamily::relative_resultant(m, res), RationalFamily::kDegeneracyThreshold);
  // lambda = 0 and lambda = 1 are the degenerate members (the curve y^2 = x(x-1)(x-lambda) is singular).
  EXPECT_TRUE(pr.family.degenerate_at(0.0));
  EXPECT_TRUE(pr.family.degenerate_at(1.0));
}

TEST(BuildFamily, IsotrivialIsConstant) {
  const auto pr = build_family("z^2-2", "c");
  EXPECT_EQ(pr.family.degree(), 2);
  EXPECT_TRUE(pr.family.is_constant());
}

TEST(BuildFamily, Errors) {
  auto kind = [](const char* map, const char* marked) {
    try {
      build_family(map, marked);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;
  };
  EXPECT_EQ(kind("z^2+c", "z"), ErrorKind::InvalidMarkedPoint);
  EXPECT_EQ(kind("z+c", "c"), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind("z^2/(c-c)", "c"), ErrorKind::NotRationalInZ);
  // Numerator and denominator differ by a tiny constant: Res ~ 1e-14 at every lambda.
  EXPECT_EQ(kind("(z^2+c*z)/(z^2+c*z+1e-7)", "c"), ErrorKind::DegenerateEverywhere);
}

TEST(Apply, QuadraticAtZero) {
  const auto pr = build_family("z^2+c", "c");
  const SpherePoint out = apply(pr.family, 0.0, affine(2.0));
  EXPECT_LT(sphere_gap(out, affine(4.0)), 1e-15);
  EXPECT_NEAR(std::max(std::abs(out.Z), std::abs(out.W)), 1.0, 1e-15);
}

TEST(Apply, PolynomialsFixInfinity) {
  for (const char* map : {"z^2+c", "z^2-2", "z^3-3*c*z+1"}) {
    const auto pr = build_family(map, "c");
    const SpherePoint out = apply(pr.family, cd(0.2, 0.4), SpherePoint::infinity());
    EXPECT_TRUE(out.is_infinity()) << map;
  }
}

TEST(Apply, LattesLiftMatchesChart) {
  const auto pr = build_family(kLattes, "2");
  const cd lam = 0.5;
  const Expr e = parse(kLattes);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    const cd z(u(rng), u(rng));
    const cd chart = eval(e, z, lam);
    const cd lift = apply(pr.family, lam, affine(z)).affine();
    EXPECT_LT(std::abs(lift - chart), 1e-12 * std::max(1.0, std::abs(chart))) << z;
  }
}

TEST(OrbitJet, QuadraticExamples) {
  const auto pr = build_family("z^2+c", "c");
  const ChartJet j1 = orbit_jet(pr.family, pr.marked, 0.0, 1);
  EXPECT_EQ(j1.jet.v, cd(0.0));
  EXPECT_LT(std::abs(j1.jet.dl - 1.0), 1e-15);
  const ChartJet j2 = orbit_jet(pr.family, pr.marked, -2.0, 2);
  EXPECT_FALSE(j2.inverse_chart);
  EXPECT_LT(std::abs(j2.jet.v - 2.0), 1e-14);
  EXPECT_LT(std::abs(j2.jet.dl + 11.0), 1e-13);
  const ChartJet j0 = orbit_jet(pr.family, pr.marked, cd(0.3, 0.7), 0);
  EXPECT_LT(std::abs(j0.jet.v - cd(0.3, 0.7)), 1e-15);
  EXPECT_LT(std::abs(j0.jet.dl - 1.0), 1e-15);
}

TEST(OrbitJet, RechartsNearInfinity) {
  const auto pr = build_family("z^2+c", "c");
  const ChartJet j = orbit_jet(pr.family, pr.marked, 3.0, 6);
  EXPECT_TRUE(j.inverse_chart);
  EXPECT_LT(std::abs(j.jet.v), 1e-6);
}

namespace {

// Five-point central difference of the n-th marked iterate in a fixed chart.
cd fd_orbit(const DynamicalPair& pr, cd lam, int n, Chart chart, double h) {
  auto v = [&](double s) { return orbit_jet(pr.family, pr.marked, lam + s, n, chart).jet.v; };
  return (-v(2 * h) + 8.0 * v(h) - 8.0 * v(-h) + v(-2 * h)) / (12.0 * h);
}

}  // namespace

TEST(Property, OrbitJetMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  struct Case {
    const char* map;
    const char* marked;
    Window box;
  };
  const Case cases[] = {
      {"z^2+c", "c", {-2.0, 0.5, -1.2, 1.2}},
      {"z^3+c*z+1", "c", {-1.0, 1.0, -1.0, 1.0}},
      {kLattes, "2", {0.2, 0.6, 0.1, 0.5}},
  };
  int checked = 0;
  for (const auto& c : cases) {
    const auto pr = build_family(c.map, c.marked);
    std::uniform_real_distribution<double> ur(c.box.re_min, c.box.re_max), ui(c.box.im_min, c.box.im_max);
    for (int trial = 0; trial < 25; ++trial) {
      const cd lam(ur(rng), ui(rng));
      const int n = 1 + static_cast<int>(rng() % 20);
      const ChartJet j = orbit_jet(pr.family, pr.marked, lam, n);
      const Chart chart = j.inverse_chart ? Chart::Inverse : Chart::Affine;
      const double D = std::abs(j.jet.dl);
      const double h = 1e-3 / (1.0 + D);
      const cd fd = fd_orbit(pr, lam, n, chart, h);
      EXPECT_LT(std::abs(j.jet.dl - fd) / std::max(1.0, D), 1e-6) << c.map << " lambda=" << lam << " n=" << n;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 75);
}

TEST(SphericalDerivative, Examples) {
  const auto pr = build_family("z^2", "c");
  EXPECT_NEAR(spherical_derivative(pr.family, 0.0, std::polar(1.0, 0.7)), 2.0, 1e-14);
  EXPECT_NEAR(spherical_derivative(pr.family, 0.0, 0.0), 0.0, 1e-15);
}

TEST(SphericalDerivative, ChartIndependence) {
  // g(w) = 1/f(1/w) for f = z^2 + c.
  const auto f = build_family("z^2+c", "c");
  const auto g = build_family("z^2/(1+c*z^2)", "c");
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 100; ++k) {
    const cd lam(u(rng) * 0.5, u(rng) * 0.5), z(u(rng), u(rng));
    const double a = spherical_derivative(f.family, lam, z);
    const double b = spherical_derivative(g.family, lam, 1.0 / z);
    EXPECT_LT(std::abs(a - b), 1e-12 * std::max(1.0, a));
  }
}

TEST(SphericalDerivative, AffineFormula) {
  const auto pr = build_family(kLattes, "2");
  const Expr e = parse(kLattes);
  const cd lam(0.3, 0.1), z(0.8, -0.4);
  const Jet fz = eval_as<Jet>(e, Jet::z_var(z), Jet(lam));
  const double want = std::abs(fz.dz) * (1.0 + std::norm(z)) / (1.0 + std::norm(fz.v));
  EXPECT_NEAR(spherical_derivative(pr.family, lam, z), want, 1e-12 * want);
}

TEST(Property, GenericPointHasDPreimages) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (const char* map : {"z^2+c", kLattes, "z^3+c*z+1", "(z^2+c)/(z^2-1)"}) {
    const auto pr = build_family(map, "2");
    for (int trial = 0; trial < 20; ++trial) {
      const cd lam(u(rng) * 0.3 + 0.3, u(rng) * 0.3 + 0.2);
      if (pr.family.degenerate_at(lam)) continue;
      const FiberMap f = pr.family.fiber(lam);
      const SpherePoint y = affine(cd(u(rng), u(rng)));
      const auto pre = preimages(f, y);
      ASSERT_EQ(static_cast<int>(pre.size()), f.d);
      for (const auto& x : pre) EXPECT_LT(sphere_gap(apply_fiber(f, x), y), 1e-9) << map;
    }
  }
}

TEST(Preimages, InfinityForPolynomials) {
  const auto pr = build_family("z^2+c", "c");
  const auto pre = preimages(pr.family.fiber(0.25), SpherePoint::infinity());
  ASSERT_EQ(pre.size(), 2u);
  EXPECT_TRUE(pre[0].is_infinity());
  EXPECT_TRUE(pre[1].is_infinity());
}

TEST(LiftBounds, BracketTheNormRatio) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const char* map : {"z^2+c", kLattes, "(z^2+c)/(z^2-1)"}) {
    const auto pr = build_family(map, "2");
    const FiberMap f = pr.family.fiber(cd(0.3, 0.1));
    const LiftBounds b = lift_bounds(f);
    EXPECT_LE(b.log_lower, b.log_upper);
    for (int k = 0; k < 2000; ++k) {
      cd Z(u(rng), u(rng)), W(u(rng), u(rng));
      const double m = std::max(std::abs(Z), std::abs(W));
      Z /= m;
      W /= m;
      auto [P, Q] = f.lift(Z, W);
      const double r = std::log(std::max(std::abs(P), std::abs(Q)));
      EXPECT_LE(r, b.log_upper + 1e-12);
      EXPECT_GE(r, b.log_lower - 1e-12);
    }
  }
}
