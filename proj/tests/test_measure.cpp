#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "bifscope/measure.hpp"

using namespace bifscope;

namespace {

const Window kFull{-2.5, 1.5, -2.0, 2.0};

// Largest |F_emp - F_uniform| of angles in [0, 2pi).
double angular_ks(const MeasureSample& s) {
  std::vector<double> a;
  a.reserve(s.points.size());
  for (const auto& p : s.points) {
    double t = std::arg(p.affine());
    if (t < 0) t += 2.0 * std::numbers::pi;
    a.push_back(t / (2.0 * std::numbers::pi));
  }
  std::sort(a.begin(), a.end());
  double d = 0.0;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max({d, std::abs((i + 1) / n - a[i]), std::abs(a[i] - i / n)});
  return d;
}

}  // namespace

TEST(BifMeasure, StableBoxInsideCardioid) {
  const auto pr = build_family("z^2+c", "c");
  const GridMeasure m = bif_measure(pr.family, pr.marked, Window::centered(-0.1, 0.2, 0.2), 64);
  for (double v : m.cell_mass.data()) EXPECT_LT(v, 1e-10);
  EXPECT_LT(m.total_mass, 1e-10);
}

TEST(BifMeasure, QuadraticNormalization) {
  const auto pr = build_family("z^2+c", "c");
  const GridMeasure m = bif_measure(pr.family, pr.marked, kFull, 512);
  EXPECT_NEAR(m.total_mass, 1.0, 0.05);
  EXPECT_NEAR(m.total_mass, boundary_flux_mass(pr.family, pr.marked, kFull, 4096), 0.02);
  EXPECT_LT(m.negative_clip, 0.01 * m.total_mass);
  EXPECT_EQ(m.nonfinite_cells, 0);
  for (double v : m.cell_mass.data()) EXPECT_GE(v, 0.0);
}

TEST(BifMeasure, BoundaryRingMasked) {
  const auto pr = build_family("z^2+c", "c");
  const GridMeasure m = bif_measure(pr.family, pr.marked, kFull, 64);
  const auto& g = m.cell_mass;
  for (int i = 0; i < g.nx(); ++i) {
    EXPECT_EQ(g(i, 0), 0.0);
    EXPECT_EQ(g(i, g.ny() - 1), 0.0);
    EXPECT_EQ(g(0, i), 0.0);
    EXPECT_EQ(g(g.nx() - 1, i), 0.0);
  }
}

TEST(BifMeasure, QuadraticSupportIsThin) {
  const auto pr = build_family("z^2+c", "c");
  const GridMeasure m = bif_measure(pr.family, pr.marked, kFull, 512);
  EXPECT_LT(support_fraction(m), 0.2);
}

TEST(BifMeasure, LocalBalancingConservesMass) {
  const auto pr = build_family("z^2+c", "c");
  const Grid<double> pot = bif_potential_grid(pr.family, pr.marked, kFull, 256, 256);
  LaplacianOptions clip;
  clip.negative = NegativeMass::Clip;
  const GridMeasure a = measure_from_potential(pot, clip);
  const GridMeasure b = measure_from_potential(pot);
  EXPECT_EQ(a.negative_raw, b.negative_raw);
  EXPECT_EQ(a.negative_clip, a.negative_raw);
  EXPECT_LT(b.negative_clip, a.negative_clip);
  // Raw stencil sum equals balanced total plus what balancing could not place.
  EXPECT_NEAR(b.total_mass - b.negative_clip, a.total_mass - a.negative_raw, 1e-12);
}

TEST(Property, ResolutionRefinement) {
  const auto pr = build_family("z^2+c", "c");
  const double a = bif_measure(pr.family, pr.marked, kFull, 256).total_mass;
  const double b = bif_measure(pr.family, pr.marked, kFull, 512).total_mass;
  EXPECT_NEAR(a / b, 1.0, 0.02);
}

TEST(Property, ThreadCountDoesNotChangeBits) {
  const auto pr = build_family("z^2+c", "c");
  MeasureOptions one, four;
  one.threads = one.laplacian.threads = 1;
  four.threads = four.laplacian.threads = 4;
  const GridMeasure a = bif_measure(pr.family, pr.marked, kFull, 128, one);
  const GridMeasure b = bif_measure(pr.family, pr.marked, kFull, 128, four);
  EXPECT_EQ(a.cell_mass.data(), b.cell_mass.data());
  EXPECT_EQ(a.total_mass, b.total_mass);
}

TEST(MesSample, SquaringOnUnitCircle) {
  const auto pr = build_family("z^2", "c");
  const MeasureSample s = mes_sample(pr.family, 0.0, 100000);
  for (const auto& p : s.points) ASSERT_LT(std::abs(std::abs(p.affine()) - 1.0), 1e-9);
  EXPECT_LT(angular_ks(s), 0.01);
}

TEST(MesSample, ChebyshevArcsine) {
  const auto pr = build_family("z^2-2", "c");
  const MeasureSample s = mes_sample(pr.family, 0.0, 100000);
  double mean = 0.0;
  for (const auto& p : s.points) {
    const cd z = p.affine();
    ASSERT_LT(std::abs(z.imag()), 1e-6);
    ASSERT_LE(std::abs(z.real()), 2.0 + 1e-9);
    mean += z.real();
  }
  EXPECT_NEAR(mean / s.points.size(), 0.0, 0.01);
}

TEST(MesSample, ReproducibleAndThreadIndependent) {
  const auto pr = build_family("(z^2-c)^2/(4*z*(z-1)*(z-c))", "c");
  SamplerOptions o;
  o.seed = 42;
  o.threads = 1;
  const MeasureSample a = mes_sample(pr.family, cd(0.3, 0.1), 5000, o);
  o.threads = 3;
  const MeasureSample b = mes_sample(pr.family, cd(0.3, 0.1), 5000, o);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].Z, b.points[i].Z);
    EXPECT_EQ(a.points[i].W, b.points[i].W);
  }
  o.seed = 43;
  const MeasureSample c = mes_sample(pr.family, cd(0.3, 0.1), 5000, o);
  EXPECT_NE(a.points[0].affine(), c.points[0].affine());
  EXPECT_EQ(a.seed, 42u);
  EXPECT_EQ(a.burn_in, 30);
}

TEST(MesSample, RejectsEmptyAndDegenerate) {
  const auto pr = build_family("(z^2-c)^2/(4*z*(z-1)*(z-c))", "c");
  EXPECT_THROW(mes_sample(pr.family, cd(0.3, 0.1), 0), Error);
  try {
    mes_sample(pr.family, 0.0, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateParameter);
  }
}

TEST(BoxMasses, FullWindowAndAdditivity) {
  const auto pr = build_family("z^2+c", "c");
  const GridMeasure m = bif_measure(pr.family, pr.marked, kFull, 128);
  // Half-open boxes: widen the top/right edge so the last nodes are inside.
  const Window all{kFull.re_min, kFull.re_max + 1.0, kFull.im_min, kFull.im_max + 1.0};
  EXPECT_NEAR(box_masses(m, {all})[0], m.total_mass, 1e-12);
  const auto tiles = box_tiling(Window{-2.0, 1.0, -1.5, 1.5}, 3, 4);
  const auto parts = box_masses(m, tiles);
  double sum = 0.0;
  for (double v : parts) {
    EXPECT_GE(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, box_masses(m, {Window{-2.0, 1.0, -1.5, 1.5}})[0], 1e-12);
}

TEST(BoxMasses, HalfCircles) {
  const auto pr = build_family("z^2", "c");
  const MeasureSample s = mes_sample(pr.family, 0.0, 100000);
  const auto b = box_masses(s, {Window{-2, 2, 0, 2}, Window{-2, 2, -2, 0}});
  EXPECT_NEAR(b[0], 0.5, 0.01);
  EXPECT_NEAR(b[1], 0.5, 0.01);
}

TEST(CompareMeasures, Examples) {
  const std::vector<double> a{1, 2, 3, 4, 0, 0};
  auto c = compare_measures(a, a);
  EXPECT_NEAR(c.correlation, 1.0, 1e-15);
  EXPECT_NEAR(c.total_variation, 0.0, 1e-15);
  EXPECT_NEAR(compare_measures({1, 1, 0, 0}, {0, 0, 2, 5}).total_variation, 1.0, 1e-15);
  // Normalization is internal.
  EXPECT_NEAR(compare_measures(a, {2, 4, 6, 8, 0, 0}).total_variation, 0.0, 1e-15);
}

TEST(CompareMeasures, NoisyCopy) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> a(400), b(400);
  for (auto& v : a) v = std::pow(u(rng), 4);
  double total = 0.0;
  for (double v : a) total += v;
  for (std::size_t k = 0; k < a.size(); ++k) b[k] = a[k] + 0.01 * total / a.size() * u(rng);
  EXPECT_GT(compare_measures(a, b).correlation, 0.99);
}

TEST(CompareMeasures, Errors) {
  try {
    compare_measures({0, 0}, {1, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroMassVector);
  }
  EXPECT_THROW(compare_measures({1, 0}, {1, 0, 0}), Error);
  EXPECT_THROW(compare_measures({1, -1}, {1, 0}), Error);
}

TEST(Property, PushforwardInvariance) {
  SamplerOptions o;
  o.chain_length = 1;  // independent samples, so the paired error below is honest
  for (const char* map : {"z^2", "z^2-2"}) {
    const auto pr = build_family(map, "c");
    const FiberMap f = pr.family.fiber(0.0);
    const MeasureSample s = mes_sample(f, 0.0, 100000, o);
    const MeasureSample t = push_forward(f, s);
    const auto boxes = box_tiling(Window{-2.0, 2.0, -2.0, 2.0}, 4, 4);
    for (const auto& box : boxes) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < s.points.size(); ++i) {
        const double d = (in_box(box, t.points[i].affine()) ? 1.0 : 0.0) - (in_box(box, s.points[i].affine()) ? 1.0 : 0.0);
        sum += d;
        sq += d * d;
      }
      const double n = static_cast<double>(s.points.size());
      const double mean = sum / n;
      const double sigma = std::sqrt(std::max(sq / n - mean * mean, 1.0 / n) / n);
      EXPECT_LE(std::abs(mean), 3.0 * sigma) << map;
    }
  }
}

TEST(MeasureIo, BinaryAndCsv) {
  const auto pr = build_family("z^2+c", "c");
  const GridMeasure m = bif_measure(pr.family, pr.marked, kFull, 16);
  const std::string bytes = io::encode_grid(m.cell_mass, "BIFM");
  EXPECT_EQ(bytes.substr(0, 4), "BIFM");
  const Grid<double> back = io::decode_grid(bytes, "BIFM");
  EXPECT_EQ(back.data(), m.cell_mass.data());
  EXPECT_THROW(io::decode_grid(bytes, "BIFG"), Error);

  MeasureSample s;
  s.points = {SpherePoint::from_affine(cd(0.5, -1.0)), SpherePoint::infinity()};
  EXPECT_EQ(io::samples_csv(s), "re,im\n0.5,-1\ninf,0\n");
}
