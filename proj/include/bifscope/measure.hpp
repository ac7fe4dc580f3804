#pragma once

// The bifurcation measure mu_{f,a} = dd^c g on parameter grids, and the
// maximal-entropy measure mu_{f_lambda} sampled by random inverse iteration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "bifscope/error.hpp"
#include "bifscope/family.hpp"
#include "bifscope/green.hpp"
#include "bifscope/grid.hpp"
#include "bifscope/parallel.hpp"
#include "bifscope/poly.hpp"
#include "bifscope/rng.hpp"

namespace bifscope {

/// Cell masses at the nodes of a grid. Each interior node owns the dual cell
/// around it; the boundary ring is masked (mass 0).
struct GridMeasure {
  Grid<double> cell_mass;
  double total_mass = 0.0;
  double negative_raw = 0.0;   // magnitude of all negative stencil values before any repair
  double negative_clip = 0.0;  // negative mass removed by clipping (not absorbed locally)
  int nonfinite_cells = 0;     // stencils touching a non-finite potential (mass set to 0)

  const Window& window() const { return cell_mass.window(); }
  int resolution() const { return cell_mass.nx(); }
  std::size_t interior_cells() const { return std::size_t(cell_mass.nx() - 2) * (cell_mass.ny() - 2); }
  double mean_cell_mass() const { return total_mass / static_cast<double>(interior_cells()); }

  /// Number of interior cells with mass above `floor`.
  std::size_t support_cells(double floor) const {
    std::size_t n = 0;
    for (int j = 1; j < cell_mass.ny() - 1; ++j)
      for (int i = 1; i < cell_mass.nx() - 1; ++i)
        if (cell_mass(i, j) > floor) ++n;
    return n;
  }
  double support_fraction(double floor) const {
    return static_cast<double>(support_cells(floor)) / static_cast<double>(interior_cells());
  }
};

/// Threshold above which a cell counts as support: max(absolute, relative * mean cell mass).
/// Truncation noise of the stencil outside the support is far above any fixed
/// absolute floor at desk resolutions, so the relative part does the real work.
struct SupportFloor {
  double absolute = 1e-12;
  double relative = 1e-2;
  double value(const GridMeasure& m) const { return std::max(absolute, relative * m.mean_cell_mass()); }
};

inline double support_fraction(const GridMeasure& m, const SupportFloor& floor = {}) {
  return m.support_fraction(floor.value(m));
}

enum class NegativeMass {
  Clip,          // negative cells set to 0
  LocalBalance,  // absorbed by positive cells within `balance_radius`, remainder clipped
};

namespace detail {

// Gauss-Seidel sweep in row-major order: each negative cell draws its deficit
// proportionally from positive cells in growing square rings. Returns the
// unabsorbed (clipped) magnitude.
inline double balance_negative_mass(Grid<double>& m, int radius) {
  const int nx = m.nx(), ny = m.ny();
  double clipped = 0.0;
  for (int j = 1; j < ny - 1; ++j) {
    for (int i = 1; i < nx - 1; ++i) {
      if (m(i, j) >= 0.0) continue;
      double need = -m(i, j);
      m(i, j) = 0.0;
      for (int r = 1; r <= radius && need > 0.0; ++r) {
        const int a0 = std::max(1, i - r), a1 = std::min(nx - 2, i + r);
        const int b0 = std::max(1, j - r), b1 = std::min(ny - 2, j + r);
        double pool = 0.0;
        for (int b = b0; b <= b1; ++b)
          for (int a = a0; a <= a1; ++a) pool += std::max(0.0, m(a, b));
        if (!(pool > 0.0)) continue;
        const double t = std::min(1.0, need / pool);
        for (int b = b0; b <= b1; ++b)
          for (int a = a0; a <= a1; ++a)
            if (m(a, b) > 0.0) m(a, b) *= 1.0 - t;
        need -= t * pool;
      }
      clipped += std::max(0.0, need);
    }
  }
  return clipped;
}

}  // namespace detail

struct LaplacianOptions {
  NegativeMass negative = NegativeMass::LocalBalance;
  int balance_radius = 2;
  int threads = 0;
};

/// Discrete dd^c of a potential grid with the negative part repaired.
inline GridMeasure measure_from_potential(const Grid<double>& pot, const LaplacianOptions& opt = {}) {
  GridMeasure m;
  m.cell_mass = Grid<double>(pot.window(), pot.nx(), pot.ny(), 0.0);
  const int nx = pot.nx(), ny = pot.ny();
  std::vector<double> neg(static_cast<std::size_t>(ny), 0.0);
  std::vector<int> bad(static_cast<std::size_t>(ny), 0);
  parallel_for(
      static_cast<std::size_t>(ny - 2),
      [&](std::size_t r) {
        const int j = static_cast<int>(r) + 1;
        for (int i = 1; i < nx - 1; ++i) {
          try {
            const double mass = laplacian_cell_mass(pot, i, j);
            if (mass < 0.0) neg[j] -= mass;
            m.cell_mass(i, j) = mass;
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::NonFinitePotential) throw;
            ++bad[j];
          }
        }
      },
      4, opt.threads);
  for (int j = 0; j < ny; ++j) {
    m.negative_raw += neg[j];
    m.nonfinite_cells += bad[j];
  }
  if (opt.negative == NegativeMass::LocalBalance) {
    m.negative_clip = detail::balance_negative_mass(m.cell_mass, opt.balance_radius);
  } else {
    for (double& x : m.cell_mass.data()) x = std::max(0.0, x);
    m.negative_clip = m.negative_raw;
  }
  const auto& data = m.cell_mass.data();
  m.total_mass = parallel_sum(data.size(), [&](std::size_t k) { return data[k]; }, 4096, opt.threads);
  return m;
}

struct MeasureOptions {
  GreenOptions green{};
  LaplacianOptions laplacian{};
  int threads = 0;
};

/// mu_{f,a} on `window` with res x res nodes.
inline GridMeasure bif_measure(const RationalFamily& fam, const MarkedPoint& marked, const Window& window, int res,
                               const MeasureOptions& opt = {}) {
  const Grid<double> pot = bif_potential_grid(fam, marked, window, res, res, opt.green, opt.threads);
  LaplacianOptions lap = opt.laplacian;
  if (lap.threads == 0) lap.threads = opt.threads;
  return measure_from_potential(pot, lap);
}

/// (1/2pi) * flux of grad g through the boundary of `window`, by the trapezoid
/// rule on central normal differences at spacing h. Cross-check for total mass.
inline double boundary_flux_mass(const RationalFamily& fam, const MarkedPoint& marked, const Window& window, int n,
                                 double h = 1e-5, const GreenOptions& gopt = {}) {
  auto g = [&](cd lam) { return bif_potential(fam, marked, lam, gopt); };
  auto dn = [&](cd p, cd normal) { return (g(p + h * normal) - g(p - h * normal)) / (2.0 * h); };
  auto edge = [&](cd a, cd b, cd normal) {
    const double len = std::abs(b - a);
    double s = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double w = (k == 0 || k == n) ? 0.5 : 1.0;
      s += w * dn(a + (b - a) * (static_cast<double>(k) / n), normal);
    }
    return s * len / n;
  };
  const cd ll(window.re_min, window.im_min), lr(window.re_max, window.im_min);
  const cd ul(window.re_min, window.im_max), ur(window.re_max, window.im_max);
  const double flux = edge(ll, lr, cd(0, -1)) + edge(lr, ur, cd(1, 0)) + edge(ur, ul, cd(0, 1)) + edge(ul, ll, cd(-1, 0));
  return flux / (2.0 * std::numbers::pi);
}

// ---------------------------------------------------------------------------
// Maximal-entropy measure by inverse iteration

struct SamplerOptions {
  int burn_in = 30;
  int chain_length = 64;  // samples recorded per independent chain
  std::uint64_t seed = 1;
  int threads = 0;
};

/// Equal-weight points of mu_{f_lambda}. Sample i is point i % chain_length of
/// chain i / chain_length; every chain is an independent random inverse orbit
/// whose randomness is keyed by (seed, chain).
struct MeasureSample {
  cd lambda{};
  std::vector<SpherePoint> points;
  std::uint64_t seed = 1;
  int burn_in = 30;
  int chain_length = 64;
  int solver_retries = 0;  // NoConvergence events resolved by perturbing the point
};

namespace detail {

/// One of the d preimages of y (with multiplicity), chosen by `index`. Roots
/// beyond the affine degree are the point at infinity.
inline SpherePoint preimage_branch(const FiberMap& f, const SpherePoint& y, std::uint64_t index, int& retries) {
  const int d = f.d;
  std::vector<cd> c(static_cast<std::size_t>(d) + 1);
  for (int k = 0; k <= d; ++k) c[k] = y.W * f.p[k] - y.Z * f.q[k];
  const PolyC poly(std::move(c));
  if (poly.is_zero()) throw Error(ErrorKind::DegenerateParameter, "preimage equation vanishes identically");
  const int m = poly.degree();
  if (static_cast<int>(index) >= m) return SpherePoint::infinity();
  if (m == 1) return SpherePoint::from_affine(-poly[0] / poly[1]);
  if (m == 2) {
    // Cancellation-free quadratic formula.
    const cd a = poly[2], b = poly[1], cc = poly[0];
    const cd disc = std::sqrt(b * b - 4.0 * a * cc);
    const cd q = -0.5 * (std::real(std::conj(b) * disc) >= 0.0 ? b + disc : b - disc);
    if (q == cd(0.0)) return SpherePoint::from_affine(0.0);
    const cd r = index == 0 ? q / a : cc / q;
    return SpherePoint::from_affine(r);
  }
  AberthOptions opt;
  for (int attempt = 0;; ++attempt) {
    try {
      const auto roots = roots_aberth(poly, opt);
      return SpherePoint::from_affine(polish_root(poly, roots[index]));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoConvergence || attempt >= 8) throw;
      ++retries;
      opt.start_angle += 0.7;
    }
  }
}

}  // namespace detail

inline MeasureSample mes_sample(const FiberMap& f, cd lambda, std::size_t count, const SamplerOptions& opt = {}) {
  if (count == 0) throw Error(ErrorKind::InvalidArgument, "sample count must be >= 1");
  if (opt.chain_length < 1 || opt.burn_in < 0) throw Error(ErrorKind::InvalidArgument, "bad sampler options");
  MeasureSample s;
  s.lambda = lambda;
  s.seed = opt.seed;
  s.burn_in = opt.burn_in;
  s.chain_length = opt.chain_length;
  s.points.resize(count);
  const std::size_t L = static_cast<std::size_t>(opt.chain_length);
  const std::size_t chains = (count + L - 1) / L;
  std::vector<int> retries(chains, 0);
  parallel_for(
      chains,
      [&](std::size_t c) {
        CounterRng rng(opt.seed, c);
        // Start on the unit circle: away from 0 and infinity, which are exceptional for z^d.
        SpherePoint y = SpherePoint::from_affine(std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform()));
        for (int k = 0; k < opt.burn_in; ++k) y = detail::preimage_branch(f, y, rng.below(f.d), retries[c]);
        const std::size_t end = std::min(count, (c + 1) * L);
        for (std::size_t i = c * L; i < end; ++i) {
          y = detail::preimage_branch(f, y, rng.below(f.d), retries[c]);
          s.points[i] = y;
        }
      },
      8, opt.threads);
  for (int r : retries) s.solver_retries += r;
  return s;
}

inline MeasureSample mes_sample(const RationalFamily& fam, cd lambda, std::size_t count, const SamplerOptions& opt = {}) {
  return mes_sample(fam.fiber(lambda), lambda, count, opt);
}

/// Pushforward of every sample point by f_lambda.
inline MeasureSample push_forward(const FiberMap& f, const MeasureSample& s) {
  MeasureSample out = s;
  for (auto& p : out.points) p = apply_fiber(f, p);
  return out;
}

// ---------------------------------------------------------------------------
// Box statistics

/// Half-open box membership [re_min, re_max) x [im_min, im_max).
inline bool in_box(const Window& b, cd z) {
  return z.real() >= b.re_min && z.real() < b.re_max && z.imag() >= b.im_min && z.imag() < b.im_max;
}

inline std::vector<double> box_masses(const GridMeasure& m, const std::vector<Window>& boxes) {
  std::vector<double> out(boxes.size(), 0.0);
  const auto& g = m.cell_mass;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    double s = 0.0, comp = 0.0;
    for (int j = 1; j < g.ny() - 1; ++j) {
      for (int i = 1; i < g.nx() - 1; ++i) {
        if (!in_box(boxes[b], g.node(i, j))) continue;
        const double x = g(i, j), u = s + x;
        comp += std::abs(s) >= std::abs(x) ? (s - u) + x : (x - u) + s;
        s = u;
      }
    }
    out[b] = s + comp;
  }
  return out;
}

/// Empirical frequencies of the sample points (affine coordinate) in each box.
inline std::vector<double> box_masses(const MeasureSample& s, const std::vector<Window>& boxes) {
  std::vector<double> out(boxes.size(), 0.0);
  for (const auto& p : s.points) {
    if (p.is_infinity()) continue;
    const cd z = p.affine();
    for (std::size_t b = 0; b < boxes.size(); ++b)
      if (in_box(boxes[b], z)) out[b] += 1.0;
  }
  for (auto& x : out) x /= static_cast<double>(s.points.size());
  return out;
}

/// nx by ny tiling of a window into boxes, row-major with Im increasing.
inline std::vector<Window> box_tiling(const Window& w, int nx, int ny) {
  std::vector<Window> out;
  out.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      out.push_back({w.re_min + w.width() * i / nx, w.re_min + w.width() * (i + 1) / nx, w.im_min + w.height() * j / ny,
                     w.im_min + w.height() * (j + 1) / ny});
  return out;
}

struct MeasureComparison {
  double correlation;
  double total_variation;
};

/// Pearson correlation and total-variation distance of two mass vectors,
/// each normalized to unit sum.
inline MeasureComparison compare_measures(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw Error(ErrorKind::InvalidArgument, "mass vectors must have equal nonzero length");
  double sa = 0.0, sb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] < 0.0 || b[k] < 0.0 || !std::isfinite(a[k]) || !std::isfinite(b[k])) {
      throw Error(ErrorKind::InvalidArgument, "mass vectors must be finite and nonnegative");
    }
    sa += a[k];
    sb += b[k];
  }
  if (!(sa > 0.0) || !(sb > 0.0)) throw Error(ErrorKind::ZeroMassVector, "mass vector with zero total");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0, tv = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k] / sa;
    mb += b[k] / sb;
    tv += std::abs(a[k] / sa - b[k] / sb);
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double x = a[k] / sa - ma, y = b[k] / sb - mb;
    cov += x * y;
    va += x * x;
    vb += y * y;
  }
  double corr;
  if (va == 0.0 || vb == 0.0) corr = (va == vb && tv == 0.0) ? 1.0 : 0.0;  // flat vectors
  else corr = cov / std::sqrt(va * vb);
  return {std::clamp(corr, -1.0, 1.0), std::min(1.0, 0.5 * tv)};
}

// ---------------------------------------------------------------------------
// Export

namespace io {

/// CSV with header re,im; the point at infinity is written as inf,0.
inline std::string samples_csv(const MeasureSample& s) {
  std::string out = "re,im\n";
  char buf[96];
  for (const auto& p : s.points) {
    if (p.is_infinity()) {
      out += "inf,0\n";
      continue;
    }
    const cd z = p.affine();
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", z.real(), z.imag());
    out += buf;
  }
  return out;
}

}  // namespace io

}  // namespace bifscope
