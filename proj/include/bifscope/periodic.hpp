#pragma once

// Repelling cycles and their continuation, prerepelling (Misiurewicz)
// parameters with transversality certificates, Koenigs linearization and the
// rescaled bifurcation measures around a Misiurewicz parameter.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bifscope/error.hpp"
#include "bifscope/family.hpp"
#include "bifscope/green.hpp"
#include "bifscope/grid.hpp"
#include "bifscope/measure.hpp"
#include "bifscope/parallel.hpp"
#include "bifscope/poly.hpp"

namespace bifscope {

// ---------------------------------------------------------------------------
// Charts

/// The map in the coordinate w = 1/z: swap Z and W on both sides.
template <class T>
LiftMap<T> swap_chart(const LiftMap<T>& F) {
  LiftMap<T> G;
  G.d = F.d;
  G.p.resize(F.p.size());
  G.q.resize(F.q.size());
  for (int k = 0; k <= F.d; ++k) {
    G.p[k] = F.q[F.d - k];
    G.q[k] = F.p[F.d - k];
  }
  return G;
}

template <class T>
LiftMap<T> in_chart(const LiftMap<T>& F, bool inverse) {
  return inverse ? swap_chart(F) : F;
}

inline cd chart_coord(const SpherePoint& p, bool inverse) { return inverse ? p.W / p.Z : p.Z / p.W; }
inline SpherePoint from_chart(cd t, bool inverse) {
  return inverse ? SpherePoint::from_pair(1.0, t) : SpherePoint::from_pair(t, 1.0);
}
/// Chart in which a point sits in the closed unit disk.
inline bool prefer_inverse(const SpherePoint& p) { return std::abs(p.Z) > std::abs(p.W); }
/// Affine unless the point is far out; keeps reported coordinates familiar.
inline constexpr double kChartSwitch = 1e3;
inline bool needs_inverse(const SpherePoint& p) { return std::abs(p.Z) > kChartSwitch * std::abs(p.W); }

/// f^n in a chart on a jet seeded with d/dz = 1 at t; with lambda-jet
/// coefficients the dl slot carries d/dlambda as well.
inline Jet chart_iterate(const LiftMap<Jet>& Fc, cd t, int n) { return iterate_affine(Fc, Jet(t, 0.0, 1.0), n); }

/// Exact period: the least q | p with f^q(x) = x within `tol` (chordal).
inline int minimal_period(const FiberMap& f, const SpherePoint& x, int p, double tol = 1e-9) {
  for (int q = 1; q < p; ++q) {
    if (p % q) continue;
    SpherePoint y = x;
    for (int k = 0; k < q; ++k) y = apply_fiber(f, y);
    if (chordal_distance(x, y) < tol) return q;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Periodic orbits

struct PeriodicOrbit {
  cd lambda{};
  SpherePoint point{};
  int period = 1;
  cd multiplier{};

  cd z() const { return point.affine(); }
  bool repelling() const { return std::abs(multiplier) > 1.0; }
};

/// Multiplier of the cycle through x (chart-independent), via a z-jet of f^p.
inline cd cycle_multiplier(const FiberMap& f, const SpherePoint& x, int p) {
  const bool inv = prefer_inverse(x);
  LiftMap<Jet> F;
  F.d = f.d;
  for (int k = 0; k <= f.d; ++k) {
    F.p.emplace_back(f.p[k]);
    F.q.emplace_back(f.q[k]);
  }
  return chart_iterate(in_chart(F, inv), chart_coord(x, inv), p).dz;
}

struct CycleSearch {
  std::vector<PeriodicOrbit> orbits;
  bool complete = true;  // every expected periodic point was located
  std::vector<std::string> notes;
};

namespace detail {

inline std::vector<cd> poly_mul(const std::vector<cd>& a, const std::vector<cd>& b) {
  std::vector<cd> r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

/// Dehomogenized coefficients of the lift of f^p, renormalized jointly.
inline std::pair<std::vector<cd>, std::vector<cd>> iterate_coefficients(const FiberMap& f, int p) {
  std::vector<cd> P(f.p.begin(), f.p.end()), Q(f.q.begin(), f.q.end());
  for (int it = 1; it < p; ++it) {
    // P' = sum_k p_k P^k Q^(d-k), Q' likewise.
    std::vector<std::vector<cd>> pp{{1.0}}, qp{{1.0}};
    for (int k = 1; k <= f.d; ++k) {
      pp.push_back(poly_mul(pp.back(), P));
      qp.push_back(poly_mul(qp.back(), Q));
    }
    const std::size_t len = static_cast<std::size_t>(f.d) * (P.size() - 1) + 1;
    std::vector<cd> nP(len, 0.0), nQ(len, 0.0);
    for (int k = 0; k <= f.d; ++k) {
      const auto term = poly_mul(pp[k], qp[f.d - k]);
      for (std::size_t j = 0; j < term.size(); ++j) {
        nP[j] += f.p[k] * term[j];
        nQ[j] += f.q[k] * term[j];
      }
    }
    double m = 0.0;
    for (const auto& c : nP) m = std::max(m, std::abs(c));
    for (const auto& c : nQ) m = std::max(m, std::abs(c));
    for (auto& c : nP) c /= m;
    for (auto& c : nQ) c /= m;
    P = std::move(nP);
    Q = std::move(nQ);
  }
  return {P, Q};
}

/// Newton on f^p(t) - t in the better chart, starting from x.
inline SpherePoint polish_periodic(const LiftMap<Jet>& F, const LiftMap<Jet>& Finv, SpherePoint x, int p) {
  for (int it = 0; it < 60; ++it) {
    const bool inv = prefer_inverse(x);
    const cd t = chart_coord(x, inv);
    Jet y;
    try {
      y = chart_iterate(inv ? Finv : F, t, p);
    } catch (const Error&) {
      return x;
    }
    const cd denom = y.dz - 1.0;
    if (denom == cd(0.0)) return x;
    const cd step = (y.v - t) / denom;
    if (!std::isfinite(step.real()) || !std::isfinite(step.imag())) return x;
    const cd tn = t - step;
    x = from_chart(tn, inv);
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(t))) break;
  }
  return x;
}

// Number of points of exact period p for a degree-d map: Moebius inversion of d^q + 1.
inline long long exact_period_count(int d, int p) {
  auto mobius = [](int n) {
    int m = 1;
    for (int q = 2; q * q <= n; ++q) {
      if (n % q) continue;
      n /= q;
      if (n % q == 0) return 0;
      m = -m;
    }
    return n > 1 ? -m : m;
  };
  long long total = 0;
  for (int q = 1; q <= p; ++q) {
    if (p % q) continue;
    long long v = 1;
    for (int k = 0; k < q; ++k) v *= d;
    total += mobius(p / q) * (v + 1);
  }
  return total;
}

inline bool sphere_less(const SpherePoint& a, const SpherePoint& b) {
  if (a.is_infinity() != b.is_infinity()) return b.is_infinity();
  if (a.is_infinity()) return false;
  const cd x = a.affine(), y = b.affine();
  return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
}

}  // namespace detail

/// All cycles of exact period p <= p_max of f_lambda, each reported once
/// (representative: lexicographically smallest point, infinity last).
inline CycleSearch find_cycles(const RationalFamily& fam, cd lambda, int p_max) {
  if (p_max < 1) throw Error(ErrorKind::InvalidArgument, "p_max must be >= 1");
  const FiberMap f = fam.fiber(lambda);
  const int d = f.d;
  {
    double deg = 1.0;
    for (int k = 0; k < p_max; ++k) deg *= d;
    if (deg > 1024.0) throw Error(ErrorKind::InvalidArgument, "d^p_max exceeds 1024; lower p_max");
  }
  LiftMap<Jet> F;
  F.d = d;
  for (int k = 0; k <= d; ++k) {
    F.p.emplace_back(f.p[k]);
    F.q.emplace_back(f.q[k]);
  }
  const LiftMap<Jet> Finv = swap_chart(F);
  CycleSearch out;
  for (int p = 1; p <= p_max; ++p) {
    auto [P, Q] = detail::iterate_coefficients(f, p);
    // z Q(z) - P(z): the fixed points of f^p in the affine chart.
    const std::size_t n = P.size() + 1;
    std::vector<cd> N(n, 0.0);
    for (std::size_t k = 0; k < Q.size(); ++k) N[k + 1] += Q[k];
    for (std::size_t k = 0; k < P.size(); ++k) N[k] -= P[k];
    const PolyC poly(N);
    std::vector<SpherePoint> cand;
    if (poly.degree() >= 1) {
      std::vector<cd> roots;
      AberthOptions opt;
      opt.tol = 1e-12;
      for (int attempt = 0;; ++attempt) {
        try {
          roots = roots_aberth(poly, opt);
          break;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::NoConvergence) throw;
          if (attempt >= 4) {
            out.complete = false;
            out.notes.push_back("root solver failed for period " + std::to_string(p));
            break;
          }
          opt.start_angle += 0.9;
        }
      }
      for (const cd& r : roots) cand.push_back(SpherePoint::from_affine(r));
    }
    if (poly.degree() < static_cast<int>(n) - 1) cand.push_back(SpherePoint::infinity());

    std::vector<SpherePoint> pts;
    for (auto x : cand) {
      x = detail::polish_periodic(F, Finv, x, p);
      SpherePoint y = x;
      for (int k = 0; k < p; ++k) y = apply_fiber(f, y);
      if (chordal_distance(x, y) > 1e-9) continue;  // polish failed
      if (minimal_period(f, x, p) != p) continue;
      bool dup = false;
      for (const auto& q : pts) dup = dup || chordal_distance(q, x) < 1e-8;
      if (!dup) pts.push_back(x);
    }
    // Group into orbits.
    std::vector<char> used(pts.size(), 0);
    long long located = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (used[i]) continue;
      std::vector<SpherePoint> orbit{pts[i]};
      for (int k = 1; k < p; ++k) orbit.push_back(apply_fiber(f, orbit.back()));
      for (const auto& m : orbit)
        for (std::size_t j = i; j < pts.size(); ++j)
          if (!used[j] && chordal_distance(m, pts[j]) < 1e-7) used[j] = 1;
      const SpherePoint rep = *std::min_element(orbit.begin(), orbit.end(), detail::sphere_less);
      out.orbits.push_back({lambda, rep, p, cycle_multiplier(f, rep, p)});
      located += p;
    }
    // Multiple (parabolic) cycles legitimately account for several roots.
    if (located < detail::exact_period_count(d, p)) {
      bool parabolic = false;
      for (const auto& o : out.orbits)
        if (o.period == p && std::abs(o.multiplier - 1.0) < 1e-6) parabolic = true;
      if (!parabolic) {
        out.complete = false;
        out.notes.push_back("period " + std::to_string(p) + ": located " + std::to_string(located) + " of " +
                            std::to_string(detail::exact_period_count(d, p)) + " points");
      }
    }
  }
  return out;
}

/// Jet of f_lambda^p at chart coordinate t: v = f^p(t), dl = d/dlambda, dz = d/dt.
inline Jet cycle_jet(const RationalFamily& fam, cd lambda, cd t, int p, bool inverse) {
  return chart_iterate(in_chart(fam.fiber_jet(lambda), inverse), t, p);
}

struct ContinuationOptions {
  int max_newton = 30;
  int max_subdivisions = 12;
};

/// Follows the cycle through orbit.point along the segment orbit.lambda -> target.
inline PeriodicOrbit continue_cycle(const RationalFamily& fam, const PeriodicOrbit& orbit, cd target, int steps,
                                    const ContinuationOptions& opt = {}) {
  if (steps < 1) throw Error(ErrorKind::InvalidArgument, "steps must be >= 1");
  const int p = orbit.period;
  const bool inv = prefer_inverse(orbit.point);
  const bool was_repelling = orbit.repelling();
  cd lam = orbit.lambda;
  cd t = chart_coord(orbit.point, inv);
  const cd full = target - orbit.lambda;

  // Newton corrector at fixed lambda; returns false on divergence.
  auto correct = [&](cd l, cd& tt, Jet& y) {
    for (int it = 0; it < opt.max_newton; ++it) {
      y = cycle_jet(fam, l, tt, p, inv);
      const cd denom = y.dz - 1.0;
      if (std::abs(denom) < 1e-8) throw Error(ErrorKind::MultiplierDegeneration, "|1 - (f^p)'| < 1e-8 along the path");
      const cd step = (y.v - tt) / denom;
      if (!std::isfinite(step.real()) || !std::isfinite(step.imag())) return false;
      tt -= step;
      if (std::abs(step) <= 1e-14 * (1.0 + std::abs(tt))) {
        y = cycle_jet(fam, l, tt, p, inv);
        return true;
      }
    }
    return false;
  };

  Jet y = cycle_jet(fam, lam, t, p, inv);
  double s = 0.0, ds = 1.0 / steps;
  int halvings = 0;
  while (s < 1.0) {
    const double s1 = std::min(1.0, s + ds);
    const cd l1 = orbit.lambda + s1 * full;
    // Predictor z'(lambda) = d_lambda f^p / (1 - d_z f^p).
    const cd denom = 1.0 - y.dz;
    if (std::abs(denom) < 1e-8) throw Error(ErrorKind::MultiplierDegeneration, "|1 - (f^p)'| < 1e-8 along the path");
    cd t1 = t + (y.dl / denom) * (l1 - lam);
    Jet y1;
    bool ok = false;
    try {
      ok = correct(l1, t1, y1) && std::abs(t1 - t) < 0.5 * (1.0 + std::abs(t));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::MultiplierDegeneration) throw;
      ok = false;
    }
    if (!ok) {
      if (++halvings > opt.max_subdivisions) {
        throw Error(ErrorKind::PathNewtonFailure, "Newton corrector failed near lambda = (" + std::to_string(l1.real()) +
                                                      ", " + std::to_string(l1.imag()) + ")");
      }
      ds *= 0.5;
      continue;
    }
    if (was_repelling && std::abs(y1.dz) <= 1.0) {
      throw Error(ErrorKind::MultiplierDegeneration, "cycle stops repelling along the path (|rho| crossed 1)");
    }
    s = s1;
    lam = l1;
    t = t1;
    y = y1;
  }
  const SpherePoint pt = from_chart(t, inv);
  return {target, pt, p, y.dz};
}

// ---------------------------------------------------------------------------
// Misiurewicz parameters

struct MisiurewiczParam {
  cd lambda0{};
  int landing = 0;  // n: f^n(a(lambda0)) lies on the cycle
  PeriodicOrbit orbit{};
  cd transversality{};
  double residual = 0.0;
  bool inverse_chart = false;  // chart of z and of the transversality value
};

struct MisiurewiczOptions {
  double tol = 1e-13;  // Newton step tolerance (relative)
  int max_iter = 60;
  double residual_max = 1e-10;
  double tangent_threshold = 1e-8;
  Chart chart = Chart::Auto;
};

namespace detail {

struct MisSystem {
  Jet cyc;   // f^p at t
  Jet land;  // f^n(a(lambda)) in the chart
};

inline MisSystem mis_eval(const RationalFamily& fam, const MarkedPoint& marked, cd lam, cd t, int n, int p, bool inv) {
  MisSystem s;
  s.cyc = cycle_jet(fam, lam, t, p, inv);
  s.land = orbit_jet(fam, marked, lam, n, inv ? Chart::Inverse : Chart::Affine).jet;
  return s;
}

}  // namespace detail

/// Newton on {f^p(z) = z, f^n(a(lambda)) = z} from seed_lambda, then certification.
inline MisiurewiczParam solve_misiurewicz(const RationalFamily& fam, const MarkedPoint& marked, cd seed_lambda, int n, int p,
                                          const MisiurewiczOptions& opt = {}) {
  if (n < 0 || p < 1) throw Error(ErrorKind::InvalidArgument, "need n >= 0 and p >= 1");
  auto diverged = [&](const std::string& why) {
    return Error(ErrorKind::NewtonDivergence, why + " (seed (" + std::to_string(seed_lambda.real()) + ", " +
                                                  std::to_string(seed_lambda.imag()) + "), n=" + std::to_string(n) +
                                                  ", p=" + std::to_string(p) + ")");
  };
  cd lam = seed_lambda;
  bool inv;
  cd t;
  try {
    const ChartJet start = orbit_jet(fam, marked, lam, n, Chart::Auto);
    inv = opt.chart == Chart::Auto ? needs_inverse(start.point) : opt.chart == Chart::Inverse;
    t = chart_coord(start.point, inv);
  } catch (const Error&) {
    throw diverged("degenerate seed");
  }
  if (!std::isfinite(std::abs(t))) throw diverged("seed orbit at the chart antipode");

  bool converged = false;
  for (int it = 0; it < opt.max_iter && !converged; ++it) {
    detail::MisSystem s;
    try {
      s = detail::mis_eval(fam, marked, lam, t, n, p, inv);
    } catch (const Error&) {
      throw diverged("Newton left the regular parameter set");
    }
    const cd F1 = s.cyc.v - t, F2 = s.land.v - t;
    // [a b; c e] [dl; dt] = [F1; F2]
    const cd a = s.cyc.dl, b = s.cyc.dz - 1.0, c = s.land.dl, e = -1.0;
    const cd det = a * e - b * c;
    if (det == cd(0.0) || !std::isfinite(std::abs(det))) throw diverged("singular Jacobian");
    cd dl = (F1 * e - b * F2) / det;
    cd dt = (a * F2 - c * F1) / det;
    const double step = std::abs(dl) + std::abs(dt);
    if (!std::isfinite(step)) throw diverged("non-finite Newton step");
    if (step > 1.0) {  // damp long jumps
      dl /= step;
      dt /= step;
    }
    lam -= dl;
    t -= dt;
    if (std::abs(lam) > 1e6 || std::abs(t) > 1e8) throw diverged("iterates escaped");
    converged = step <= opt.tol * (1.0 + std::abs(lam) + std::abs(t));
  }
  if (!converged) throw diverged("no convergence within the iteration cap");

  const detail::MisSystem s = detail::mis_eval(fam, marked, lam, t, n, p, inv);
  const double residual = std::max(std::abs(s.cyc.v - t), std::abs(s.land.v - t));
  if (!(residual < opt.residual_max)) throw diverged("residual " + std::to_string(residual) + " above threshold");

  const FiberMap f = fam.fiber(lam);
  const SpherePoint pt = from_chart(t, inv);
  const int q = minimal_period(f, pt, p, 1e-8);
  const Jet cyc = q == p ? s.cyc : cycle_jet(fam, lam, t, q, inv);
  const cd rho = cyc.dz;
  MisiurewiczParam mp;
  mp.lambda0 = lam;
  mp.landing = n;
  mp.orbit = {lam, pt, q, rho};
  mp.residual = residual;
  mp.inverse_chart = inv;
  if (!(std::abs(rho) > 1.0)) {
    throw Error(ErrorKind::AttractingLanding, "marked orbit lands on a non-repelling cycle (|rho| = " +
                                                 std::to_string(std::abs(rho)) + ")");
  }
  const cd zprime = cyc.dl / (1.0 - cyc.dz);
  mp.transversality = s.land.dl - zprime;
  if (std::abs(mp.transversality) < opt.tangent_threshold) {
    throw Error(ErrorKind::TangentIntersection, "transversality " + std::to_string(std::abs(mp.transversality)) +
                                                    " below threshold");
  }
  return mp;
}

struct ScanReport {
  std::vector<MisiurewiczParam> params;
  std::size_t attempts = 0;
  std::size_t failures = 0;  // per-seed errors, dropped
};

/// Seeds on the centers of a grid x grid tiling of `window`; every (n, p) with
/// 0 <= n <= n_max, 1 <= p <= p_max is tried from every seed. Results inside the
/// window, deduplicated at 1e-8 in lambda, sorted by (Re, Im).
inline ScanReport misiurewicz_scan(const RationalFamily& fam, const MarkedPoint& marked, const Window& window, int n_max,
                                   int p_max, int grid, int threads = 0, const MisiurewiczOptions& opt = {}) {
  if (grid < 1) throw Error(ErrorKind::InvalidArgument, "grid must be >= 1");
  const std::size_t seeds = static_cast<std::size_t>(grid) * grid;
  std::vector<std::vector<MisiurewiczParam>> found(seeds);
  std::vector<std::size_t> fails(seeds, 0);
  parallel_for(
      seeds,
      [&](std::size_t s) {
        const int i = static_cast<int>(s % grid), j = static_cast<int>(s / grid);
        const cd seed(window.re_min + (i + 0.5) * window.width() / grid,
                      window.im_min + (j + 0.5) * window.height() / grid);
        for (int n = 0; n <= n_max; ++n) {
          for (int p = 1; p <= p_max; ++p) {
            try {
              MisiurewiczParam mp = solve_misiurewicz(fam, marked, seed, n, p, opt);
              if (window.contains(mp.lambda0)) found[s].push_back(mp);
            } catch (const Error&) {
              ++fails[s];
            }
          }
        }
      },
      1, threads);
  ScanReport rep;
  rep.attempts = seeds * static_cast<std::size_t>(n_max + 1) * p_max;
  for (std::size_t s = 0; s < seeds; ++s) {
    rep.failures += fails[s];
    for (const auto& mp : found[s]) {
      bool dup = false;
      for (const auto& q : rep.params) dup = dup || std::abs(q.lambda0 - mp.lambda0) <= 1e-8;
      if (!dup) rep.params.push_back(mp);
    }
  }
  std::sort(rep.params.begin(), rep.params.end(), [](const auto& a, const auto& b) {
    return a.lambda0.real() != b.lambda0.real() ? a.lambda0.real() < b.lambda0.real() : a.lambda0.imag() < b.lambda0.imag();
  });
  return rep;
}

// ---------------------------------------------------------------------------
// Koenigs linearization

/// phi(x) = f^{pN}(z + x rho^-N), evaluated in offsets from the cycle so the
/// relative precision of x rho^-N survives: u_{k+1} = N_k(u_k) / (Q_k(u_k) Q(z_k)),
/// where P_k(u) = P(z_k + u), Q_k(u) = Q(z_k + u) and N_k = P_k Q(z_k) - P(z_k) Q_k
/// has zero constant term by construction.
struct KoenigsChart {
  PeriodicOrbit orbit{};
  cd rho{};
  int depth = 0;         // N
  double r_lin = 0.0;    // certified on |x| <= r_lin / |rho|
  double x_limit = 0.0;  // truncation negligible for |x| <= x_limit
  double defect = 0.0;   // max functional-equation defect on the certification mesh
  double image_radius = 0.0;
  bool inverse_chart = false;

  std::vector<cd> zk;                    // cycle points in the chart
  std::vector<cd> qz;                    // Q(z_k)
  std::vector<std::vector<cd>> num, den; // N_k and Q_k coefficients in u
  cd rho_pow = 1.0;                      // rho^-N

  cd base() const { return zk.front(); }

  template <class T>
  T offset(T x) const {
    T u = x * T(rho_pow);
    const int p = static_cast<int>(zk.size());
    for (int step = 0; step < depth; ++step) {
      for (int k = 0; k < p; ++k) {
        const auto& nk = num[k];
        const auto& dk = den[k];
        T a = T(nk.back()), b = T(dk.back());
        for (int j = static_cast<int>(nk.size()) - 2; j >= 0; --j) {
          a = a * u + T(nk[j]);
          b = b * u + T(dk[j]);
        }
        u = a / (b * T(qz[k]));
      }
    }
    return u;
  }

  /// phi(x) in chart coordinates.
  cd operator()(cd x) const { return base() + offset(x); }
  /// phi(x) with phi'(x) in the dz slot.
  Jet eval_jet(cd x) const {
    Jet u = offset(Jet::z_var(x));
    u.v += base();
    return u;
  }
  /// phi(x) as a point of the sphere.
  SpherePoint point(cd x) const { return from_chart((*this)(x), inverse_chart); }
  cd to_chart(cd w) const { return inverse_chart ? 1.0 / w : w; }
};

struct KoenigsOptions {
  double tol = 1e-8;       // functional-equation defect
  double x_limit = 100.0;  // radius where the truncation is made negligible
  bool certify = true;
  int mesh_rings = 4;
  int mesh_angles = 32;
};

namespace detail {

/// Coefficients of c(z0 + u) in u, by repeated synthetic division.
inline std::vector<cd> taylor_shift(std::vector<cd> c, cd z0) {
  const int n = static_cast<int>(c.size());
  for (int i = 0; i < n; ++i)
    for (int k = n - 2; k >= i; --k) c[k] += z0 * c[k + 1];
  return c;
}

inline void build_offsets(KoenigsChart& ch, const FiberMap& fc) {
  const int p = ch.orbit.period;
  ch.zk.clear();
  ch.qz.clear();
  ch.num.clear();
  ch.den.clear();
  cd z = chart_coord(ch.orbit.point, ch.inverse_chart);
  for (int k = 0; k < p; ++k) {
    ch.zk.push_back(z);
    const auto ps = taylor_shift(fc.p, z), qs = taylor_shift(fc.q, z);
    const cd Pz = ps[0], Qz = qs[0];
    if (Qz == cd(0.0)) throw Error(ErrorKind::InvalidArgument, "cycle passes through the chart's pole");
    std::vector<cd> nk(ps.size());
    nk[0] = 0.0;
    for (std::size_t j = 1; j < ps.size(); ++j) nk[j] = ps[j] * Qz - Pz * qs[j];
    ch.num.push_back(std::move(nk));
    ch.den.push_back(qs);
    ch.qz.push_back(Qz);
    z = Pz / Qz;
  }
}

}  // namespace detail

/// Linearizer of f^p at a repelling periodic point: f^p(phi(x)) = phi(rho x),
/// phi(0) = z, phi'(0) = 1 (chart coordinates).
inline KoenigsChart koenigs_build(const RationalFamily& fam, const PeriodicOrbit& orbit, const KoenigsOptions& opt = {}) {
  const cd rho = orbit.multiplier;
  if (!(std::abs(rho) > 1.0)) {
    throw Error(ErrorKind::NotRepelling, "Koenigs chart needs |rho| > 1 (got " + std::to_string(std::abs(rho)) + ")");
  }
  KoenigsChart ch;
  ch.orbit = orbit;
  ch.rho = rho;
  // Chart where the whole cycle is finite and moderate.
  const FiberMap f = fam.fiber(orbit.lambda);
  {
    SpherePoint y = orbit.point;
    double worst_aff = 0.0, worst_inv = 0.0;
    for (int k = 0; k < orbit.period; ++k) {
      worst_aff = std::max(worst_aff, std::abs(y.Z) / std::max(std::abs(y.W), 1e-300));
      worst_inv = std::max(worst_inv, std::abs(y.W) / std::max(std::abs(y.Z), 1e-300));
      y = apply_fiber(f, y);
    }
    ch.inverse_chart = worst_aff > kChartSwitch && worst_inv < worst_aff;
  }
  const FiberMap fc = in_chart(f, ch.inverse_chart);
  detail::build_offsets(ch, fc);
  ch.x_limit = opt.x_limit;
  // |x| |rho|^-N <= 1e-18 on |x| <= x_limit: the quadratic remainder is then below roundoff.
  const double lr = std::log(std::abs(rho));
  ch.depth = static_cast<int>(std::ceil(std::log(std::max(1.0, opt.x_limit) * 1e18) / lr));
  if (ch.depth > 20000) throw Error(ErrorKind::NotRepelling, "multiplier too close to the unit circle for forward Koenigs");
  ch.rho_pow = std::pow(rho, -ch.depth);
  if (!opt.certify) {
    ch.r_lin = 1.0;
    return ch;
  }
  // Certify: halve r_lin until the defect on the mesh of |x| <= r_lin/|rho| is below tol.
  auto defect_on = [&](double r) {
    double worst = 0.0;
    const double R = r / std::abs(rho);
    for (int ring = 0; ring <= opt.mesh_rings; ++ring) {
      const double rad = R * ring / opt.mesh_rings;
      const int na = ring == 0 ? 1 : opt.mesh_angles;
      for (int a = 0; a < na; ++a) {
        const cd x = std::polar(rad, 2.0 * std::numbers::pi * a / na);
        const cd lhs = iterate_affine(fc, ch(x), orbit.period);
        const cd rhs = ch(rho * x);
        const double dft = std::abs(lhs - rhs);
        if (!std::isfinite(dft)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, dft);
      }
    }
    return worst;
  };
  double r = 1.0;
  for (int h = 0;; ++h) {
    const double dft = defect_on(r);
    if (dft < opt.tol) {
      ch.defect = dft;
      break;
    }
    if (h >= 40) throw Error(ErrorKind::OutsideLinearizationDomain, "could not certify any linearization disk");
    r *= 0.5;
  }
  ch.r_lin = r;
  double img = std::numeric_limits<double>::infinity();
  for (int a = 0; a < opt.mesh_angles; ++a) {
    const cd x = std::polar(r / std::abs(rho), 2.0 * std::numbers::pi * a / opt.mesh_angles);
    img = std::min(img, std::abs(ch(x) - ch.base()));
  }
  ch.image_radius = img;
  return ch;
}

/// Maximal functional-equation defect |f^p(phi(x)) - phi(rho x)| on a polar mesh of |x| <= radius.
inline double koenigs_defect(const RationalFamily& fam, const KoenigsChart& ch, double radius, int rings = 8,
                             int angles = 64) {
  const FiberMap fc = in_chart(fam.fiber(ch.orbit.lambda), ch.inverse_chart);
  double worst = 0.0;
  for (int ring = 0; ring <= rings; ++ring) {
    const int na = ring == 0 ? 1 : angles;
    for (int a = 0; a < na; ++a) {
      const cd x = std::polar(radius * ring / rings, 2.0 * std::numbers::pi * a / na);
      worst = std::max(worst, std::abs(iterate_affine(fc, ch(x), ch.orbit.period) - ch(ch.rho * x)));
    }
  }
  return worst;
}

struct InvertOptions {
  double tol = 1e-10;
  int max_newton = 40;
  int max_halvings = 30;
  std::optional<cd> start{};  // initial guess; default: continuation from x = 0
};

/// x with phi(x) = w (w in affine coordinates), continued from x = 0 along the
/// segment from the periodic point to w.
inline cd koenigs_invert(const KoenigsChart& ch, cd w, const InvertOptions& opt = {}) {
  const cd target = ch.to_chart(w);
  if (!std::isfinite(std::abs(target))) throw Error(ErrorKind::OutsideLinearizationDomain, "target at the chart antipode");
  const cd z0 = ch.base();
  auto newton = [&](cd goal, cd& x) {
    for (int it = 0; it < opt.max_newton; ++it) {
      const Jet j = ch.eval_jet(x);
      if (j.dz == cd(0.0)) return false;
      const cd step = (j.v - goal) / j.dz;
      if (!std::isfinite(step.real()) || !std::isfinite(step.imag())) return false;
      x -= step;
      if (std::abs(x) > ch.x_limit) return false;
      if (std::abs(step) <= 1e-15 * (1.0 + std::abs(x))) return true;
    }
    return std::abs(ch(x) - goal) <= 0.1 * opt.tol * std::max(1.0, std::abs(goal));
  };
  cd x = 0.0;
  bool done = false;
  if (opt.start) {
    x = *opt.start;
    done = newton(target, x);
    if (!done) x = 0.0;
  }
  if (!done) {
    double s = 0.0, ds = 1.0;
    int halvings = 0;
    while (s < 1.0) {
      const double s1 = std::min(1.0, s + ds);
      cd x1 = x;
      if (newton(z0 + s1 * (target - z0), x1) && std::abs(x1 - x) <= 0.5 * (ch.r_lin + std::abs(x))) {
        x = x1;
        s = s1;
        ds = std::min(1.0, 2.0 * ds);
      } else {
        if (++halvings > opt.max_halvings) {
          throw Error(ErrorKind::OutsideLinearizationDomain, "continuation of the inverse chart failed");
        }
        ds *= 0.5;
      }
    }
  }
  const double err = std::abs(ch(x) - target);
  if (!(err < opt.tol * std::max(1.0, std::abs(target))) || std::abs(x) > ch.x_limit) {
    throw Error(ErrorKind::OutsideLinearizationDomain, "inverse chart residual " + std::to_string(err));
  }
  return x;
}

// ---------------------------------------------------------------------------
// Renormalization around a Misiurewicz parameter

/// h(lambda) = phi_lambda^-1(f_lambda^{n0}(a(lambda))), the position of the
/// marked orbit in the linearizing coordinate of the continued cycle.
class LandingCoordinate {
 public:
  LandingCoordinate(const RationalFamily& fam, const MarkedPoint& marked, const MisiurewiczParam& mp,
                    const KoenigsOptions& kopt = {})
      : fam_(&fam), marked_(&marked), mp_(mp), kopt_(kopt) {
    chart0_ = koenigs_build(fam, mp.orbit, kopt);
    KoenigsOptions quick = kopt;
    quick.certify = false;
    kopt_ = quick;
  }

  const KoenigsChart& chart0() const { return chart0_; }

  /// h(lambda); `guess` seeds the chart inversion.
  cd operator()(cd lam, cd guess) const {
    const bool inv = chart0_.inverse_chart;
    const int p = mp_.orbit.period;
    // Continue the cycle point from lambda0 by one predictor-corrector step.
    const Jet y0 = cycle_jet(*fam_, mp_.lambda0, chart0_.base(), p, inv);
    cd t = chart0_.base() + y0.dl / (1.0 - y0.dz) * (lam - mp_.lambda0);
    Jet y;
    for (int it = 0; it < 50; ++it) {
      y = cycle_jet(*fam_, lam, t, p, inv);
      const cd step = (y.v - t) / (y.dz - 1.0);
      t -= step;
      if (!std::isfinite(std::abs(t))) throw Error(ErrorKind::OutsideLinearizationDomain, "cycle continuation failed");
      if (std::abs(step) <= 1e-15 * (1.0 + std::abs(t))) break;
    }
    y = cycle_jet(*fam_, lam, t, p, inv);
    PeriodicOrbit o{lam, from_chart(t, inv), p, y.dz};
    KoenigsChart ch = koenigs_build(*fam_, o, kopt_);
    const cd w = orbit_jet(*fam_, *marked_, lam, mp_.landing, Chart::Auto).point.affine();
    InvertOptions iopt;
    iopt.start = guess;
    return koenigs_invert(ch, w, iopt);
  }

  /// r(y) = h^-1(y) by secant iteration started at lambda0 + y / h'(lambda0).
  cd inverse(cd yv) const {
    const cd T = h_prime();
    cd l0 = mp_.lambda0 + yv / T;
    cd h0 = (*this)(l0, yv) - yv;
    cd l1 = l0 - h0 / T;
    for (int it = 0; it < 60; ++it) {
      const cd h1 = (*this)(l1, yv) - yv;
      if (std::abs(h1) <= 1e-12 * (1.0 + std::abs(yv))) return l1;
      const cd slope = (h1 - h0) / (l1 - l0);
      const cd step = (slope != cd(0.0) && std::isfinite(std::abs(slope))) ? h1 / slope : h1 / T;
      l0 = l1;
      h0 = h1;
      l1 -= step;
      if (!std::isfinite(std::abs(l1))) break;
    }
    throw Error(ErrorKind::OutsideLinearizationDomain, "could not invert the landing coordinate");
  }

  /// h'(lambda0) in the chart of the cycle: equals the transversality there.
  cd h_prime() const {
    const bool inv = chart0_.inverse_chart;
    if (inv == mp_.inverse_chart) return mp_.transversality;
    // Recompute the certificate in the chart used by the Koenigs map.
    const int p = mp_.orbit.period;
    const Jet cyc = cycle_jet(*fam_, mp_.lambda0, chart0_.base(), p, inv);
    const Jet land = orbit_jet(*fam_, *marked_, mp_.lambda0, mp_.landing, inv ? Chart::Inverse : Chart::Affine).jet;
    return land.dl - cyc.dl / (1.0 - cyc.dz);
  }

 private:
  const RationalFamily* fam_;
  const MarkedPoint* marked_;
  MisiurewiczParam mp_;
  KoenigsOptions kopt_;
  KoenigsChart chart0_;
};

struct RenormLevel {
  int depth = 0;
  bool ok = false;
  std::string note;
  double scale = 1.0;  // d^{n0 + j q}
  GridMeasure nu;
};

struct RenormSequence {
  MisiurewiczParam param;
  KoenigsChart chart;
  Window omega;
  std::vector<RenormLevel> levels;
};

/// nu_j = d^{n0 + j q} dd^c_x g(r(rho^-j x)) on the grid over omega, j = 0..depth.
inline RenormSequence renorm_sequence(const RationalFamily& fam, const MarkedPoint& marked, const MisiurewiczParam& mp,
                                      int depth, const Window& omega, int res, const GreenOptions& gopt = {},
                                      int threads = 0) {
  if (std::abs(mp.transversality) < 1e-8) {
    throw Error(ErrorKind::TangentIntersection, "renormalization needs a transverse Misiurewicz parameter");
  }
  const LandingCoordinate h(fam, marked, mp);
  RenormSequence seq;
  seq.param = mp;
  seq.chart = h.chart0();
  seq.omega = omega;
  const int d = fam.degree();
  const int q = mp.orbit.period;
  for (int j = 0; j <= depth; ++j) {
    RenormLevel lv;
    lv.depth = j;
    lv.scale = std::pow(static_cast<double>(d), mp.landing + j * q);
    const cd shrink = std::pow(seq.chart.rho, -j);
    Grid<double> pot(omega, res, res, 0.0);
    std::vector<char> failed(pot.size(), 0);
    parallel_for(
        pot.size(),
        [&](std::size_t k) {
          const int i = static_cast<int>(k % res), jj = static_cast<int>(k / res);
          try {
            const cd lam = h.inverse(pot.node(i, jj) * shrink);
            pot(i, jj) = lv.scale * bif_potential(fam, marked, lam, gopt);
          } catch (const Error&) {
            failed[k] = 1;
            pot(i, jj) = std::numeric_limits<double>::quiet_NaN();
          }
        },
        16, threads);
    const auto nfail = std::count(failed.begin(), failed.end(), 1);
    if (nfail > 0) {
      lv.ok = false;
      lv.note = std::to_string(nfail) + " nodes outside the linearization domain";
    } else {
      lv.ok = true;
    }
    lv.nu = measure_from_potential(pot, {NegativeMass::LocalBalance, 2, threads});
    seq.levels.push_back(std::move(lv));
  }
  return seq;
}

/// Box masses of phi_0^* mu_{f_0}: samples of mu_{f_0} pulled back through the
/// inverse Koenigs chart, binned in `boxes`. Also returns how many samples the
/// inverse chart rejected.
struct PullbackOracle {
  std::vector<double> masses;
  std::size_t rejected = 0;
};

inline PullbackOracle koenigs_pullback_oracle(const RationalFamily& fam, const KoenigsChart& ch,
                                              const std::vector<Window>& boxes, std::size_t samples,
                                              const SamplerOptions& sopt = {}) {
  const MeasureSample s = mes_sample(fam, ch.orbit.lambda, samples, sopt);
  std::vector<cd> xs(s.points.size());
  std::vector<char> ok(s.points.size(), 0);
  parallel_for(
      s.points.size(),
      [&](std::size_t i) {
        if (s.points[i].is_infinity() && !ch.inverse_chart) return;
        try {
          xs[i] = koenigs_invert(ch, s.points[i].affine());
          ok[i] = 1;
        } catch (const Error&) {
        }
      },
      64, sopt.threads);
  PullbackOracle out;
  out.masses.assign(boxes.size(), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!ok[i]) {
      ++out.rejected;
      continue;
    }
    for (std::size_t b = 0; b < boxes.size(); ++b)
      if (in_box(boxes[b], xs[i])) out.masses[b] += 1.0;
  }
  for (auto& m : out.masses) m /= static_cast<double>(xs.size());
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const PeriodicOrbit& o) {
  const cd z = o.z();
  nlohmann::json j = {{"lambda", {o.lambda.real(), o.lambda.imag()}},
                      {"period", o.period},
                      {"multiplier", {o.multiplier.real(), o.multiplier.imag()}},
                      {"multiplier_abs", std::abs(o.multiplier)}};
  if (o.point.is_infinity()) j["z"] = "inf";
  else j["z"] = {z.real(), z.imag()};
  return j;
}

inline nlohmann::json to_json(const MisiurewiczParam& m) {
  const cd z = m.orbit.z();
  nlohmann::json j = {{"lambda0_re", m.lambda0.real()},
                      {"lambda0_im", m.lambda0.imag()},
                      {"n", m.landing},
                      {"p", m.orbit.period},
                      {"rho", {m.orbit.multiplier.real(), m.orbit.multiplier.imag()}},
                      {"transversality", {m.transversality.real(), m.transversality.imag()}},
                      {"residual", m.residual},
                      {"chart", m.inverse_chart ? "inverse" : "affine"}};
  if (m.orbit.point.is_infinity()) j["z"] = "inf";
  else j["z"] = {z.real(), z.imag()};
  return j;
}

}  // namespace bifscope
