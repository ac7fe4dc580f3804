#pragma once

// Algebraic families f_lambda of degree-d rational maps with a marked point,
// represented through homogeneous lifts F_lambda(Z, W) = (P(Z, W), Q(Z, W)).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "bifscope/error.hpp"
#include "bifscope/expr.hpp"
#include "bifscope/grid.hpp"
#include "bifscope/jet.hpp"
#include "bifscope/poly.hpp"

namespace bifscope {

/// Point of the Riemann sphere as a homogeneous pair with max(|Z|, |W|) = 1.
struct SpherePoint {
  cd Z{0.0};
  cd W{1.0};

  static SpherePoint from_pair(cd z, cd w) {
    const double m = std::max(std::abs(z), std::abs(w));
    if (!(m > 0.0) || !std::isfinite(m)) throw Error(ErrorKind::DegenerateParameter, "zero or non-finite lift");
    return {z / m, w / m};
  }
  static SpherePoint from_affine(cd z) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return {1.0, 0.0};
    return from_pair(z, 1.0);
  }
  static SpherePoint infinity() { return {1.0, 0.0}; }

  bool is_infinity() const { return W == cd(0.0); }
  /// Affine coordinate Z/W (infinite at the point at infinity).
  cd affine() const {
    if (W == cd(0.0)) return {std::numeric_limits<double>::infinity(), 0.0};
    return Z / W;
  }
  /// Chordal distance on the sphere (diameter-2 normalization, <= 2).
  friend double chordal_distance(const SpherePoint& a, const SpherePoint& b) {
    const double na = std::sqrt(std::norm(a.Z) + std::norm(a.W));
    const double nb = std::sqrt(std::norm(b.Z) + std::norm(b.W));
    return 2.0 * std::abs(a.Z * b.W - a.W * b.Z) / (na * nb);
  }
};

/// Binary form sum_k c[k] Z^k W^(d-k) evaluated with both partials.
template <class T>
struct FormValue {
  T value, dZ, dW;
};

/// A single member f_lambda of the family: coefficients of its lift.
template <class T>
struct LiftMap {
  int d = 0;
  std::vector<T> p;  // p[k] multiplies Z^k W^(d-k)
  std::vector<T> q;

  static T eval_form(const std::vector<T>& c, const T& Z, const T& W, int d) {
    // Homogeneous Horner: ((c_d Z + c_{d-1} W) Z + c_{d-2} W^2) ...
    T acc = c[d];
    T wpow = W;
    for (int k = d - 1; k >= 0; --k) {
      acc = acc * Z + c[k] * wpow;
      if (k > 0) wpow = wpow * W;
    }
    return acc;
  }

  std::pair<T, T> lift(const T& Z, const T& W) const { return {eval_form(p, Z, W, d), eval_form(q, Z, W, d)}; }

  static FormValue<T> eval_form_grad(const std::vector<T>& c, const T& Z, const T& W, int d) {
    std::vector<T> zp(static_cast<std::size_t>(d) + 1), wp(static_cast<std::size_t>(d) + 1);
    zp[0] = T(1.0);
    wp[0] = T(1.0);
    for (int k = 1; k <= d; ++k) {
      zp[k] = zp[k - 1] * Z;
      wp[k] = wp[k - 1] * W;
    }
    FormValue<T> r{T(0.0), T(0.0), T(0.0)};
    for (int k = 0; k <= d; ++k) {
      r.value += c[k] * zp[k] * wp[d - k];
      if (k > 0) r.dZ += static_cast<double>(k) * c[k] * zp[k - 1] * wp[d - k];
      if (k < d) r.dW += static_cast<double>(d - k) * c[k] * zp[k] * wp[d - k - 1];
    }
    return r;
  }
};

using FiberMap = LiftMap<cd>;

/// Sylvester resultant of two binary forms of formal degree d, via LU with partial pivoting.
inline cd binary_resultant(const std::vector<cd>& p, const std::vector<cd>& q, int d) {
  const int n = 2 * d;
  std::vector<cd> m(static_cast<std::size_t>(n) * n, 0.0);
  auto at = [&](int r, int c) -> cd& { return m[static_cast<std::size_t>(r) * n + c]; };
  for (int r = 0; r < d; ++r) {
    for (int k = 0; k <= d; ++k) {
      at(r, r + k) = p[d - k];
      at(r + d, r + k) = q[d - k];
    }
  }
  cd det = 1.0;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::abs(at(col, col));
    for (int r = col + 1; r < n; ++r) {
      const double v = std::abs(at(r, col));
      if (v > best) best = v, piv = r;
    }
    if (best == 0.0) return 0.0;
    if (piv != col) {
      for (int c = 0; c < n; ++c) std::swap(at(piv, c), at(col, c));
      det = -det;
    }
    const cd pv = at(col, col);
    det *= pv;
    for (int r = col + 1; r < n; ++r) {
      const cd f = at(r, col) / pv;
      if (f == cd(0.0)) continue;
      for (int c = col; c < n; ++c) at(r, c) -= f * at(col, c);
    }
  }
  return det;
}

/// Bounds on log ||F(v)|| over the max-norm unit sphere ||v|| = 1:
/// upper from coefficient sums, lower from the Bezout identity with
/// Hadamard-bounded cofactors of the Sylvester matrix.
struct LiftBounds {
  cd resultant;
  double log_upper;
  double log_lower;
  double tail_constant;  // max(|log_upper|, |log_lower|)
};

inline LiftBounds lift_bounds(const FiberMap& f) {
  const int d = f.d;
  double sp = 0.0, sq = 0.0, pn = 0.0, qn = 0.0;
  for (int k = 0; k <= d; ++k) {
    sp += std::abs(f.p[k]);
    sq += std::abs(f.q[k]);
    pn += std::norm(f.p[k]);
    qn += std::norm(f.q[k]);
  }
  const cd res = binary_resultant(f.p, f.q, d);
  // Every Sylvester row is a shifted copy of p or q, so row norms are ||p||_2 or ||q||_2.
  const double rp = std::sqrt(pn), rq = std::sqrt(qn);
  const double log_h = d * (std::log(rp) + std::log(rq)) - std::log(std::min(rp, rq));
  const double log_upper = std::log(std::max(sp, sq));
  const double log_lower = std::log(std::abs(res)) - std::log(2.0 * d) - log_h;
  return {res, log_upper, log_lower, std::max(std::abs(log_upper), std::abs(log_lower))};
}

/// Marked point lift a(lambda) = (A(lambda), B(lambda)).
struct MarkedPoint {
  LamPoly A;
  LamPoly B;
  std::string source;

  std::pair<cd, cd> lift(cd lam) const { return {lampoly::eval(A, lam), lampoly::eval(B, lam)}; }
  std::pair<Jet, Jet> lift_jet(cd lam) const { return {lampoly::eval_jet(A, lam), lampoly::eval_jet(B, lam)}; }
  SpherePoint at(cd lam) const {
    auto [a, b] = lift(lam);
    return SpherePoint::from_pair(a, b);
  }
};

struct ExcludedCell {
  int i, j;
  cd center;
};

class RationalFamily {
 public:
  RationalFamily() = default;
  RationalFamily(int d, std::vector<LamPoly> p, std::vector<LamPoly> q, Window domain, std::string source)
      : d_(d), p_(std::move(p)), q_(std::move(q)), domain_(domain), source_(std::move(source)) {}

  int degree() const { return d_; }
  const Window& domain() const { return domain_; }
  const std::string& source() const { return source_; }
  const std::vector<LamPoly>& p_coeffs() const { return p_; }
  const std::vector<LamPoly>& q_coeffs() const { return q_; }
  const std::vector<ExcludedCell>& excluded() const { return excluded_; }
  void set_excluded(std::vector<ExcludedCell> cells) { excluded_ = std::move(cells); }

  /// True when the coefficients do not depend on lambda.
  bool is_constant() const {
    for (const auto* v : {&p_, &q_})
      for (const auto& c : *v)
        if (c.size() > 1) return false;
    return true;
  }

  FiberMap fiber_unchecked(cd lam) const {
    FiberMap f;
    f.d = d_;
    f.p.resize(static_cast<std::size_t>(d_) + 1);
    f.q.resize(static_cast<std::size_t>(d_) + 1);
    for (int k = 0; k <= d_; ++k) {
      f.p[k] = lampoly::eval(p_[k], lam);
      f.q[k] = lampoly::eval(q_[k], lam);
    }
    return f;
  }

  /// Resultant magnitude relative to the coefficient scale; below 1e-10 the
  /// lift is treated as degenerate.
  static double relative_resultant(const FiberMap& f, cd res) {
    double mp = 0.0, mq = 0.0;
    for (int k = 0; k <= f.d; ++k) {
      mp = std::max(mp, std::abs(f.p[k]));
      mq = std::max(mq, std::abs(f.q[k]));
    }
    if (mp == 0.0 || mq == 0.0) return 0.0;
    return std::abs(res) / (std::pow(mp, f.d) * std::pow(mq, f.d));
  }
  static constexpr double kDegeneracyThreshold = 1e-10;

  bool degenerate_at(cd lam) const {
    const FiberMap f = fiber_unchecked(lam);
    return relative_resultant(f, binary_resultant(f.p, f.q, d_)) <= kDegeneracyThreshold;
  }

  /// f_lambda, raising DegenerateParameter where the lift degenerates.
  FiberMap fiber(cd lam) const {
    FiberMap f = fiber_unchecked(lam);
    if (relative_resultant(f, binary_resultant(f.p, f.q, d_)) <= kDegeneracyThreshold) {
      throw Error(ErrorKind::DegenerateParameter,
                  "lift degenerates at lambda = (" + std::to_string(lam.real()) + ", " + std::to_string(lam.imag()) + ")");
    }
    return f;
  }

  /// Coefficients as lambda-jets (value and d/dlambda).
  LiftMap<Jet> fiber_jet(cd lam) const {
    LiftMap<Jet> f;
    f.d = d_;
    f.p.resize(static_cast<std::size_t>(d_) + 1);
    f.q.resize(static_cast<std::size_t>(d_) + 1);
    for (int k = 0; k <= d_; ++k) {
      f.p[k] = lampoly::eval_jet(p_[k], lam);
      f.q[k] = lampoly::eval_jet(q_[k], lam);
    }
    return f;
  }

 private:
  int d_ = 0;
  std::vector<LamPoly> p_, q_;
  Window domain_{};
  std::string source_;
  std::vector<ExcludedCell> excluded_;
};

struct DynamicalPair {
  RationalFamily family;
  MarkedPoint marked;
};

/// Builds (f, a) from expressions; scans a 64x64 cell grid over `domain` for
/// degenerate lifts and vanishing marked lifts.
inline DynamicalPair build_family(const Expr& map, const Expr& marked, const Window& domain = {},
                                  const std::string& map_src = {}, const std::string& marked_src = {}) {
  const RationalForm rf = to_rational(map);
  const int dp = zpoly::degree(rf.num), dq = zpoly::degree(rf.den);
  const int d = std::max(dp, dq);
  if (d < 2) throw Error(ErrorKind::InvalidArgument, "map must have degree >= 2 in z (got " + std::to_string(d) + ")");
  std::vector<LamPoly> p(static_cast<std::size_t>(d) + 1), q(static_cast<std::size_t>(d) + 1);
  for (int k = 0; k <= dp; ++k) p[k] = rf.num[k];
  for (int k = 0; k <= dq; ++k) q[k] = rf.den[k];

  if (depends_on(marked, Var::Z)) throw Error(ErrorKind::InvalidMarkedPoint, "marked point must not depend on z");
  const RationalForm mf = to_rational(marked);
  MarkedPoint a{mf.num.empty() ? LamPoly{} : mf.num[0], mf.den[0], marked_src.empty() ? print(marked) : marked_src};

  RationalFamily fam(d, std::move(p), std::move(q), domain, map_src.empty() ? print(map) : map_src);

  constexpr int kScan = 64;
  std::vector<ExcludedCell> bad;
  const double cw = domain.width() / kScan, ch = domain.height() / kScan;
  for (int j = 0; j < kScan; ++j) {
    for (int i = 0; i < kScan; ++i) {
      const cd lam(domain.re_min + (i + 0.5) * cw, domain.im_min + (j + 0.5) * ch);
      auto [A, B] = a.lift(lam);
      const double am = std::max(std::abs(A), std::abs(B));
      if (fam.degenerate_at(lam) || !(am > 1e-300)) bad.push_back({i, j, lam});
    }
  }
  if (2 * bad.size() > static_cast<std::size_t>(kScan * kScan)) {
    throw Error(ErrorKind::DegenerateEverywhere,
                std::to_string(bad.size()) + " of 4096 scan cells have a degenerate lift or marked point");
  }
  fam.set_excluded(std::move(bad));
  return {std::move(fam), std::move(a)};
}

inline DynamicalPair build_family(const std::string& map, const std::string& marked, const Window& domain = {}) {
  return build_family(parse(map), parse(marked), domain, map, marked);
}

/// F_lambda(pt), renormalized. Named apart from std::apply, which ADL finds through std::complex.
inline SpherePoint apply_fiber(const FiberMap& f, const SpherePoint& pt) {
  auto [P, Q] = f.lift(pt.Z, pt.W);
  return SpherePoint::from_pair(P, Q);
}

inline SpherePoint apply(const RationalFamily& fam, cd lam, const SpherePoint& pt) { return apply_fiber(fam.fiber(lam), pt); }

enum class Chart { Auto, Affine, Inverse };

/// Value and lambda-derivative of f_lambda^n(a(lambda)) in a chart.
struct ChartJet {
  Jet jet;            // v and dl populated
  bool inverse_chart; // true: coordinate is W/Z
  SpherePoint point;
};

/// Largest |z| reported in the affine chart under Chart::Auto.
inline constexpr double kAffineChartMargin = 1e6;

template <class T>
inline void renormalize_pair(T& Z, T& W) {
  const double m = std::max(magnitude(Z), magnitude(W));
  if (!(m > 0.0) || !std::isfinite(m)) throw Error(ErrorKind::DegenerateParameter, "orbit lift vanished");
  const double s = 1.0 / m;
  Z *= s;
  W *= s;
}

inline ChartJet orbit_jet(const RationalFamily& fam, const MarkedPoint& marked, cd lam, int n, Chart chart = Chart::Auto) {
  (void)fam.fiber(lam);  // degeneracy check
  const LiftMap<Jet> F = fam.fiber_jet(lam);
  auto [Z, W] = marked.lift_jet(lam);
  renormalize_pair(Z, W);
  for (int k = 0; k < n; ++k) {
    auto [P, Q] = F.lift(Z, W);
    Z = P;
    W = Q;
    renormalize_pair(Z, W);
  }
  bool inverse = false;
  if (chart == Chart::Inverse) {
    inverse = true;
  } else if (chart == Chart::Auto) {
    inverse = std::abs(Z.v) > kAffineChartMargin * std::abs(W.v);
  }
  const Jet& num = inverse ? W : Z;
  const Jet& den = inverse ? Z : W;
  if (den.v == cd(0.0)) throw Error(ErrorKind::DegenerateParameter, "orbit point at the antipode of the requested chart");
  Jet r = num / den;
  return {Jet{r.v, r.dl, 0.0}, inverse, SpherePoint::from_pair(Z.v, W.v)};
}

/// Iterates f^n in the affine chart on a jet (both slots carried through).
inline Jet iterate_affine(const LiftMap<Jet>& F, Jet z, int n) {
  Jet Z = z, W = Jet(1.0);
  for (int k = 0; k < n; ++k) {
    auto [P, Q] = F.lift(Z, W);
    Z = P;
    W = Q;
    renormalize_pair(Z, W);
  }
  if (W.v == cd(0.0)) throw Error(ErrorKind::DegenerateParameter, "iterate hit a pole");
  return Z / W;
}

inline cd iterate_affine(const FiberMap& F, cd z, int n) {
  cd Z = z, W = 1.0;
  for (int k = 0; k < n; ++k) {
    auto [P, Q] = F.lift(Z, W);
    Z = P;
    W = Q;
    renormalize_pair(Z, W);
  }
  if (W == cd(0.0)) return {std::numeric_limits<double>::infinity(), 0.0};
  return Z / W;
}

/// |f'|_sigma at a point of the sphere, chart-free:
/// |det DF(v)| ||v||^2 / (d ||F(v)||^2) with Euclidean norms on C^2.
inline double spherical_derivative(const FiberMap& f, const SpherePoint& pt) {
  const auto P = FiberMap::eval_form_grad(f.p, pt.Z, pt.W, f.d);
  const auto Q = FiberMap::eval_form_grad(f.q, pt.Z, pt.W, f.d);
  const double det = std::abs(P.dZ * Q.dW - P.dW * Q.dZ);
  const double nv = std::norm(pt.Z) + std::norm(pt.W);
  const double nf = std::norm(P.value) + std::norm(Q.value);
  if (!(nf > 0.0)) throw Error(ErrorKind::DegenerateParameter, "F(v) = 0");
  return det * nv / (f.d * nf);
}

inline double spherical_derivative(const RationalFamily& fam, cd lam, cd z) {
  return spherical_derivative(fam.fiber(lam), SpherePoint::from_affine(z));
}

/// All d preimages of y under f (with multiplicity), as sphere points.
inline std::vector<SpherePoint> preimages(const FiberMap& f, const SpherePoint& y, const AberthOptions& opt = {}) {
  const int d = f.d;
  std::vector<cd> c(static_cast<std::size_t>(d) + 1);
  for (int k = 0; k <= d; ++k) c[k] = y.W * f.p[k] - y.Z * f.q[k];
  PolyC poly(std::move(c));
  if (poly.is_zero()) throw Error(ErrorKind::DegenerateParameter, "preimage equation vanishes identically");
  std::vector<SpherePoint> out;
  out.reserve(static_cast<std::size_t>(d));
  if (poly.degree() >= 1) {
    for (const cd& r : roots_aberth(poly, opt)) out.push_back(SpherePoint::from_affine(polish_root(poly, r)));
  }
  while (static_cast<int>(out.size()) < d) out.push_back(SpherePoint::infinity());
  return out;
}

/// Affine-chart evaluation of the expression form P(z)/Q(z) at fixed lambda.
inline cd chart_eval(const FiberMap& f, cd z) {
  cd P = 0.0, Q = 0.0;
  for (int k = f.d; k >= 0; --k) {
    P = P * z + f.p[k];
    Q = Q * z + f.q[k];
  }
  return P / Q;
}

}  // namespace bifscope
