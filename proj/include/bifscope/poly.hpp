#pragma once

// Univariate complex polynomials and the Aberth-Ehrlich simultaneous root finder.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "bifscope/error.hpp"
#include "bifscope/jet.hpp"

namespace bifscope {

/// Coefficients in increasing degree: c[0] + c[1] w + ... + c[n] w^n.
class PolyC {
 public:
  PolyC() = default;
  explicit PolyC(std::vector<cd> coeffs) : c_(std::move(coeffs)) { strip(); }

  int degree() const { return static_cast<int>(c_.size()) - 1; }
  std::span<const cd> coeffs() const { return c_; }
  const cd& operator[](std::size_t k) const { return c_[k]; }
  bool is_zero() const { return c_.empty(); }

  cd operator()(cd w) const {
    cd acc = 0.0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * w + *it;
    return acc;
  }

  /// Value, derivative and the running Horner error scale sum |c_k| |w|^k.
  struct Eval {
    cd value;
    cd deriv;
    double scale;
  };
  Eval eval_with_scale(cd w) const {
    cd p = 0.0, dp = 0.0;
    double s = 0.0;
    const double aw = std::abs(w);
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) {
      dp = dp * w + p;
      p = p * w + *it;
      s = s * aw + std::abs(*it);
    }
    return {p, dp, s};
  }

  PolyC derivative() const {
    std::vector<cd> d;
    for (std::size_t k = 1; k < c_.size(); ++k) d.push_back(c_[k] * static_cast<double>(k));
    return PolyC(std::move(d));
  }

  /// Reversed polynomial w^n p(1/w).
  PolyC reversed() const {
    std::vector<cd> r(c_.rbegin(), c_.rend());
    return PolyC(std::move(r));
  }

 private:
  // Trailing (leading-degree) coefficients below 1e-14 * max|c| are dropped.
  void strip() {
    double mx = 0.0;
    for (const auto& x : c_) mx = std::max(mx, std::abs(x));
    if (mx == 0.0) {
      c_.clear();
      return;
    }
    while (!c_.empty() && std::abs(c_.back()) <= 1e-14 * mx) c_.pop_back();
  }

  std::vector<cd> c_;
};

struct AberthOptions {
  double tol = 1e-13;
  int max_iter = 1000;
  double start_angle = 0.4;  // offset of the initial circle, varied on retry
};

/// All deg(p) roots of p, repeated according to multiplicity.
///
/// A root is accepted once |p(r)| <= tol * sum |c_k| |r|^k. Roots of a cluster
/// converge only linearly but pass the residual test early, so multiple roots
/// come back as a tight cluster of deg-many entries.
inline std::vector<cd> roots_aberth(const PolyC& p, const AberthOptions& opt = {}) {
  const int n = p.degree();
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "roots_aberth needs degree >= 1");
  const auto c = p.coeffs();
  if (n == 1) return {-c[0] / c[1]};

  // Roots at the origin are split off exactly; Aberth handles the rest.
  int zeros = 0;
  while (zeros < n && c[zeros] == cd(0.0)) ++zeros;
  std::vector<cd> out(static_cast<std::size_t>(zeros), cd(0.0));
  if (zeros == n) return out;
  PolyC q(std::vector<cd>(c.begin() + zeros, c.end()));
  const int m = q.degree();
  const auto qc = q.coeffs();
  if (m == 1) {
    out.push_back(-qc[0] / qc[1]);
    return out;
  }

  // Initial radius: geometric mean of root moduli |c0/cm|^(1/m).
  const double radius = std::pow(std::abs(qc[0]) / std::abs(qc[m]), 1.0 / m);
  std::vector<cd> z(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    z[k] = std::polar(radius, 2.0 * std::numbers::pi * k / m + opt.start_angle);
  }
  std::vector<char> done(static_cast<std::size_t>(m), 0);
  int remaining = m;
  for (int it = 0; it < opt.max_iter && remaining > 0; ++it) {
    for (int k = 0; k < m; ++k) {
      if (done[k]) continue;
      const auto e = q.eval_with_scale(z[k]);
      if (std::abs(e.value) <= opt.tol * e.scale) {
        done[k] = 1;
        --remaining;
        continue;
      }
      const cd ratio = e.value / e.deriv;
      cd sum = 0.0;
      for (int j = 0; j < m; ++j) {
        if (j != k) sum += 1.0 / (z[k] - z[j]);
      }
      const cd step = ratio / (1.0 - ratio * sum);
      if (!std::isfinite(step.real()) || !std::isfinite(step.imag())) {
        // Derivative vanished or two iterates collided: nudge off the singular spot.
        z[k] += cd(1e-8 * (1.0 + std::abs(z[k])), 1e-8);
        continue;
      }
      z[k] -= step;
    }
  }
  if (remaining > 0) {
    throw Error(ErrorKind::NoConvergence, "Aberth iteration cap reached (degree " + std::to_string(m) + ")");
  }
  out.insert(out.end(), z.begin(), z.end());
  return out;
}

/// Newton polish of a simple root in the better-conditioned chart: w itself
/// for |w| <= 1, u = 1/w on the reversed polynomial otherwise.
inline cd polish_root(const PolyC& p, cd w, int steps = 2) {
  const bool inverse = std::abs(w) > 1.0;
  const PolyC poly = inverse ? p.reversed() : p;
  cd x = inverse ? 1.0 / w : w;
  for (int s = 0; s < steps; ++s) {
    const auto e = poly.eval_with_scale(x);
    if (e.deriv == cd(0.0)) break;
    const cd nx = x - e.value / e.deriv;
    if (!std::isfinite(nx.real()) || !std::isfinite(nx.imag())) break;
    // Reject steps that move far: near multiple roots Newton is unreliable.
    if (std::abs(nx - x) > 1e-6 * (1.0 + std::abs(x))) break;
    x = nx;
  }
  return inverse ? 1.0 / x : x;
}

struct RootCluster {
  cd center;
  int multiplicity;
};

/// Groups roots closer than `radius` (single linkage) into clusters.
inline std::vector<RootCluster> cluster_roots(std::span<const cd> roots, double radius) {
  std::vector<RootCluster> out;
  std::vector<char> used(roots.size(), 0);
  for (std::size_t i = 0; i < roots.size(); ++i) {
    if (used[i]) continue;
    std::vector<std::size_t> members{i};
    used[i] = 1;
    for (std::size_t m = 0; m < members.size(); ++m) {
      for (std::size_t j = 0; j < roots.size(); ++j) {
        if (!used[j] && std::abs(roots[j] - roots[members[m]]) < radius) {
          used[j] = 1;
          members.push_back(j);
        }
      }
    }
    cd mean = 0.0;
    for (auto k : members) mean += roots[k];
    out.push_back({mean / static_cast<double>(members.size()), static_cast<int>(members.size())});
  }
  return out;
}

/// Coefficients of prod (w - r_i), increasing degree.
inline std::vector<cd> poly_from_roots(std::span<const cd> roots) {
  std::vector<cd> c{1.0};
  for (const auto& r : roots) {
    std::vector<cd> next(c.size() + 1, 0.0);
    for (std::size_t k = 0; k < c.size(); ++k) {
      next[k + 1] += c[k];
      next[k] -= r * c[k];
    }
    c = std::move(next);
  }
  return c;
}

}  // namespace bifscope
