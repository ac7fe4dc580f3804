#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

#include "bifscope/error.hpp"
#include "bifscope/jet.hpp"

namespace bifscope {

/// Axis-aligned rectangle in the complex plane.
struct Window {
  double re_min = -2.5;
  double re_max = 1.5;
  double im_min = -2.0;
  double im_max = 2.0;

  double width() const { return re_max - re_min; }
  double height() const { return im_max - im_min; }
  bool contains(cd z) const {
    return z.real() >= re_min && z.real() <= re_max && z.imag() >= im_min && z.imag() <= im_max;
  }
  bool valid() const { return re_max > re_min && im_max > im_min; }
  cd center() const { return {0.5 * (re_min + re_max), 0.5 * (im_min + im_max)}; }

  static Window centered(cd c, double half_w, double half_h) {
    return {c.real() - half_w, c.real() + half_w, c.imag() - half_h, c.imag() + half_h};
  }
  friend bool operator==(const Window&, const Window&) = default;
};

/// Node-centered grid over a window: node (i, j) sits at
/// re_min + i*hx + i(im_min + j*hy), endpoints included. Row-major in j.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(Window w, int nx, int ny, T fill = T{}) : win_(w), nx_(nx), ny_(ny), data_(std::size_t(nx) * ny, fill) {
    if (nx < 2 || ny < 2) throw Error(ErrorKind::InvalidArgument, "grid needs at least 2x2 nodes");
    if (!w.valid()) throw Error(ErrorKind::InvalidArgument, "empty window");
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  const Window& window() const { return win_; }
  double hx() const { return win_.width() / (nx_ - 1); }
  double hy() const { return win_.height() / (ny_ - 1); }
  std::size_t size() const { return data_.size(); }

  cd node(int i, int j) const { return {win_.re_min + i * hx(), win_.im_min + j * hy()}; }
  T& operator()(int i, int j) { return data_[std::size_t(j) * nx_ + i]; }
  const T& operator()(int i, int j) const { return data_[std::size_t(j) * nx_ + i]; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool interior(int i, int j) const { return i > 0 && j > 0 && i < nx_ - 1 && j < ny_ - 1; }

  /// Nearest node index to a point (clamped).
  std::pair<int, int> nearest(cd z) const {
    int i = static_cast<int>(std::lround((z.real() - win_.re_min) / hx()));
    int j = static_cast<int>(std::lround((z.imag() - win_.im_min) / hy()));
    i = std::clamp(i, 0, nx_ - 1);
    j = std::clamp(j, 0, ny_ - 1);
    return {i, j};
  }

 private:
  Window win_{};
  int nx_ = 0;
  int ny_ = 0;
  std::vector<T> data_;
};

/// Mass of the discrete dd^c of a potential at an interior node:
/// (1/2pi) * (g_E + g_W + g_N + g_S - 4 g_C) on a square grid. With unequal
/// spacings the five-point Laplacian is scaled by the cell area instead; the two
/// agree when hx == hy. Normalized so that dd^c log|z| has total mass 1.
inline double laplacian_cell_mass(const Grid<double>& g, int i, int j) {
  if (!g.interior(i, j)) throw Error(ErrorKind::InvalidArgument, "laplacian_cell_mass needs an interior node");
  const double c = g(i, j), e = g(i + 1, j), w = g(i - 1, j), n = g(i, j + 1), s = g(i, j - 1);
  if (!std::isfinite(c) || !std::isfinite(e) || !std::isfinite(w) || !std::isfinite(n) || !std::isfinite(s)) {
    throw Error(ErrorKind::NonFinitePotential, "non-finite potential in the stencil of node (" + std::to_string(i) +
                                                   ", " + std::to_string(j) + ")");
  }
  const double hx = g.hx(), hy = g.hy();
  double lap;
  if (hx == hy) {
    lap = e + w + n + s - 4.0 * c;
  } else {
    lap = ((e + w - 2.0 * c) / (hx * hx) + (n + s - 2.0 * c) / (hy * hy)) * hx * hy;
  }
  return lap / (2.0 * std::numbers::pi);
}

/// Relative disagreement between the jet derivative of `fun` at `at` and the
/// central difference (fun(at+h) - fun(at-h)) / 2h.
inline double jet_finite_diff_check(const std::function<Jet(const Jet&)>& fun, cd at, double h) {
  const cd deriv = fun(Jet::lambda_var(at)).dl;
  const cd fp = fun(Jet(at + h)).v;
  const cd fm = fun(Jet(at - h)).v;
  const cd fd = (fp - fm) / (2.0 * h);
  return std::abs(deriv - fd) / std::max(1.0, std::abs(deriv));
}

}  // namespace bifscope
