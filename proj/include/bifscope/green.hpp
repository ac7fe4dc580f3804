#pragma once

// Escape-rate Green functions G_lambda(v) = lim d^-n log ||F_lambda^n(v)|| and
// the bifurcation potential g(lambda) = G_lambda(a~(lambda)).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "bifscope/error.hpp"
#include "bifscope/family.hpp"
#include "bifscope/grid.hpp"
#include "bifscope/parallel.hpp"

namespace bifscope {

struct GreenValue {
  double value = 0.0;
  double truncation_bound = 0.0;  // C d^-n
  int iterations_used = 0;
};

struct GreenOptions {
  double tol = 1e-9;
  int max_iter = 200;
};

inline double max_norm(cd a, cd b) { return std::max(std::abs(a), std::abs(b)); }

/// G(v) = log||v|| + sum_{k<n} d^-(k+1) log ||F(u_k)||, u_k the renormalized
/// orbit. Stops at the first n with C d^-n < tol, C being the tail constant of
/// the lift.
inline GreenValue green_lift(const FiberMap& f, const LiftBounds& bounds, cd Z, cd W, const GreenOptions& opt = {}) {
  const double nv = max_norm(Z, W);
  if (!(nv > 0.0) || !std::isfinite(nv)) throw Error(ErrorKind::DegenerateParameter, "zero or non-finite lift vector");
  const double inv_d = 1.0 / f.d;
  double value = std::log(nv);
  Z /= nv;
  W /= nv;
  double weight = 1.0;  // d^-n after n steps
  const double C = bounds.tail_constant;
  int n = 0;
  // Terms are summed smallest-weight last so the result is independent of when we stop.
  while (n < opt.max_iter && C * weight >= opt.tol) {
    auto [P, Q] = f.lift(Z, W);
    const double m = max_norm(P, Q);
    if (!(m > 0.0)) throw Error(ErrorKind::DegenerateParameter, "lift vanished along the orbit");
    weight *= inv_d;
    value += weight * std::log(m);
    Z = P / m;
    W = Q / m;
    ++n;
  }
  return {value, C * weight, n};
}

inline GreenValue green_lift(const RationalFamily& fam, cd lam, const SpherePoint& v, const GreenOptions& opt = {}) {
  const FiberMap f = fam.fiber(lam);
  return green_lift(f, lift_bounds(f), v.Z, v.W, opt);
}

/// Green function of an unnormalized lift vector (Z, W).
inline GreenValue green_lift(const RationalFamily& fam, cd lam, cd Z, cd W, const GreenOptions& opt = {}) {
  const FiberMap f = fam.fiber(lam);
  return green_lift(f, lift_bounds(f), Z, W, opt);
}

/// g(lambda) at a single parameter; NaN where the lift degenerates or the marked lift vanishes.
inline double bif_potential(const RationalFamily& fam, const MarkedPoint& marked, cd lam, const GreenOptions& opt = {}) {
  const FiberMap f = fam.fiber_unchecked(lam);
  const LiftBounds b = lift_bounds(f);
  if (RationalFamily::relative_resultant(f, b.resultant) <= RationalFamily::kDegeneracyThreshold) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  auto [A, B] = marked.lift(lam);
  if (!(max_norm(A, B) > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return green_lift(f, b, A, B, opt).value;
}

/// Potential on every node of a grid over `window` (nx by ny nodes).
inline Grid<double> bif_potential_grid(const RationalFamily& fam, const MarkedPoint& marked, const Window& window,
                                       int nx, int ny, const GreenOptions& opt = {}, int threads = 0) {
  Grid<double> g(window, nx, ny);
  parallel_for(
      g.size(),
      [&](std::size_t idx) {
        const int i = static_cast<int>(idx % nx), j = static_cast<int>(idx / nx);
        g(i, j) = bif_potential(fam, marked, g.node(i, j), opt);
      },
      256, threads);
  return g;
}

// ---------------------------------------------------------------------------
// Binary grid format: 32-byte little-endian header
//   [0,4)   magic ("BIFG" potential, "BIFM" measure, "JSTB" defect)
//   [4,8)   uint32 width (nodes along Re)
//   [8,12)  uint32 height (nodes along Im)
//   [12,16) uint32 format version (1)
//   [16,32) float32 re_min, re_max, im_min, im_max
// followed by width*height float64 values, row-major with Im increasing.

namespace io {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}
inline void put_f32(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(out, u);
}
inline void put_f64(std::string& out, double x) {
  std::uint64_t u;
  std::memcpy(&u, &x, 8);
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((u >> (8 * k)) & 0xff));
}
inline std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= std::uint32_t(static_cast<unsigned char>(s[at + k])) << (8 * k);
  return v;
}
inline double get_f64(const std::string& s, std::size_t at) {
  std::uint64_t u = 0;
  for (int k = 0; k < 8; ++k) u |= std::uint64_t(static_cast<unsigned char>(s[at + k])) << (8 * k);
  double x;
  std::memcpy(&x, &u, 8);
  return x;
}
inline float get_f32(const std::string& s, std::size_t at) {
  const std::uint32_t u = get_u32(s, at);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

inline std::string encode_grid(const Grid<double>& g, const char (&magic)[5]) {
  std::string out;
  out.reserve(32 + 8 * g.size());
  out.append(magic, 4);
  put_u32(out, static_cast<std::uint32_t>(g.nx()));
  put_u32(out, static_cast<std::uint32_t>(g.ny()));
  put_u32(out, 1);
  const Window& w = g.window();
  for (double x : {w.re_min, w.re_max, w.im_min, w.im_max}) put_f32(out, static_cast<float>(x));
  for (double x : g.data()) put_f64(out, x);
  return out;
}

inline Grid<double> decode_grid(const std::string& bytes, const char (&magic)[5]) {
  if (bytes.size() < 32 || bytes.compare(0, 4, magic, 4) != 0) {
    throw Error(ErrorKind::IoError, std::string("not a ") + magic + " grid");
  }
  const auto nx = get_u32(bytes, 4), ny = get_u32(bytes, 8);
  if (get_u32(bytes, 12) != 1) throw Error(ErrorKind::IoError, "unsupported grid format version");
  if (bytes.size() != 32 + 8ull * nx * ny) throw Error(ErrorKind::IoError, "grid payload size mismatch");
  Window w{get_f32(bytes, 16), get_f32(bytes, 20), get_f32(bytes, 24), get_f32(bytes, 28)};
  Grid<double> g(w, static_cast<int>(nx), static_cast<int>(ny));
  for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] = get_f64(bytes, 32 + 8 * k);
  return g;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoError, "cannot open " + path + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorKind::IoError, "write failed for " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoError, "cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// CSV with header re,im,value; one line per node, row-major.
inline std::string grid_csv(const Grid<double>& g) {
  std::string out = "re,im,value\n";
  char buf[96];
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      const cd z = g.node(i, j);
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", z.real(), z.imag(), g(i, j));
      out += buf;
    }
  }
  return out;
}

}  // namespace io

}  // namespace bifscope
