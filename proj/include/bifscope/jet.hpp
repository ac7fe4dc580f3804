#pragma once

// First-order forward-mode differentiation over the complex numbers.
//
// A Jet carries a value together with its derivatives with respect to the
// parameter lambda and the dynamical variable z. Slots that were not seeded
// stay identically zero, so the same type serves d/dlambda, d/dz or both.

#include <cmath>
#include <complex>
#include <ostream>

namespace bifscope {

using cd = std::complex<double>;

struct Jet {
  cd v{};   // value
  cd dl{};  // d/dlambda
  cd dz{};  // d/dz

  constexpr Jet() = default;
  constexpr Jet(cd value) : v(value) {}  // NOLINT: constants promote implicitly
  constexpr Jet(double value) : v(value) {}  // NOLINT
  constexpr Jet(cd value, cd d_lambda, cd d_z) : v(value), dl(d_lambda), dz(d_z) {}

  static constexpr Jet lambda_var(cd at) { return {at, 1.0, 0.0}; }
  static constexpr Jet z_var(cd at) { return {at, 0.0, 1.0}; }

  Jet& operator+=(const Jet& o) { v += o.v; dl += o.dl; dz += o.dz; return *this; }
  Jet& operator-=(const Jet& o) { v -= o.v; dl -= o.dl; dz -= o.dz; return *this; }
  Jet& operator*=(const Jet& o) {
    dl = dl * o.v + v * o.dl;
    dz = dz * o.v + v * o.dz;
    v *= o.v;
    return *this;
  }
  Jet& operator/=(const Jet& o) {
    const cd inv = 1.0 / o.v;
    const cd q = v * inv;
    dl = (dl - q * o.dl) * inv;
    dz = (dz - q * o.dz) * inv;
    v = q;
    return *this;
  }
  Jet& operator*=(double s) { v *= s; dl *= s; dz *= s; return *this; }
};

inline Jet operator+(Jet a, const Jet& b) { return a += b; }
inline Jet operator-(Jet a, const Jet& b) { return a -= b; }
inline Jet operator*(Jet a, const Jet& b) { return a *= b; }
inline Jet operator/(Jet a, const Jet& b) { return a /= b; }
inline Jet operator-(const Jet& a) { return {-a.v, -a.dl, -a.dz}; }
inline Jet operator*(double s, Jet a) { return a *= s; }
inline Jet operator*(Jet a, double s) { return a *= s; }

inline std::ostream& operator<<(std::ostream& os, const Jet& j) {
  return os << "Jet{" << j.v << ", dl=" << j.dl << ", dz=" << j.dz << "}";
}

// Scalar traits so templated kernels run on both cd and Jet.
inline cd value_of(const cd& x) { return x; }
inline cd value_of(const Jet& x) { return x.v; }
inline double magnitude(const cd& x) { return std::abs(x); }
inline double magnitude(const Jet& x) { return std::abs(x.v); }

/// Integer power by repeated squaring; exact operation order depends only on n.
template <class T>
T ipow(T base, unsigned n) {
  T result = T(1.0);
  while (n != 0) {
    if (n & 1u) result *= base;
    n >>= 1u;
    if (n != 0) base *= base;
  }
  return result;
}

}  // namespace bifscope
