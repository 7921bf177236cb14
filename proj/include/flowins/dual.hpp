#pragma once

#include <Eigen/Core>
#include <cmath>

namespace flowins {

/// Forward-mode AD scalar: value plus N partial derivatives.
///
/// Used to differentiate the mechanization dynamics and the flow
/// measurement model (including the triangulation eigen-solve) without
/// hand-derived Jacobians. Comparisons act on the value part, so
/// branches taken by the primal computation are shared by the tangents.
template <int N>
struct Dual {
  using Grad = Eigen::Matrix<double, N, 1>;

  double v{0.0};
  Grad d{Grad::Zero()};

  Dual() = default;
  Dual(double value) : v(value), d(Grad::Zero()) {}
  Dual(double value, const Grad& grad) : v(value), d(grad) {}

  /// Seed a variable: partial k equals 1.
  static Dual variable(double value, int k) {
    Dual out(value);
    out.d[k] = 1.0;
    return out;
  }

  Dual operator-() const { return Dual(-v, -d); }

  Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  Dual& operator*=(const Dual& o) { d = d * o.v + o.d * v; v *= o.v; return *this; }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.v;
    v *= inv;
    d = (d - o.d * v) * inv;
    return *this;
  }
};

template <int N> inline Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N> inline Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N> inline Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <int N> inline Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }

template <int N> inline Dual<N> operator+(Dual<N> a, double b) { a.v += b; return a; }
template <int N> inline Dual<N> operator+(double a, Dual<N> b) { b.v += a; return b; }
template <int N> inline Dual<N> operator-(Dual<N> a, double b) { a.v -= b; return a; }
template <int N> inline Dual<N> operator-(double a, const Dual<N>& b) { return Dual<N>(a - b.v, -b.d); }
template <int N> inline Dual<N> operator*(Dual<N> a, double b) { a.v *= b; a.d *= b; return a; }
template <int N> inline Dual<N> operator*(double a, Dual<N> b) { b.v *= a; b.d *= a; return b; }
template <int N> inline Dual<N> operator/(Dual<N> a, double b) { a.v /= b; a.d /= b; return a; }
template <int N> inline Dual<N> operator/(double a, const Dual<N>& b) {
  const double inv = 1.0 / b.v;
  const double val = a * inv;
  return Dual<N>(val, b.d * (-val * inv));
}

template <int N> inline bool operator<(const Dual<N>& a, const Dual<N>& b) { return a.v < b.v; }
template <int N> inline bool operator>(const Dual<N>& a, const Dual<N>& b) { return a.v > b.v; }
template <int N> inline bool operator<=(const Dual<N>& a, const Dual<N>& b) { return a.v <= b.v; }
template <int N> inline bool operator>=(const Dual<N>& a, const Dual<N>& b) { return a.v >= b.v; }
template <int N> inline bool operator<(const Dual<N>& a, double b) { return a.v < b; }
template <int N> inline bool operator>(const Dual<N>& a, double b) { return a.v > b; }
template <int N> inline bool operator<=(const Dual<N>& a, double b) { return a.v <= b; }
template <int N> inline bool operator>=(const Dual<N>& a, double b) { return a.v >= b; }

template <int N> inline Dual<N> sqrt(const Dual<N>& a) {
  const double s = std::sqrt(a.v);
  return Dual<N>(s, a.d * (0.5 / s));
}

template <int N> inline Dual<N> sin(const Dual<N>& a) {
  return Dual<N>(std::sin(a.v), a.d * std::cos(a.v));
}

template <int N> inline Dual<N> cos(const Dual<N>& a) {
  return Dual<N>(std::cos(a.v), a.d * (-std::sin(a.v)));
}

template <int N> inline Dual<N> abs(const Dual<N>& a) {
  return a.v < 0.0 ? -a : a;
}

template <int N> inline Dual<N> atan2(const Dual<N>& y, const Dual<N>& x) {
  const double denom = x.v * x.v + y.v * y.v;
  return Dual<N>(std::atan2(y.v, x.v), (y.d * x.v - x.d * y.v) / denom);
}

/// Plain-double fallbacks so templated kernels compile for T = double.
/// Kernels call the unqualified names after `using std::sqrt;` etc. and let
/// ADL pick the Dual overloads.
inline double value_of(double x) { return x; }
template <int N> inline double value_of(const Dual<N>& x) { return x.v; }

}  // namespace flowins
