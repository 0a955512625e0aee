#pragma once

#include <array>
#include <cmath>

namespace ncps {

/// Forward-mode dual number carrying N directional derivatives.
///
/// Used inside per-pixel geometry code, where a handful of inputs (depth and
/// its two spatial derivatives) fan out into many outputs, so the full
/// Jacobian is cheapest to obtain by pushing N tangents forward.
template <typename T, int N>
struct Jet {
  T a{};
  std::array<T, N> v{};

  constexpr Jet() = default;
  constexpr Jet(T value) : a(value) {}  // NOLINT: implicit promotion from scalar
  constexpr Jet(T value, int k) : a(value) { v[k] = T(1); }

  static constexpr Jet variable(T value, int k) { return Jet(value, k); }

  Jet& operator+=(const Jet& o) {
    a += o.a;
    for (int i = 0; i < N; ++i) v[i] += o.v[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    a -= o.a;
    for (int i = 0; i < N; ++i) v[i] -= o.v[i];
    return *this;
  }
  Jet& operator*=(const Jet& o) { return *this = *this * o; }
  Jet& operator/=(const Jet& o) { return *this = *this / o; }

  friend Jet operator-(const Jet& x) {
    Jet r;
    r.a = -x.a;
    for (int i = 0; i < N; ++i) r.v[i] = -x.v[i];
    return r;
  }
  friend Jet operator+(Jet x, const Jet& y) { return x += y; }
  friend Jet operator-(Jet x, const Jet& y) { return x -= y; }
  friend Jet operator*(const Jet& x, const Jet& y) {
    Jet r;
    r.a = x.a * y.a;
    for (int i = 0; i < N; ++i) r.v[i] = x.a * y.v[i] + x.v[i] * y.a;
    return r;
  }
  friend Jet operator/(const Jet& x, const Jet& y) {
    Jet r;
    const T inv = T(1) / y.a;
    r.a = x.a * inv;
    for (int i = 0; i < N; ++i) r.v[i] = (x.v[i] - r.a * y.v[i]) * inv;
    return r;
  }
  friend Jet operator*(const Jet& x, T s) {
    Jet r;
    r.a = x.a * s;
    for (int i = 0; i < N; ++i) r.v[i] = x.v[i] * s;
    return r;
  }
  friend Jet operator*(T s, const Jet& x) { return x * s; }

  friend bool operator<(const Jet& x, const Jet& y) { return x.a < y.a; }
  friend bool operator>(const Jet& x, const Jet& y) { return x.a > y.a; }
  friend bool operator<=(const Jet& x, const Jet& y) { return x.a <= y.a; }
  friend bool operator>=(const Jet& x, const Jet& y) { return x.a >= y.a; }
};

namespace detail {
template <typename T, int N>
Jet<T, N> chain(const Jet<T, N>& x, T value, T derivative) {
  Jet<T, N> r;
  r.a = value;
  for (int i = 0; i < N; ++i) r.v[i] = derivative * x.v[i];
  return r;
}
}  // namespace detail

template <typename T, int N>
Jet<T, N> sqrt(const Jet<T, N>& x) {
  const T s = std::sqrt(x.a);
  return detail::chain(x, s, T(0.5) / s);
}
template <typename T, int N>
Jet<T, N> sin(const Jet<T, N>& x) {
  return detail::chain(x, std::sin(x.a), std::cos(x.a));
}
template <typename T, int N>
Jet<T, N> cos(const Jet<T, N>& x) {
  return detail::chain(x, std::cos(x.a), -std::sin(x.a));
}
template <typename T, int N>
Jet<T, N> acos(const Jet<T, N>& x) {
  return detail::chain(x, std::acos(x.a), T(-1) / std::sqrt(T(1) - x.a * x.a));
}
template <typename T, int N>
Jet<T, N> atan2(const Jet<T, N>& y, const Jet<T, N>& x) {
  const T denom = x.a * x.a + y.a * y.a;
  Jet<T, N> r;
  r.a = std::atan2(y.a, x.a);
  for (int i = 0; i < N; ++i) r.v[i] = (x.a * y.v[i] - y.a * x.v[i]) / denom;
  return r;
}
template <typename T, int N>
Jet<T, N> abs(const Jet<T, N>& x) {
  return x.a < T(0) ? -x : x;
}
template <typename T, int N>
bool isfinite(const Jet<T, N>& x) {
  if (!std::isfinite(x.a)) return false;
  for (const T& d : x.v)
    if (!std::isfinite(d)) return false;
  return true;
}

/// Primal value of a scalar or jet.
template <typename T>
T value_of(const T& x) {
  return x;
}
template <typename T, int N>
T value_of(const Jet<T, N>& x) {
  return x.a;
}

}  // namespace ncps
