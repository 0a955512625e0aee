#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ncps/error.hpp"
#include "ncps/params.hpp"

namespace ncps {

/// Reverse-mode scalar tape.
///
/// Every primitive appends one node holding its value and the local partials
/// with respect to at most two parents. A backward sweep from an output node
/// produces adjoints for every node in a single pass. Non-finite values or
/// partials abort recording with a TraceError naming the primitive.
template <typename T>
class Tape {
 public:
  class Var {
   public:
    Var() = default;
    T value() const { return tape_->nodes_[std::size_t(index_)].value; }
    int index() const { return index_; }
    Tape* tape() const { return tape_; }

   private:
    friend class Tape;
    Var(Tape* tape, int index) : tape_(tape), index_(index) {}
    Tape* tape_ = nullptr;
    int index_ = -1;
  };

  Var variable(T value) { return push("variable", value, -1, T(0), -1, T(0)); }
  Var constant(T value) { return push("constant", value, -1, T(0), -1, T(0)); }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Adjoints of `output` with respect to every recorded node.
  std::vector<T> backward(const Var& output) const {
    std::vector<T> adj(nodes_.size(), T(0));
    adj[std::size_t(output.index_)] = T(1);
    for (std::size_t k = nodes_.size(); k-- > 0;) {
      const Node& n = nodes_[k];
      const T a = adj[k];
      if (a == T(0)) continue;
      if (n.p0 >= 0) adj[std::size_t(n.p0)] += a * n.d0;
      if (n.p1 >= 0) adj[std::size_t(n.p1)] += a * n.d1;
    }
    return adj;
  }

  // Primitives. Names are reported in TraceError.
  Var add(const Var& a, const Var& b) { return push("add", a.value() + b.value(), a.index_, T(1), b.index_, T(1)); }
  Var sub(const Var& a, const Var& b) { return push("sub", a.value() - b.value(), a.index_, T(1), b.index_, T(-1)); }
  Var mul(const Var& a, const Var& b) {
    return push("mul", a.value() * b.value(), a.index_, b.value(), b.index_, a.value());
  }
  Var div(const Var& a, const Var& b) {
    const T inv = T(1) / b.value();
    const T q = a.value() * inv;
    return push("div", q, a.index_, inv, b.index_, -q * inv);
  }
  Var scale(const Var& a, T s) { return push("scale", a.value() * s, a.index_, s, -1, T(0)); }
  Var shift(const Var& a, T s) { return push("shift", a.value() + s, a.index_, T(1), -1, T(0)); }
  Var sin(const Var& a) { return push("sin", std::sin(a.value()), a.index_, std::cos(a.value()), -1, T(0)); }
  Var cos(const Var& a) { return push("cos", std::cos(a.value()), a.index_, -std::sin(a.value()), -1, T(0)); }
  Var sqrt(const Var& a) {
    const T s = std::sqrt(a.value());
    return push("sqrt", s, a.index_, T(0.5) / s, -1, T(0));
  }
  Var atan2(const Var& y, const Var& x) {
    const T yv = y.value(), xv = x.value();
    const T den = xv * xv + yv * yv;
    return push("atan2", std::atan2(yv, xv), y.index_, xv / den, x.index_, -yv / den);
  }
  /// max(a, 0); the subgradient at exactly 0 is 0.
  Var relu(const Var& a) {
    const bool on = a.value() > T(0);
    return push("relu", on ? a.value() : T(0), a.index_, on ? T(1) : T(0), -1, T(0));
  }
  /// a^p for a constant exponent.
  Var pow(const Var& a, T p) {
    const T v = std::pow(a.value(), p);
    return push("pow", v, a.index_, p * std::pow(a.value(), p - T(1)), -1, T(0));
  }
  /// Clamp into [lo, hi]; derivative 1 strictly inside, 0 at or beyond the bounds.
  Var clamp(const Var& a, T lo, T hi) {
    const T v = a.value();
    if (v <= lo) return push("clamp", lo, a.index_, T(0), -1, T(0));
    if (v >= hi) return push("clamp", hi, a.index_, T(0), -1, T(0));
    return push("clamp", v, a.index_, T(1), -1, T(0));
  }
  Var abs(const Var& a) {
    const T v = a.value();
    return push("abs", v < 0 ? -v : v, a.index_, v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)), -1, T(0));
  }
  Var dot(std::span<const Var> a, std::span<const Var> b) {
    if (a.size() != b.size() || a.empty()) throw TraceError("dot", "dot: operand size mismatch");
    Var acc = mul(a[0], b[0]);
    for (std::size_t i = 1; i < a.size(); ++i) acc = add(acc, mul(a[i], b[i]));
    return acc;
  }
  Var norm(std::span<const Var> a) {
    Var sq = dot(a, a);
    if (!(sq.value() > T(0))) throw TraceError("norm", "norm: derivative undefined at the zero vector");
    return sqrt(sq);
  }

  friend Var operator+(const Var& a, const Var& b) { return a.tape()->add(a, b); }
  friend Var operator-(const Var& a, const Var& b) { return a.tape()->sub(a, b); }
  friend Var operator*(const Var& a, const Var& b) { return a.tape()->mul(a, b); }
  friend Var operator/(const Var& a, const Var& b) { return a.tape()->div(a, b); }
  friend Var operator*(const Var& a, T s) { return a.tape()->scale(a, s); }
  friend Var operator*(T s, const Var& a) { return a.tape()->scale(a, s); }
  friend Var operator+(const Var& a, T s) { return a.tape()->shift(a, s); }
  friend Var operator+(T s, const Var& a) { return a.tape()->shift(a, s); }
  friend Var operator-(const Var& a, T s) { return a.tape()->shift(a, -s); }
  friend Var operator-(const Var& a) { return a.tape()->scale(a, T(-1)); }

 private:
  struct Node {
    T value;
    int p0;
    T d0;
    int p1;
    T d1;
  };

  Var push(const char* primitive, T value, int p0, T d0, int p1, T d1) {
    if (!std::isfinite(value) || !std::isfinite(d0) || !std::isfinite(d1))
      throw TraceError(primitive, std::string("non-finite intermediate in primitive '") + primitive + "'");
    nodes_.push_back(Node{value, p0, d0, p1, d1});
    return Var(this, int(nodes_.size() - 1));
  }

  std::vector<Node> nodes_;
};

template <typename T>
struct GradResult {
  T value{};
  std::vector<T> input_adjoints;
  std::vector<T> param_adjoints;  // flat, same layout as the ParamStore
};

/// Value and adjoints of a scalar function recorded on a tape.
///
/// `f(tape, inputs, params)` receives one Var per input scalar and one per
/// flat parameter and must return the scalar output Var. Parameters that do
/// not influence the output get adjoint exactly 0.
template <typename T, typename F>
GradResult<T> grad(F&& f, std::span<const T> inputs, const ParamStore<T>* params = nullptr) {
  using Var = typename Tape<T>::Var;
  Tape<T> tape;
  std::vector<Var> in, ps;
  in.reserve(inputs.size());
  for (const T& x : inputs) in.push_back(tape.variable(x));
  if (params) {
    ps.reserve(params->size());
    for (const T& x : params->flat()) ps.push_back(tape.variable(x));
  }
  const Var out = f(tape, std::span<const Var>(in), std::span<const Var>(ps));
  const std::vector<T> adj = tape.backward(out);
  GradResult<T> r;
  r.value = out.value();
  r.input_adjoints.reserve(in.size());
  for (const Var& v : in) r.input_adjoints.push_back(adj[std::size_t(v.index())]);
  r.param_adjoints.reserve(ps.size());
  for (const Var& v : ps) r.param_adjoints.push_back(adj[std::size_t(v.index())]);
  return r;
}

/// Spatial gradient (df/du, df/dv) of `f(tape, u, v)` at the given point.
template <typename T, typename F>
std::pair<T, T> grad_wrt_input(F&& f, T u, T v) {
  using Var = typename Tape<T>::Var;
  const T in[2] = {u, v};
  const GradResult<T> r = grad<T>(
      [&](Tape<T>& tape, std::span<const Var> x, std::span<const Var>) { return f(tape, x[0], x[1]); },
      std::span<const T>(in, 2));
  return {r.input_adjoints[0], r.input_adjoints[1]};
}

}  // namespace ncps
