#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include "voxgen/common.hpp"

namespace voxgen {

using Shape = std::vector<std::size_t>;

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

/// Ordered record of the primitive operations executed while the tape was
/// active. Recording order is execution order, so the record is always
/// topologically sorted. A tape belongs to one thread; independent tapes may
/// run concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  std::size_t size() const { return steps_.size(); }
  bool consumed() const { return consumed_; }

  void reset() {
    steps_.clear();
    consumed_ = false;
  }

  /// Replays recorded steps in reverse and marks the tape consumed.
  void replay_reverse() {
    if (consumed_) throw TapeConsumed("backward called twice on the same tape");
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    consumed_ = true;
  }

  static Tape*& active() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

  /// RAII activation of a tape on the current thread.
  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(active()) { active() = &t; }
    ~Scope() { active() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  /// RAII suppression of recording (pure evaluation).
  class Pause {
   public:
    Pause() : prev_(active()) { active() = nullptr; }
    ~Pause() { active() = prev_; }
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* prev_;
  };

 private:
  std::vector<std::function<void()>> steps_;
  bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

template <class S>
struct TensorNode {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // empty until first accumulation
  bool requires_grad = false;
  Tape* tape = nullptr;  // tape the producing op recorded on, null for leaves

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

/// Dense row-major multidimensional array with reverse-mode autodiff.
/// Copies are shallow (shared node); values are treated as immutable once a
/// tensor has entered a recorded computation.
template <class S>
class Tensor {
  static_assert(std::is_floating_point_v<S>);

 public:
  Tensor() : node_(std::make_shared<TensorNode<S>>()) {
    node_->value.assign(1, S(0));  // rank-0 zero
  }

  explicit Tensor(Shape shape, S fill = S(0), bool requires_grad = false)
      : node_(std::make_shared<TensorNode<S>>()) {
    node_->shape = std::move(shape);
    node_->value.assign(numel(node_->shape), fill);
    node_->requires_grad = requires_grad;
  }

  static Tensor from(Shape shape, std::vector<S> data,
                     bool requires_grad = false) {
    if (numel(shape) != data.size())
      throw ShapeMismatch("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(S v, bool requires_grad = false) {
    return from({}, {v}, requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), S(0), requires_grad);
  }

  static Tensor ones(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), S(1), requires_grad);
  }

  static Tensor randn(Shape shape, Rng& rng, bool requires_grad = false) {
    Tensor t(std::move(shape), S(0), requires_grad);
    for (auto& v : t.data()) v = static_cast<S>(rng.normal());
    return t;
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, S lo, S hi,
                             bool requires_grad = false) {
    Tensor t(std::move(shape), S(0), requires_grad);
    for (auto& v : t.data()) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  static constexpr Dtype dtype() {
    return sizeof(S) == 4 ? Dtype::f32 : Dtype::f64;
  }

  std::vector<S>& data() { return node_->value; }
  const std::vector<S>& data() const { return node_->value; }
  S operator[](std::size_t i) const { return node_->value[i]; }
  S& at(std::size_t i) { return node_->value[i]; }

  /// Value of a one-element tensor.
  S item() const {
    if (size() != 1) throw NotScalar("item() on tensor " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<S>& grad() const {
    if (!has_grad())
      throw MissingGradient("gradient not populated; run backward first");
    return node_->grad;
  }
  void clear_grad() { node_->grad.clear(); }

  /// Detached copy: same values, fresh leaf node.
  Tensor detach() const { return from(shape(), data(), false); }

  std::shared_ptr<TensorNode<S>>& node() { return node_; }
  const std::shared_ptr<TensorNode<S>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<S>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

/// True when the result of an op on these inputs should be recorded.
template <class S>
inline bool track(const Tensor<S>& a) {
  return Tape::active() != nullptr && a.requires_grad();
}
template <class S>
inline bool track(const Tensor<S>& a, const Tensor<S>& b) {
  return Tape::active() != nullptr && (a.requires_grad() || b.requires_grad());
}

/// Marks `out` as produced on the active tape and records the step.
template <class S>
inline void record(Tensor<S>& out, std::function<void()> step) {
  out.node()->requires_grad = true;
  out.node()->tape = Tape::active();
  Tape::active()->record(std::move(step));
}

}  // namespace detail

/// Populates grad fields of every requires_grad ancestor of `loss`.
/// The tape is consumed afterwards; reset it (or use a fresh one) before
/// recording again.
template <class S>
inline void backward(const Tensor<S>& loss) {
  if (loss.size() != 1)
    throw NotScalar("backward requires a scalar loss, got " +
                    shape_str(loss.shape()));
  Tape* tape = loss.node()->tape;
  if (tape == nullptr)
    throw NoActiveTape("loss was not recorded on any tape");
  loss.node()->ensure_grad();
  loss.node()->grad[0] = S(1);
  tape->replay_reverse();
}

// ---------------------------------------------------------------------------
// Broadcasting
// ---------------------------------------------------------------------------

/// NumPy-style right-aligned broadcast shape; mismatched extents must be 1.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw ShapeMismatch("cannot broadcast " + shape_str(a) + " with " +
                          shape_str(b));
    out[i] = std::max(ea, eb);
  }
  return out;
}

namespace detail {

/// Row-major strides of `in` aligned to broadcast result `out`; stride 0 on
/// broadcast axes.
inline std::vector<std::size_t> bcast_strides(const Shape& in,
                                              const Shape& out) {
  std::vector<std::size_t> st(out.size(), 0);
  auto in_st = row_major_strides(in);
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i)
    st[off + i] = (in[i] == 1 && out[off + i] != 1) ? 0 : in_st[i];
  return st;
}

/// Odometer over `shape` yielding flat offsets into two broadcast operands.
template <class Fn>
inline void for_each_bcast(const Shape& out, const std::vector<std::size_t>& sa,
                           const std::vector<std::size_t>& sb, Fn&& fn) {
  const std::size_t n = numel(out);
  std::vector<std::size_t> idx(out.size(), 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    fn(o, ia, ib);
    for (std::size_t ax = out.size(); ax-- > 0;) {
      idx[ax]++;
      ia += sa[ax];
      ib += sb[ax];
      if (idx[ax] < out[ax]) break;
      ia -= sa[ax] * out[ax];
      ib -= sb[ax] * out[ax];
      idx[ax] = 0;
    }
  }
}

// Generic binary elementwise op with broadcasting.
// fwd(a, b) -> out; dfa(a, b, out, g) -> grad contribution to a; likewise dfb.
template <class S, class F, class Da, class Db>
inline Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, F fwd,
                           Da dfa, Db dfb, const char* name) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor<S> out(out_shape);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();

  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  } else {
    auto sa = bcast_strides(a.shape(), out_shape);
    auto sb = bcast_strides(b.shape(), out_shape);
    for_each_bcast(out_shape, sa, sb,
                   [&](std::size_t o, std::size_t ia, std::size_t ib) {
                     ov[o] = fwd(av[ia], bv[ib]);
                   });
  }
  (void)name;

  if (track(a, b)) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    const Shape ash = a.shape(), bsh = b.shape(), osh = out_shape;
    record(out, [an, bn, on, dfa, dfb, ash, bsh, osh]() {
      if (on->grad.empty()) return;
      const bool same = ash == bsh;
      if (an->requires_grad) {
        an->ensure_grad();
        if (same) {
          for (std::size_t i = 0; i < on->grad.size(); ++i)
            an->grad[i] += dfa(an->value[i], bn->value[i], on->value[i],
                               on->grad[i]);
        } else {
          auto sa = bcast_strides(ash, osh);
          auto sb = bcast_strides(bsh, osh);
          for_each_bcast(osh, sa, sb,
                         [&](std::size_t o, std::size_t ia, std::size_t ib) {
                           an->grad[ia] += dfa(an->value[ia], bn->value[ib],
                                               on->value[o], on->grad[o]);
                         });
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        if (same) {
          for (std::size_t i = 0; i < on->grad.size(); ++i)
            bn->grad[i] += dfb(an->value[i], bn->value[i], on->value[i],
                               on->grad[i]);
        } else {
          auto sa = bcast_strides(ash, osh);
          auto sb = bcast_strides(bsh, osh);
          for_each_bcast(osh, sa, sb,
                         [&](std::size_t o, std::size_t ia, std::size_t ib) {
                           bn->grad[ib] += dfb(an->value[ia], bn->value[ib],
                                               on->value[o], on->grad[o]);
                         });
        }
      }
    });
  }
  return out;
}

// Generic unary elementwise op. dfx(x, y, g) -> grad contribution.
template <class S, class F, class Dx>
inline Tensor<S> unary_op(const Tensor<S>& a, F fwd, Dx dfx) {
  Tensor<S> out(a.shape());
  const auto& av = a.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i]);

  if (track(a)) {
    auto an = a.node();
    auto on = out.node();
    record(out, [an, on, dfx]() {
      if (on->grad.empty() || !an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += dfx(an->value[i], on->value[i], on->grad[i]);
    });
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise operations
// ---------------------------------------------------------------------------

template <class S>
inline Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(
      a, b, [](S x, S y) { return x + y; },
      [](S, S, S, S g) { return g; }, [](S, S, S, S g) { return g; }, "add");
}

template <class S>
inline Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(
      a, b, [](S x, S y) { return x - y; },
      [](S, S, S, S g) { return g; }, [](S, S, S, S g) { return -g; }, "sub");
}

template <class S>
inline Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(
      a, b, [](S x, S y) { return x * y; },
      [](S, S y, S, S g) { return g * y; },
      [](S x, S, S, S g) { return g * x; }, "mul");
}

template <class S>
inline Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  for (S y : b.data())
    if (y == S(0)) throw DomainError("division by zero");
  return detail::binary_op(
      a, b, [](S x, S y) { return x / y; },
      [](S, S y, S, S g) { return g / y; },
      [](S x, S y, S, S g) { return -g * x / (y * y); }, "div");
}

template <class S>
inline Tensor<S> neg(const Tensor<S>& a) {
  return detail::unary_op(
      a, [](S x) { return -x; }, [](S, S, S g) { return -g; });
}

template <class S>
inline Tensor<S> exp(const Tensor<S>& a) {
  return detail::unary_op(
      a, [](S x) { return std::exp(x); }, [](S, S y, S g) { return g * y; });
}

template <class S>
inline Tensor<S> log(const Tensor<S>& a) {
  for (S x : a.data())
    if (!(x > S(0))) throw DomainError("log of non-positive value");
  return detail::unary_op(
      a, [](S x) { return std::log(x); }, [](S x, S, S g) { return g / x; });
}

template <class S>
inline S sigmoid_scalar(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <class S>
inline Tensor<S> sigmoid(const Tensor<S>& a) {
  return detail::unary_op(
      a, [](S x) { return sigmoid_scalar(x); },
      [](S, S y, S g) { return g * y * (S(1) - y); });
}

template <class S>
inline Tensor<S> tanh(const Tensor<S>& a) {
  return detail::unary_op(
      a, [](S x) { return std::tanh(x); },
      [](S, S y, S g) { return g * (S(1) - y * y); });
}

template <class S>
inline Tensor<S> relu(const Tensor<S>& a) {
  return detail::unary_op(
      a, [](S x) { return x > S(0) ? x : S(0); },
      [](S x, S, S g) { return x > S(0) ? g : S(0); });
}

/// log(1 + exp(x)), evaluated without overflow for large |x|.
template <class S>
inline Tensor<S> softplus(const Tensor<S>& a) {
  return detail::unary_op(
      a,
      [](S x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, S(0)); },
      [](S x, S, S g) { return g * sigmoid_scalar(x); });
}

template <class S>
inline Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  return detail::unary_op(
      a, [c](S x) { return x + c; }, [](S, S, S g) { return g; });
}

template <class S>
inline Tensor<S> mul_scalar(const Tensor<S>& a, S c) {
  return detail::unary_op(
      a, [c](S x) { return x * c; }, [c](S, S, S g) { return g * c; });
}

template <class S>
inline Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, b);
}
template <class S>
inline Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) {
  return sub(a, b);
}
template <class S>
inline Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) {
  return mul(a, b);
}
template <class S>
inline Tensor<S> operator-(const Tensor<S>& a) {
  return neg(a);
}
template <class S>
inline Tensor<S> operator*(S c, const Tensor<S>& a) {
  return mul_scalar(a, c);
}

enum class EwOp { add, mul, sub, div, sigmoid, tanh, exp, log, neg };

/// Enum-dispatched elementwise op; unary ops ignore `b`.
template <class S>
inline Tensor<S> elementwise(EwOp op, const Tensor<S>& a,
                             const Tensor<S>* b = nullptr) {
  auto need_b = [&]() -> const Tensor<S>& {
    if (!b) throw ShapeMismatch("binary elementwise op requires two operands");
    return *b;
  };
  switch (op) {
    case EwOp::add: return add(a, need_b());
    case EwOp::mul: return mul(a, need_b());
    case EwOp::sub: return sub(a, need_b());
    case EwOp::div: return div(a, need_b());
    case EwOp::sigmoid: return sigmoid(a);
    case EwOp::tanh: return tanh(a);
    case EwOp::exp: return exp(a);
    case EwOp::log: return log(a);
    case EwOp::neg: return neg(a);
  }
  throw Error("unknown elementwise op");
}

// ---------------------------------------------------------------------------
// Shape operations
// ---------------------------------------------------------------------------

template <class S>
inline Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ShapeMismatch("reshape " + shape_str(a.shape()) + " -> " +
                        shape_str(shape) + " changes element count");
  Tensor<S> out = Tensor<S>::from(std::move(shape), a.data());
  if (detail::track(a)) {
    auto an = a.node();
    auto on = out.node();
    detail::record(out, [an, on]() {
      if (on->grad.empty() || !an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i];
    });
  }
  return out;
}

template <class S>
inline Tensor<S> flatten(const Tensor<S>& a) {
  return reshape(a, {a.size()});
}

template <class S>
inline Tensor<S> transpose(const Tensor<S>& a) {
  if (a.rank() != 2)
    throw ShapeMismatch("transpose requires rank 2, got " +
                        shape_str(a.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<S> out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j * m + i) = a[i * n + j];
  if (detail::track(a)) {
    auto an = a.node();
    auto on = out.node();
    detail::record(out, [an, on, m, n]() {
      if (on->grad.empty() || !an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          an->grad[i * n + j] += on->grad[j * m + i];
    });
  }
  return out;
}

template <class S>
inline Tensor<S> concat(const std::vector<Tensor<S>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeMismatch("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw InvalidAxis("concat axis out of range");
  Shape out_shape = s0;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != s0.size())
      throw ShapeMismatch("concat rank mismatch");
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (i != axis && p.shape()[i] != s0[i])
        throw ShapeMismatch("concat extent mismatch off-axis");
    total += p.shape()[axis];
  }
  out_shape[axis] = total;
  Tensor<S> out(out_shape);

  // outer = product of extents before axis, inner = product after
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

  std::size_t offset = 0;  // running offset along the axis
  bool any_track = false;
  for (const auto& p : parts)
    if (detail::track(p)) any_track = true;

  std::vector<std::pair<std::shared_ptr<TensorNode<S>>, std::size_t>> spans;
  for (const auto& p : parts) {
    const std::size_t e = p.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(p.data().begin() + o * e * inner,
                p.data().begin() + (o + 1) * e * inner,
                out.data().begin() + (o * total + offset) * inner);
    spans.emplace_back(p.node(), offset);
    offset += e;
  }

  if (any_track) {
    auto on = out.node();
    detail::record(out, [on, spans, outer, inner, total, axis]() {
      if (on->grad.empty()) return;
      for (auto& [pn, off] : spans) {
        if (!pn->requires_grad) continue;
        pn->ensure_grad();
        const std::size_t e = pn->shape[axis];
        for (std::size_t o = 0; o < outer; ++o) {
          const S* src = on->grad.data() + (o * total + off) * inner;
          S* dst = pn->grad.data() + o * e * inner;
          for (std::size_t i = 0; i < e * inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

template <class S>
inline Tensor<S> slice(const Tensor<S>& a, std::size_t axis, std::size_t start,
                       std::size_t len) {
  if (axis >= a.rank()) throw InvalidAxis("slice axis out of range");
  if (start + len > a.shape()[axis])
    throw ShapeMismatch("slice range exceeds extent");
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  Tensor<S> out(out_shape);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
  const std::size_t e = a.shape()[axis];
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(a.data().begin() + (o * e + start) * inner,
              a.data().begin() + (o * e + start + len) * inner,
              out.data().begin() + o * len * inner);
  if (detail::track(a)) {
    auto an = a.node();
    auto on = out.node();
    detail::record(out, [an, on, outer, inner, e, start, len]() {
      if (on->grad.empty() || !an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        const S* src = on->grad.data() + o * len * inner;
        S* dst = an->grad.data() + (o * e + start) * inner;
        for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix multiplication
// ---------------------------------------------------------------------------

/// [M,K]x[K,N] -> [M,N]. Rank-1 operands are promoted ([K] as [1,K] on the
/// left, [K,1] on the right) and the promoted axis is squeezed from the
/// result. Backward: grad_a = g.b^T, grad_b = a^T.g.
template <class S>
inline Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  const bool a_vec = a.rank() == 1, b_vec = b.rank() == 1;
  if (a.rank() > 2 || b.rank() > 2 || a.rank() == 0 || b.rank() == 0)
    throw ShapeMismatch("matmul requires rank 1 or 2 operands");
  const std::size_t m = a_vec ? 1 : a.shape()[0];
  const std::size_t k = a_vec ? a.shape()[0] : a.shape()[1];
  const std::size_t kb = b_vec ? b.shape()[0] : b.shape()[0];
  const std::size_t n = b_vec ? 1 : b.shape()[1];
  if (k != kb)
    throw ShapeMismatch("matmul inner extents differ: " +
                        shape_str(a.shape()) + " vs " + shape_str(b.shape()));

  Shape out_shape;
  if (!a_vec) out_shape.push_back(m);
  if (!b_vec) out_shape.push_back(n);
  Tensor<S> out(out_shape);

  const S* av = a.data().data();
  const S* bv = b.data().data();
  S* ov = out.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const S x = av[i * k + p];
      if (x == S(0)) continue;
      const S* brow = bv + p * n;
      S* orow = ov + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }

  if (detail::track(a, b)) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    detail::record(out, [an, bn, on, m, k, n]() {
      if (on->grad.empty()) return;
      const S* g = on->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        // grad_a[i,p] += sum_j g[i,j] * b[p,j]
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            S acc = S(0);
            const S* grow = g + i * n;
            const S* brow = bn->value.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            an->grad[i * k + p] += acc;
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        // grad_b[p,j] += sum_i a[i,p] * g[i,j]
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const S x = an->value[i * k + p];
            if (x == S(0)) continue;
            const S* grow = g + i * n;
            S* brow = bn->grad.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += x * grow[j];
          }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation)
// ---------------------------------------------------------------------------

namespace detail {

/// Value-only description of a convolution instance so the backward closure
/// outlives the constructing call.
struct ConvPlan {
  std::size_t batch, cin, cout;
  std::size_t in[3], ker[3], out[3];
  int stride;
  std::ptrdiff_t pad[3];
  std::size_t x_c, w_c;  // per-channel element counts
};

template <class Fn>
inline void conv_iterate(const ConvPlan& p, Fn&& cell) {
  for (std::size_t b = 0; b < p.batch; ++b)
    for (std::size_t oc = 0; oc < p.cout; ++oc)
      for (std::size_t od = 0; od < p.out[0]; ++od)
        for (std::size_t oh = 0; oh < p.out[1]; ++oh)
          for (std::size_t ow = 0; ow < p.out[2]; ++ow) {
            const std::size_t yi =
                ((b * p.cout + oc) * p.out[0] + od) * p.out[1] * p.out[2] +
                oh * p.out[2] + ow;
            for (std::size_t ic = 0; ic < p.cin; ++ic)
              for (std::size_t kd = 0; kd < p.ker[0]; ++kd) {
                const std::ptrdiff_t id =
                    static_cast<std::ptrdiff_t>(od) * p.stride - p.pad[0] + kd;
                if (id < 0 || id >= static_cast<std::ptrdiff_t>(p.in[0]))
                  continue;
                for (std::size_t kh = 0; kh < p.ker[1]; ++kh) {
                  const std::ptrdiff_t ih =
                      static_cast<std::ptrdiff_t>(oh) * p.stride - p.pad[1] +
                      kh;
                  if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(p.in[1]))
                    continue;
                  for (std::size_t kw = 0; kw < p.ker[2]; ++kw) {
                    const std::ptrdiff_t iw =
                        static_cast<std::ptrdiff_t>(ow) * p.stride - p.pad[2] +
                        kw;
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(p.in[2]))
                      continue;
                    const std::size_t xi =
                        (b * p.cin + ic) * p.x_c +
                        (static_cast<std::size_t>(id) * p.in[1] +
                         static_cast<std::size_t>(ih)) *
                            p.in[2] +
                        static_cast<std::size_t>(iw);
                    const std::size_t wi = (oc * p.cin + ic) * p.w_c +
                                           (kd * p.ker[1] + kh) * p.ker[2] +
                                           kw;
                    cell(yi, xi, wi);
                  }
                }
              }
          }
}

}  // namespace detail

/// 2-D/3-D cross-correlation. Layouts: x [N,C,(D,)H,W], w [O,C,(kd,)kh,kw].
/// Output spatial extent per axis: floor((in + 2*pad - k)/stride) + 1.
template <class S>
inline Tensor<S> conv(const Tensor<S>& x, const Tensor<S>& w, int dims,
                      int stride, int pad) {
  if (dims != 2 && dims != 3)
    throw ShapeMismatch("conv supports dims 2 or 3");
  if (stride < 1) throw InvalidStride("conv stride must be >= 1");
  if (pad < 0) throw InvalidStride("conv pad must be >= 0");
  const std::size_t sd = static_cast<std::size_t>(dims);
  if (x.rank() != sd + 2 || w.rank() != sd + 2)
    throw ShapeMismatch("conv ranks: x " + shape_str(x.shape()) + ", w " +
                        shape_str(w.shape()));
  if (x.shape()[1] != w.shape()[1])
    throw ShapeMismatch("conv channel mismatch");

  const std::size_t batch = x.shape()[0];
  const std::size_t cin = x.shape()[1];
  const std::size_t cout = w.shape()[0];

  // Degenerate leading spatial axis for the 2-D case keeps one code path.
  std::size_t in[3] = {1, 1, 1}, ker[3] = {1, 1, 1};
  for (std::size_t i = 0; i < sd; ++i) {
    in[3 - sd + i] = x.shape()[2 + i];
    ker[3 - sd + i] = w.shape()[2 + i];
  }
  std::size_t out[3];
  for (int i = 0; i < 3; ++i) {
    const std::ptrdiff_t padded =
        static_cast<std::ptrdiff_t>(in[i]) + 2 * (i >= 3 - dims ? pad : 0);
    if (padded < static_cast<std::ptrdiff_t>(ker[i]))
      throw ShapeMismatch("conv kernel larger than padded input");
    out[i] = static_cast<std::size_t>(padded - ker[i]) / stride + 1;
  }

  Shape out_shape{batch, cout};
  for (std::size_t i = 3 - sd; i < 3; ++i) out_shape.push_back(out[i]);
  Tensor<S> y(out_shape);

  detail::ConvPlan plan;
  plan.batch = batch;
  plan.cin = cin;
  plan.cout = cout;
  for (int i = 0; i < 3; ++i) {
    plan.in[i] = in[i];
    plan.ker[i] = ker[i];
    plan.out[i] = out[i];
    plan.pad[i] = i >= 3 - dims ? pad : 0;
  }
  plan.stride = stride;
  plan.x_c = in[0] * in[1] * in[2];
  plan.w_c = ker[0] * ker[1] * ker[2];

  {
    const auto& xv = x.data();
    const auto& wv = w.data();
    auto& yv = y.data();
    detail::conv_iterate(plan,
                         [&](std::size_t yi, std::size_t xi, std::size_t wi) {
                           yv[yi] += xv[xi] * wv[wi];
                         });
  }

  if (detail::track(x, w)) {
    auto xn = x.node();
    auto wn = w.node();
    auto yn = y.node();
    detail::record(y, [xn, wn, yn, plan]() {
      if (yn->grad.empty()) return;
      const bool gx = xn->requires_grad, gw = wn->requires_grad;
      if (!gx && !gw) return;
      if (gx) xn->ensure_grad();
      if (gw) wn->ensure_grad();
      detail::conv_iterate(
          plan, [&](std::size_t yi, std::size_t xi, std::size_t wi) {
            const S g = yn->grad[yi];
            if (gx) xn->grad[xi] += wn->value[wi] * g;
            if (gw) wn->grad[wi] += xn->value[xi] * g;
          });
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class ReduceOp { sum, mean, max };

/// Reduces over `axes` (empty = all axes); reduced axes are removed from the
/// shape. Max routes gradient to the first argmax in row-major scan order.
template <class S>
inline Tensor<S> reduce(ReduceOp op, const Tensor<S>& x,
                        std::vector<std::size_t> axes) {
  const std::size_t r = x.rank();
  if (axes.empty()) {
    axes.resize(r);
    std::iota(axes.begin(), axes.end(), std::size_t{0});
  }
  std::vector<bool> reduced(r, false);
  for (auto a : axes) {
    if (a >= r) throw InvalidAxis("reduce axis " + std::to_string(a) +
                                  " out of range for " + shape_str(x.shape()));
    if (reduced[a]) throw InvalidAxis("duplicate reduce axis");
    reduced[a] = true;
  }

  Shape out_shape;
  std::size_t group = 1;
  for (std::size_t i = 0; i < r; ++i) {
    if (reduced[i]) group *= x.shape()[i];
    else out_shape.push_back(x.shape()[i]);
  }
  Tensor<S> out(out_shape,
                op == ReduceOp::max ? -std::numeric_limits<S>::infinity()
                                    : S(0));

  // Map each input flat index to its output flat index.
  auto in_strides = row_major_strides(x.shape());
  std::vector<std::size_t> out_stride_of_axis(r, 0);
  {
    auto os = row_major_strides(out_shape);
    std::size_t oi = 0;
    for (std::size_t i = 0; i < r; ++i)
      if (!reduced[i]) out_stride_of_axis[i] = os[oi++];
  }

  std::vector<std::size_t> argmax;
  if (op == ReduceOp::max) argmax.assign(out.size(), 0);

  std::vector<std::size_t> idx(r, 0);
  std::size_t oi = 0;
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t fi = 0; fi < xv.size(); ++fi) {
    switch (op) {
      case ReduceOp::sum:
      case ReduceOp::mean:
        ov[oi] += xv[fi];
        break;
      case ReduceOp::max:
        if (xv[fi] > ov[oi]) {  // strict: first argmax wins ties
          ov[oi] = xv[fi];
          argmax[oi] = fi;
        }
        break;
    }
    for (std::size_t ax = r; ax-- > 0;) {
      idx[ax]++;
      if (!reduced[ax]) oi += out_stride_of_axis[ax];
      if (idx[ax] < x.shape()[ax]) break;
      if (!reduced[ax]) oi -= out_stride_of_axis[ax] * x.shape()[ax];
      idx[ax] = 0;
    }
  }
  if (op == ReduceOp::mean)
    for (auto& v : ov) v /= static_cast<S>(group);

  if (detail::track(x)) {
    auto xn = x.node();
    auto on = out.node();
    const Shape xsh = x.shape();
    detail::record(out, [xn, on, op, group, reduced, out_stride_of_axis, xsh,
                         argmax]() {
      if (on->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      if (op == ReduceOp::max) {
        for (std::size_t o = 0; o < on->grad.size(); ++o)
          xn->grad[argmax[o]] += on->grad[o];
        return;
      }
      const S scale = op == ReduceOp::mean ? S(1) / static_cast<S>(group)
                                           : S(1);
      const std::size_t r2 = xsh.size();
      std::vector<std::size_t> idx2(r2, 0);
      std::size_t o2 = 0;
      for (std::size_t fi = 0; fi < xn->grad.size(); ++fi) {
        xn->grad[fi] += on->grad[o2] * scale;
        for (std::size_t ax = r2; ax-- > 0;) {
          idx2[ax]++;
          if (!reduced[ax]) o2 += out_stride_of_axis[ax];
          if (idx2[ax] < xsh[ax]) break;
          if (!reduced[ax]) o2 -= out_stride_of_axis[ax] * xsh[ax];
          idx2[ax] = 0;
        }
      }
    });
  }
  return out;
}

template <class S>
inline Tensor<S> sum(const Tensor<S>& x) {
  return reduce(ReduceOp::sum, x, {});
}

template <class S>
inline Tensor<S> mean(const Tensor<S>& x) {
  return reduce(ReduceOp::mean, x, {});
}

}  // namespace voxgen
