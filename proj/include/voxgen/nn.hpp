#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "voxgen/tensor.hpp"

namespace voxgen {

/// Glorot-uniform init: U(-l, l) with l = sqrt(6 / (fan_in + fan_out)).
/// Linear weights are [out, in]; conv kernels [O, C, k...] use receptive
/// field times channel count as the fans.
template <class S>
inline Tensor<S> glorot(Shape shape, Rng& rng) {
  if (shape.size() < 2) throw ShapeMismatch("glorot needs rank >= 2");
  std::size_t rf = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) rf *= shape[i];
  const double fan_out = static_cast<double>(shape[0] * rf);
  const double fan_in = static_cast<double>(shape[1] * rf);
  const double lim = std::sqrt(6.0 / (fan_in + fan_out));
  auto t = Tensor<S>::rand_uniform(std::move(shape), rng, S(-lim), S(lim));
  t.set_requires_grad(true);
  return t;
}

template <class S>
inline Tensor<S> zero_param(Shape shape) {
  return Tensor<S>::zeros(std::move(shape), true);
}

/// y = W.x + b for vector x [in], or x.W^T + b for batched x [B, in].
template <class S>
inline Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& W,
                        const Tensor<S>& b) {
  if (W.rank() != 2) throw ShapeMismatch("linear weight must be rank 2");
  if (x.rank() == 1) return add(matmul(W, x), b);
  if (x.rank() == 2) return add(matmul(x, transpose(W)), b);
  throw ShapeMismatch("linear input must be rank 1 or 2");
}

template <class S>
inline Tensor<S> one_hot(std::size_t index, std::size_t n) {
  if (index >= n) throw InvalidAxis("one_hot index out of range");
  Tensor<S> t({n});
  t.at(index) = S(1);
  return t;
}

// ---------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------

/// Flat named view over a model's parameters. Names are stable across runs
/// and serve as checkpoint keys; insertion order is the optimizer order.
template <class S>
class ParamStore {
 public:
  Tensor<S>& add(const std::string& name, Tensor<S> t) {
    for (auto& [n, _] : items_)
      if (n == name) throw Error("duplicate parameter name: " + name);
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }

  Tensor<S>& get(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return t;
    throw Error("unknown parameter: " + name);
  }

  bool has(const std::string& name) const {
    for (auto& [n, _] : items_)
      if (n == name) return true;
    return false;
  }

  std::size_t size() const { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
  }

  void clear_grads() {
    for (auto& [_, t] : items_) t.clear_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor<S>>> items_;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

enum class Act { identity, relu, tanh, sigmoid };

template <class S>
inline Tensor<S> apply_act(Act a, const Tensor<S>& x) {
  switch (a) {
    case Act::identity: return x;
    case Act::relu: return relu(x);
    case Act::tanh: return tanh(x);
    case Act::sigmoid: return sigmoid(x);
  }
  throw Error("unknown activation");
}

/// Fully connected stack. dims = {in, h1, ..., out}; acts has one entry per
/// layer (dims.size() - 1).
template <class S>
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<std::size_t>& dims, std::vector<Act> acts, Rng& rng)
      : acts_(std::move(acts)) {
    if (dims.size() < 2 || acts_.size() != dims.size() - 1)
      throw Error("mlp dims/acts mismatch");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      Ws_.push_back(glorot<S>({dims[i + 1], dims[i]}, rng));
      bs_.push_back(zero_param<S>({dims[i + 1]}));
    }
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> h = x;
    for (std::size_t i = 0; i < Ws_.size(); ++i)
      h = apply_act(acts_[i], linear(h, Ws_[i], bs_[i]));
    return h;
  }

  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    for (std::size_t i = 0; i < Ws_.size(); ++i) {
      Ws_[i] = ps.add(prefix + ".w" + std::to_string(i), Ws_[i]);
      bs_[i] = ps.add(prefix + ".b" + std::to_string(i), bs_[i]);
    }
  }

  std::size_t out_dim() const { return Ws_.back().shape()[0]; }

 private:
  std::vector<Tensor<S>> Ws_, bs_;
  std::vector<Act> acts_;
};

/// Single LSTM cell with fused gate weights. Gate order i, f, g, o in the
/// fused [4H, X+H] matrix. State is a (h, c) pair of H-vectors.
template <class S>
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::size_t input_dim, std::size_t hidden_dim, Rng& rng)
      : input_dim_(input_dim), hidden_dim_(hidden_dim) {
    W_ = glorot<S>({4 * hidden_dim, input_dim + hidden_dim}, rng);
    b_ = zero_param<S>({4 * hidden_dim});
  }

  struct State {
    Tensor<S> h, c;
  };

  State initial_state() const {
    return {Tensor<S>::zeros({hidden_dim_}), Tensor<S>::zeros({hidden_dim_})};
  }

  State forward(const Tensor<S>& x, const State& prev) const {
    if (x.rank() != 1 || x.shape()[0] != input_dim_)
      throw ShapeMismatch("lstm input dim");
    Tensor<S> xh = concat<S>({x, prev.h}, 0);
    Tensor<S> gates = add(matmul(W_, xh), b_);
    const std::size_t H = hidden_dim_;
    Tensor<S> i = sigmoid(slice(gates, 0, 0, H));
    Tensor<S> f = sigmoid(slice(gates, 0, H, H));
    Tensor<S> g = tanh(slice(gates, 0, 2 * H, H));
    Tensor<S> o = sigmoid(slice(gates, 0, 3 * H, H));
    Tensor<S> c = add(mul(f, prev.c), mul(i, g));
    Tensor<S> h = mul(o, tanh(c));
    return {h, c};
  }

  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    W_ = ps.add(prefix + ".w", W_);
    b_ = ps.add(prefix + ".b", b_);
  }

  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t input_dim() const { return input_dim_; }

  Tensor<S>& weight() { return W_; }
  Tensor<S>& bias() { return b_; }

 private:
  std::size_t input_dim_ = 0, hidden_dim_ = 0;
  Tensor<S> W_, b_;
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// Adam with bias correction. Step order follows the store's insertion
/// order; moment buffers are keyed by that order and sized lazily. Gradients
/// are cleared after a successful step.
template <class S>
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore<S>& params) {
    if (slots_.empty()) {
      slots_.resize(params.size());
      std::size_t i = 0;
      for (auto& [_, t] : params) {
        slots_[i].m.assign(t.size(), S(0));
        slots_[i].v.assign(t.size(), S(0));
        ++i;
      }
    }
    if (slots_.size() != params.size())
      throw Error("optimizer state does not match parameter list");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t i = 0;
    for (auto& [name, p] : params) {
      if (!p.has_grad())
        throw MissingGradient("no gradient for parameter " + name);
      auto& slot = slots_[i++];
      const auto& g = p.grad();
      auto& val = p.data();
      for (std::size_t j = 0; j < val.size(); ++j) {
        slot.m[j] = S(beta1_) * slot.m[j] + S(1.0 - beta1_) * g[j];
        slot.v[j] = S(beta2_) * slot.v[j] + S(1.0 - beta2_) * g[j] * g[j];
        const double mhat = static_cast<double>(slot.m[j]) / bc1;
        const double vhat = static_cast<double>(slot.v[j]) / bc2;
        val[j] -= static_cast<S>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
    params.clear_grads();
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::int64_t step_count() const { return t_; }

  struct Slot {
    std::vector<S> m, v;
  };
  std::vector<Slot>& slots() { return slots_; }
  void set_step_count(std::int64_t t) { t_ = t; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace voxgen
