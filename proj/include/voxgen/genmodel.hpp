#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxgen/nn.hpp"
#include "voxgen/tensor.hpp"
#include "voxgen/vst.hpp"

namespace voxgen {

// ---------------------------------------------------------------------------
// Likelihoods
// ---------------------------------------------------------------------------

/// log p(x | probs) for elementwise Bernoulli x in {0,1}. Probabilities must
/// lie strictly inside (0,1).
template <class S>
inline Tensor<S> bernoulli_logpdf(const Tensor<S>& x, const Tensor<S>& probs) {
  if (x.shape() != probs.shape())
    throw ShapeMismatch("bernoulli x/probs shape mismatch");
  for (S p : probs.data())
    if (!(p > S(0) && p < S(1)))
      throw DomainError("bernoulli probability outside (0,1)");
  Tensor<S> one = Tensor<S>::ones(x.shape());
  return sum(add(mul(x, log(probs)), mul(sub(one, x), log(sub(one, probs)))));
}

/// log p(x | sigmoid(logits)), evaluated as x*l - softplus(l) per element.
/// Never saturates; preferred on the training path.
template <class S>
inline Tensor<S> bernoulli_logpdf_logits(const Tensor<S>& x,
                                         const Tensor<S>& logits) {
  if (x.shape() != logits.shape())
    throw ShapeMismatch("bernoulli x/logits shape mismatch");
  return sum(sub(mul(x, logits), softplus(logits)));
}

/// Diagonal Gaussian log density, summed over elements. std must be > 0.
template <class S>
inline Tensor<S> gaussian_logpdf(const Tensor<S>& x, const Tensor<S>& mean,
                                 const Tensor<S>& std) {
  if (x.shape() != mean.shape() || x.shape() != std.shape())
    throw ShapeMismatch("gaussian x/mean/std shape mismatch");
  for (S s : std.data())
    if (!(s > S(0))) throw DomainError("gaussian std must be > 0");
  const S log2pi = static_cast<S>(1.8378770664093454836);  // log(2*pi)
  Tensor<S> d = div(sub(x, mean), std);
  Tensor<S> quad = mul_scalar(mul(d, d), S(-0.5));
  Tensor<S> norm = add_scalar(mul_scalar(log(std), S(-1)), S(-0.5) * log2pi);
  return sum(add(quad, norm));
}

/// log N(z; 0, I) summed over elements.
template <class S>
inline Tensor<S> standard_normal_logpdf(const Tensor<S>& z) {
  const S log2pi = static_cast<S>(1.8378770664093454836);  // log(2*pi)
  return add_scalar(mul_scalar(sum(mul(z, z)), S(-0.5)),
                    S(-0.5) * log2pi * static_cast<S>(z.size()));
}

/// Numerically stable log(sum(exp(v))) of plain values.
template <class S>
inline S logsumexp(const std::vector<S>& v) {
  if (v.empty()) throw DomainError("logsumexp of empty set");
  S m = v[0];
  for (S x : v) m = std::max(m, x);
  if (!std::isfinite(static_cast<double>(m))) return m;
  S acc = S(0);
  for (S x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

// ---------------------------------------------------------------------------
// Context
// ---------------------------------------------------------------------------

enum class ContextKind { none, class_label, views };

/// Conditioning information for one scene. Views are [H,W] images in [0,1]
/// paired with camera identities.
template <class S>
struct Context {
  ContextKind kind = ContextKind::none;
  std::size_t class_index = 0;
  std::vector<Tensor<S>> views;
  std::vector<std::size_t> camera_ids;
};

/// Affine [3,4] built from 12 unconstrained values as (I + A | t), so zero
/// input is the identity transform.
template <class S>
inline Tensor<S> affine_from_raw_3d(const Tensor<S>& raw12) {
  if (raw12.shape() != Shape{12})
    throw ShapeMismatch("affine raw must be [12]");
  static const std::vector<S> eye = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  Tensor<S> A = add(reshape(slice(raw12, 0, 0, 9), {3, 3}),
                    Tensor<S>::from({3, 3}, eye));
  Tensor<S> t = reshape(slice(raw12, 0, 9, 3), {3, 1});
  return concat<S>({A, t}, 1);
}

/// 2-D counterpart: 6 raw values to (I + A | t) as [2,3].
template <class S>
inline Tensor<S> affine_from_raw_2d(const Tensor<S>& raw6) {
  if (raw6.shape() != Shape{6}) throw ShapeMismatch("affine raw must be [6]");
  static const std::vector<S> eye = {1, 0, 0, 1};
  Tensor<S> A = add(reshape(slice(raw6, 0, 0, 4), {2, 2}),
                    Tensor<S>::from({2, 2}, eye));
  Tensor<S> t = reshape(slice(raw6, 0, 4, 2), {2, 1});
  return concat<S>({A, t}, 1);
}

/// Shared context read operator e_t = f_read(c, s_{t-1}). The none encoder
/// emits a constant zero vector; the label encoder selects a learned
/// embedding column; the view encoder takes an attention glimpse of every
/// view (parameters regressed from the previous state), runs a shared conv
/// feature extractor, appends a camera-identity embedding and sums the
/// per-view features, so any number of views can condition one model.
template <class S>
class ContextEncoder {
 public:
  struct Config {
    ContextKind kind = ContextKind::none;
    std::size_t out_dim = 8;    // e_t dimension
    std::size_t hidden = 64;    // state size driving the attention
    std::size_t n_classes = 0;  // label context
    std::size_t n_cams = 3;     // view context
    std::size_t glimpse = 6;    // glimpse extent g (g x g)
    std::size_t cam_emb = 4;
    std::size_t conv_ch = 6;
  };

  ContextEncoder() = default;
  ContextEncoder(const Config& cfg, Rng& rng) : cfg_(cfg) {
    switch (cfg.kind) {
      case ContextKind::none:
        break;
      case ContextKind::class_label:
        if (cfg.n_classes == 0) throw ConfigError("n_classes must be > 0");
        embed_ = glorot<S>({cfg.out_dim, cfg.n_classes}, rng);
        break;
      case ContextKind::views: {
        attn_ = Mlp<S>({cfg.hidden, 6}, {Act::identity}, rng);
        conv_w_ = glorot<S>({cfg.conv_ch, 1, 3, 3}, rng);
        conv_b_ = zero_param<S>({cfg.conv_ch});
        cam_table_ = glorot<S>({cfg.n_cams, cfg.cam_emb}, rng);
        const std::size_t feat =
            cfg.conv_ch * cfg.glimpse * cfg.glimpse + cfg.cam_emb;
        proj_ = Mlp<S>({feat, cfg.out_dim}, {Act::tanh}, rng);
        break;
      }
    }
  }

  std::size_t out_dim() const { return cfg_.out_dim; }
  ContextKind kind() const { return cfg_.kind; }

  Tensor<S> read(const Context<S>& ctx, const Tensor<S>& state_h) const {
    if (ctx.kind != cfg_.kind)
      throw ContextMismatch("context kind does not match the model");
    switch (cfg_.kind) {
      case ContextKind::none:
        return Tensor<S>::zeros({cfg_.out_dim});
      case ContextKind::class_label: {
        if (ctx.class_index >= cfg_.n_classes)
          throw ContextMismatch("class index out of range");
        // column of the embedding matrix
        return matmul(embed_, one_hot<S>(ctx.class_index, cfg_.n_classes));
      }
      case ContextKind::views: {
        if (ctx.views.size() != ctx.camera_ids.size())
          throw ContextMismatch("views/camera_ids length mismatch");
        Tensor<S> acc = Tensor<S>::zeros({cfg_.out_dim});
        Tensor<S> p = affine_from_raw_2d(attn_.forward(state_h));
        for (std::size_t v = 0; v < ctx.views.size(); ++v) {
          if (ctx.camera_ids[v] >= cfg_.n_cams)
            throw ContextMismatch("camera id out of range");
          if (ctx.views[v].rank() != 2)
            throw ShapeMismatch("view must be a rank-2 image");
          Tensor<S> glimpse = st_sample_2d(ctx.views[v], p,
                                           {cfg_.glimpse, cfg_.glimpse});
          Tensor<S> feat = relu(
              add(conv(reshape(glimpse, {1, 1, cfg_.glimpse, cfg_.glimpse}),
                       conv_w_, 2, 1, 1),
                  reshape(conv_b_, {1, cfg_.conv_ch, 1, 1})));
          Tensor<S> cam = matmul(
              transpose(cam_table_),
              one_hot<S>(ctx.camera_ids[v], cfg_.n_cams));
          Tensor<S> joint = concat<S>({flatten(feat), cam}, 0);
          acc = add(acc, proj_.forward(joint));
        }
        return acc;
      }
    }
    throw Error("unknown context kind");
  }

  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    switch (cfg_.kind) {
      case ContextKind::none:
        break;
      case ContextKind::class_label:
        embed_ = ps.add(prefix + ".embed", embed_);
        break;
      case ContextKind::views:
        attn_.register_params(ps, prefix + ".attn");
        conv_w_ = ps.add(prefix + ".conv.w", conv_w_);
        conv_b_ = ps.add(prefix + ".conv.b", conv_b_);
        cam_table_ = ps.add(prefix + ".cam", cam_table_);
        proj_.register_params(ps, prefix + ".proj");
        break;
    }
  }

 private:
  Config cfg_;
  Tensor<S> embed_;                  // class_label
  Mlp<S> attn_, proj_;               // views
  Tensor<S> conv_w_, conv_b_, cam_table_;
};

// ---------------------------------------------------------------------------
// Sequential generative core
// ---------------------------------------------------------------------------

enum class CanvasKind { volume, mesh };

/// The recurrent skeleton shared by generation and inference: context read,
/// state transition and canvas write. All step parameters are reused across
/// time, so the parameter count is independent of the number of steps.
template <class S>
class GenCore {
 public:
  struct Config {
    std::size_t z_dim = 3;
    std::size_t hidden = 64;
    std::size_t steps = 4;
    CanvasKind canvas_kind = CanvasKind::volume;
    Shape canvas_extents = {8, 8, 8};  // volume canvas [D,H,W]
    std::size_t write_block = 4;       // volume content block extent
    std::size_t mesh_canvas_dim = 168; // mesh: 162 radial + 6 pose
    typename ContextEncoder<S>::Config context;
  };

  GenCore() = default;
  GenCore(const Config& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.context.hidden = cfg.hidden;
    encoder_ = ContextEncoder<S>(cfg_.context, rng);
    lstm_ = LstmCell<S>(cfg.z_dim + cfg_.context.out_dim, cfg.hidden, rng);
    if (cfg.canvas_kind == CanvasKind::volume) {
      const std::size_t b = cfg.write_block;
      if (b == 0) throw ConfigError("write_block must be > 0");
      content_head_ = Mlp<S>({cfg.hidden, b * b * b}, {Act::identity}, rng);
      where_head_ = Mlp<S>({cfg.hidden, 12}, {Act::identity}, rng);
    } else {
      mesh_head_ =
          Mlp<S>({cfg.hidden, cfg.mesh_canvas_dim}, {Act::identity}, rng);
    }
  }

  const Config& config() const { return cfg_; }
  const ContextEncoder<S>& encoder() const { return encoder_; }

  using State = typename LstmCell<S>::State;

  State initial_state() const { return lstm_.initial_state(); }

  Tensor<S> initial_canvas() const {
    if (cfg_.canvas_kind == CanvasKind::volume)
      return Tensor<S>::zeros(cfg_.canvas_extents);
    return Tensor<S>::zeros({cfg_.mesh_canvas_dim});
  }

  /// e_t = f_read(c, s_{t-1})
  Tensor<S> read(const Context<S>& ctx, const State& prev) const {
    return encoder_.read(ctx, prev.h);
  }

  /// s_t = f_state(s_{t-1}, z_t, e_t)
  State step_state(const Tensor<S>& z, const Tensor<S>& e,
                   const State& prev) const {
    if (z.shape() != Shape{cfg_.z_dim})
      throw ShapeMismatch("latent must be [" + std::to_string(cfg_.z_dim) +
                          "]");
    return lstm_.forward(concat<S>({z, e}, 0), prev);
  }

  /// h_t = f_write(s_t, h_{t-1}): volumes place an affine-positioned content
  /// block additively; meshes accumulate a full canvas increment.
  Tensor<S> write(const State& s, const Tensor<S>& canvas_prev) const {
    if (cfg_.canvas_kind == CanvasKind::volume) {
      const std::size_t b = cfg_.write_block;
      Tensor<S> content =
          reshape(content_head_.forward(s.h), {b, b, b});
      Tensor<S> p = affine_from_raw_3d(where_head_.forward(s.h));
      return vst_write(canvas_prev, content, p);
    }
    return add(canvas_prev, mesh_head_.forward(s.h));
  }

  struct Rollout {
    Tensor<S> canvas;
    State final_state;
  };

  /// Executes the full write sequence for a given latent trajectory.
  Rollout rollout(const std::vector<Tensor<S>>& zs,
                  const Context<S>& ctx) const {
    if (zs.size() != cfg_.steps)
      throw ShapeMismatch("expected " + std::to_string(cfg_.steps) +
                          " latents, got " + std::to_string(zs.size()));
    State s = initial_state();
    Tensor<S> canvas = initial_canvas();
    for (const auto& z : zs) {
      Tensor<S> e = read(ctx, s);
      s = step_state(z, e, s);
      canvas = write(s, canvas);
    }
    return {canvas, s};
  }

  std::vector<Tensor<S>> sample_prior(Rng& rng) const {
    std::vector<Tensor<S>> zs;
    zs.reserve(cfg_.steps);
    for (std::size_t t = 0; t < cfg_.steps; ++t)
      zs.push_back(Tensor<S>::randn({cfg_.z_dim}, rng));
    return zs;
  }

  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    encoder_.register_params(ps, prefix + ".ctx");
    lstm_.register_params(ps, prefix + ".lstm");
    if (cfg_.canvas_kind == CanvasKind::volume) {
      content_head_.register_params(ps, prefix + ".what");
      where_head_.register_params(ps, prefix + ".where");
    } else {
      mesh_head_.register_params(ps, prefix + ".mesh");
    }
  }

 private:
  Config cfg_;
  ContextEncoder<S> encoder_;
  LstmCell<S> lstm_;
  Mlp<S> content_head_, where_head_;  // volume write
  Mlp<S> mesh_head_;                  // mesh write
};

}  // namespace voxgen
