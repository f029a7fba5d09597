#pragma once

#include <string>
#include <vector>

#include "voxgen/genmodel.hpp"
#include "voxgen/mesh.hpp"
#include "voxgen/nn.hpp"
#include "voxgen/render.hpp"
#include "voxgen/vst.hpp"

namespace voxgen {

/// Identity projection: the canvas itself is the logit volume, so the model
/// emits x over the same lattice it paints. No parameters.
template <class S>
class IdentityProjection {
 public:
  Tensor<S> logits(const Tensor<S>& canvas,
                   const typename LstmCell<S>::State&) const {
    if (canvas.rank() != 3)
      throw ShapeMismatch("identity projection expects a volume canvas");
    return canvas;
  }

  Tensor<S> probs(const Tensor<S>& canvas,
                  const typename LstmCell<S>::State& s) const {
    return sigmoid(logits(canvas, s));
  }

  void register_params(ParamStore<S>&, const std::string&) {}
};

/// Learned single-view camera: a pose regressed from the final state (plus a
/// learned per-camera offset) drives a volumetric transform of the canvas,
/// followed by 3-D convolutions, folding depth into channels, and 2-D
/// convolutions down to an image logit map. Several cameras share every
/// parameter except their pose offsets.
template <class S>
class CameraProjection {
 public:
  struct Config {
    std::size_t hidden = 64;
    Shape canvas_extents = {8, 8, 8};
    std::size_t n_cams = 3;
    std::size_t conv3_ch = 4;
    std::size_t conv2_ch = 4;
  };

  CameraProjection() = default;
  CameraProjection(const Config& cfg, Rng& rng) : cfg_(cfg) {
    pose_ = Mlp<S>({cfg.hidden, 12}, {Act::identity}, rng);
    pose_offsets_ = zero_param<S>({cfg.n_cams, 12});
    w3a_ = glorot<S>({cfg.conv3_ch, 1, 3, 3, 3}, rng);
    b3a_ = zero_param<S>({cfg.conv3_ch});
    w3b_ = glorot<S>({cfg.conv3_ch, cfg.conv3_ch, 3, 3, 3}, rng);
    b3b_ = zero_param<S>({cfg.conv3_ch});
    const std::size_t folded = cfg.conv3_ch * cfg.canvas_extents[0];
    w2a_ = glorot<S>({cfg.conv2_ch, folded, 3, 3}, rng);
    b2a_ = zero_param<S>({cfg.conv2_ch});
    w2b_ = glorot<S>({1, cfg.conv2_ch, 3, 3}, rng);
    b2b_ = zero_param<S>({1});
  }

  const Config& config() const { return cfg_; }

  /// Pose parameters for a camera: shared regression plus its own offset.
  Tensor<S> pose(const typename LstmCell<S>::State& s,
                 std::size_t cam_id) const {
    if (cam_id >= cfg_.n_cams) throw InvalidCamera("camera id out of range");
    Tensor<S> off = reshape(
        slice(pose_offsets_, 0, cam_id, 1), {std::size_t{12}});
    return add(pose_.forward(s.h), off);
  }

  /// Image logits [H,W] for one camera.
  Tensor<S> logits(const Tensor<S>& canvas,
                   const typename LstmCell<S>::State& s,
                   std::size_t cam_id) const {
    if (canvas.shape() != cfg_.canvas_extents)
      throw ShapeMismatch("canvas extents do not match camera projection");
    const std::size_t D = cfg_.canvas_extents[0];
    const std::size_t H = cfg_.canvas_extents[1];
    const std::size_t W = cfg_.canvas_extents[2];

    Tensor<S> p = affine_from_raw_3d(pose(s, cam_id));
    Tensor<S> view = vst_sample(canvas, p, cfg_.canvas_extents);

    Tensor<S> v = reshape(view, {1, 1, D, H, W});
    v = relu(add(conv(v, w3a_, 3, 1, 1),
                 reshape(b3a_, {1, cfg_.conv3_ch, 1, 1, 1})));
    v = relu(add(conv(v, w3b_, 3, 1, 1),
                 reshape(b3b_, {1, cfg_.conv3_ch, 1, 1, 1})));

    // Depth folded into channels: [1, C, D, H, W] -> [1, C*D, H, W].
    Tensor<S> planar = reshape(v, {1, cfg_.conv3_ch * D, H, W});
    planar = relu(add(conv(planar, w2a_, 2, 1, 1),
                      reshape(b2a_, {1, cfg_.conv2_ch, 1, 1})));
    planar = add(conv(planar, w2b_, 2, 1, 1),
                 reshape(b2b_, {1, std::size_t{1}, 1, 1}));
    return reshape(planar, {H, W});
  }

  Tensor<S> probs(const Tensor<S>& canvas,
                  const typename LstmCell<S>::State& s,
                  std::size_t cam_id) const {
    return sigmoid(logits(canvas, s, cam_id));
  }

  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    pose_.register_params(ps, prefix + ".pose");
    pose_offsets_ = ps.add(prefix + ".pose_off", pose_offsets_);
    w3a_ = ps.add(prefix + ".c3a.w", w3a_);
    b3a_ = ps.add(prefix + ".c3a.b", b3a_);
    w3b_ = ps.add(prefix + ".c3b.w", w3b_);
    b3b_ = ps.add(prefix + ".c3b.b", b3b_);
    w2a_ = ps.add(prefix + ".c2a.w", w2a_);
    b2a_ = ps.add(prefix + ".c2a.b", b2a_);
    w2b_ = ps.add(prefix + ".c2b.w", w2b_);
    b2b_ = ps.add(prefix + ".c2b.b", b2b_);
  }

 private:
  Config cfg_;
  Mlp<S> pose_;
  Tensor<S> pose_offsets_;
  Tensor<S> w3a_, b3a_, w3b_, b3b_, w2a_, b2a_, w2b_, b2b_;
};

/// Mesh projection: decodes the 168-dim canvas into radial displacements and
/// a pose, instantiates the twice-subdivided icosphere and rasterizes it.
/// The renderer is a black box; this operator carries no gradients and is
/// trained with the score-function estimator.
class MeshProjection {
 public:
  struct Config {
    Camera camera;
    double radial_floor = 0.05;   // softplus offset keeping r > 0
    double pose_scale = 0.25;     // translation units per raw unit
    Vec3 base_translation{0, 0, 3.5};
    int subdivisions = 2;
  };

  MeshProjection() : MeshProjection(Config{}) {}
  explicit MeshProjection(const Config& cfg)
      : cfg_(cfg), sphere_(make_icosphere(cfg.subdivisions)) {}

  const Config& config() const { return cfg_; }
  const TriangleMesh& sphere() const { return sphere_; }
  std::size_t canvas_dim() const { return sphere_.vertices.size() + 6; }

  /// Canvas layout: [radial raw (V), euler (3), translation raw (3)].
  MeshParams decode(const std::vector<double>& canvas) const {
    const std::size_t V = sphere_.vertices.size();
    if (canvas.size() != V + 6)
      throw ShapeMismatch("mesh canvas must have " + std::to_string(V + 6) +
                          " entries, got " + std::to_string(canvas.size()));
    MeshParams p;
    p.radial.resize(V);
    for (std::size_t i = 0; i < V; ++i) {
      const double r = canvas[i];
      p.radial[i] =
          std::log1p(std::exp(-std::abs(r))) + std::max(r, 0.0) +
          cfg_.radial_floor;
    }
    for (int i = 0; i < 3; ++i) p.euler[i] = canvas[V + i];
    for (int i = 0; i < 3; ++i)
      p.translation[i] =
          cfg_.pose_scale * canvas[V + 3 + i] + cfg_.base_translation[i];
    return p;
  }

  TriangleMesh mesh(const std::vector<double>& canvas) const {
    return apply_mesh_params(sphere_, decode(canvas));
  }

  ImageRGB render(const std::vector<double>& canvas) const {
    return render_mesh(mesh(canvas), cfg_.camera);
  }

 private:
  Config cfg_;
  TriangleMesh sphere_;
};

}  // namespace voxgen
