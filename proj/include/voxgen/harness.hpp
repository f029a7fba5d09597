#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "voxgen/checkpoint.hpp"
#include "voxgen/completion.hpp"
#include "voxgen/datasets.hpp"
#include "voxgen/genmodel.hpp"
#include "voxgen/inference.hpp"
#include "voxgen/projection.hpp"

namespace voxgen {

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class DatasetKind { primitives, necker, boxes, digits, vox_files };

inline const char* dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::primitives: return "primitives";
    case DatasetKind::necker: return "necker";
    case DatasetKind::boxes: return "boxes";
    case DatasetKind::digits: return "digits";
    case DatasetKind::vox_files: return "vox_files";
  }
  throw Error("unknown dataset kind");
}

inline DatasetKind dataset_kind_from_string(const std::string& s) {
  for (DatasetKind k : {DatasetKind::primitives, DatasetKind::necker,
                        DatasetKind::boxes, DatasetKind::digits,
                        DatasetKind::vox_files})
    if (s == dataset_kind_name(k)) return k;
  throw ConfigError("unknown dataset kind: " + s);
}

struct DatasetSpec {
  DatasetKind kind = DatasetKind::primitives;
  std::size_t extent = 8;
  AugmentSpec aug;
  std::size_t thickness = 2;          // digits: extrusion depth
  double necker_side = 0;             // wireframe edge length; 0 = extent/4
  std::string images_path, labels_path;  // digits: empty => synthetic glyphs
  std::vector<std::string> paths;     // vox_files
};

struct ModelSpec {
  std::size_t z_dim = 3;
  std::size_t hidden = 32;
  std::size_t steps = 4;
  std::size_t write_block = 4;
  std::size_t read_dim = 16;
  std::size_t glimpse = 4;
  std::size_t ctx_dim = 8;
  ContextKind context = ContextKind::none;
  std::size_t n_classes = 10;
  std::size_t n_views = 0;  // views attached to each scene when context=views
};

struct TrainConfig {
  DatasetSpec dataset;
  ModelSpec model;
  double lr = 3e-3;
  std::size_t batch = 4;
  std::size_t budget = 200;
  std::size_t train_count = 64;
  std::size_t eval_count = 16;
  std::size_t eval_every = 0;  // 0 = final evaluation only
  std::size_t eval_importance = 10;
  std::uint64_t seed = 0;
  std::string out_dir;  // empty = keep everything in memory

  void validate() const {
    if (budget < 1) throw ConfigError("budget must be >= 1");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (train_count < 1) throw ConfigError("train_count must be >= 1");
    if (model.context == ContextKind::views && model.n_views > 3)
      throw ConfigError("at most 3 orthographic views exist");
  }
};

/// Desk-scale defaults: everything small enough for a single CPU core.
inline TrainConfig toy_train_config() {
  TrainConfig cfg;
  cfg.dataset.kind = DatasetKind::primitives;
  cfg.dataset.extent = 8;
  cfg.dataset.aug.rotation = 3.14159265358979323846;
  cfg.dataset.aug.translation = {1.0, 1.0, 1.0};
  cfg.model.hidden = 32;
  cfg.model.z_dim = 3;
  cfg.model.steps = 4;
  cfg.model.write_block = 4;
  cfg.budget = 300;
  return cfg;
}

/// Full-size settings from the source experiments (300 hidden units, 10
/// importance samples, 30^3 volumes). Expect long runtimes on CPU.
inline TrainConfig paper_train_config() {
  TrainConfig cfg;
  cfg.dataset.kind = DatasetKind::primitives;
  cfg.dataset.extent = 30;
  cfg.dataset.aug.rotation = 3.14159265358979323846;
  cfg.dataset.aug.translation = {2.0, 2.0, 2.0};
  cfg.dataset.thickness = 8;
  cfg.model.hidden = 300;
  cfg.model.z_dim = 10;
  cfg.model.steps = 8;
  cfg.model.write_block = 8;
  cfg.model.read_dim = 64;
  cfg.model.glimpse = 8;
  cfg.batch = 8;
  cfg.budget = 20000;
  cfg.train_count = 2048;
  cfg.eval_count = 128;
  cfg.eval_importance = 10;
  return cfg;
}

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

template <class S>
struct Scene {
  Tensor<S> volume;
  Context<S> ctx;
  std::size_t label = 0;
};

/// Deterministically materializes scenes; `stream` separates train and
/// held-out draws from one base seed.
template <class S>
inline std::vector<Scene<S>> build_scenes(const DatasetSpec& ds,
                                          const ModelSpec& ms,
                                          std::uint64_t seed,
                                          std::uint64_t stream,
                                          std::size_t count) {
  std::vector<Scene<S>> scenes;
  scenes.reserve(count);

  std::vector<LabeledVolume<S>> digit_items;
  if (ds.kind == DatasetKind::digits) {
    IdxImages im;
    std::vector<std::uint8_t> labels;
    if (ds.images_path.empty()) {
      im = synth_digit_images(count, derive_seed(seed, stream, 0));
      labels = synth_digit_labels(count);
    } else {
      im = read_idx_images(ds.images_path);
      labels = read_idx_labels(ds.labels_path);
    }
    digit_items = extrude_digit_volumes<S>(
        im, labels, ds.aug, derive_seed(seed, stream, 1), ds.extent,
        ds.thickness, count);
    if (digit_items.size() < count)
      throw ConfigError("digit corpus smaller than requested scene count");
  }

  for (std::size_t i = 0; i < count; ++i) {
    Scene<S> sc;
    const std::uint64_t item_seed = derive_seed(seed, stream, 2 + i);
    switch (ds.kind) {
      case DatasetKind::primitives: {
        sc.label = i % kPrimitiveKindCount;
        sc.volume = gen_primitive<S>(primitive_kind_from_index(sc.label),
                                     ds.aug, item_seed, ds.extent);
        break;
      }
      case DatasetKind::necker: {
        sc.label = 0;
        const double side = ds.necker_side > 0
                                ? ds.necker_side
                                : static_cast<double>(ds.extent) / 4.0;
        sc.volume = gen_necker<S>(item_seed, ds.extent, side);
        break;
      }
      case DatasetKind::boxes: {
        sc.label = 0;
        sc.volume = gen_box<S>(item_seed, ds.extent);
        break;
      }
      case DatasetKind::digits: {
        sc.volume = digit_items[i].volume;
        sc.label = digit_items[i].label;
        break;
      }
      case DatasetKind::vox_files: {
        if (ds.paths.empty()) throw ConfigError("vox_files needs paths");
        sc.label = i % ds.paths.size();
        sc.volume = read_vox1<S>(ds.paths[sc.label]);
        break;
      }
    }
    sc.ctx.kind = ms.context;
    if (ms.context == ContextKind::class_label) {
      sc.ctx.class_index = sc.label;
    } else if (ms.context == ContextKind::views) {
      auto views = make_views(sc.volume);
      for (std::size_t v = 0; v < ms.n_views && v < views.size(); ++v) {
        sc.ctx.views.push_back(views[v]);
        sc.ctx.camera_ids.push_back(v);
      }
    }
    scenes.push_back(std::move(sc));
  }
  return scenes;
}

// ---------------------------------------------------------------------------
// Volume model bundle
// ---------------------------------------------------------------------------

template <class S>
struct VolumeModel {
  GenCore<S> gen;
  InferenceNet<S> inf;
  IdentityProjection<S> proj;
  ParamStore<S> params;

  VolumeModel(const ModelSpec& ms, std::size_t extent, Rng& rng) {
    typename GenCore<S>::Config g;
    g.z_dim = ms.z_dim;
    g.hidden = ms.hidden;
    g.steps = ms.steps;
    g.canvas_kind = CanvasKind::volume;
    g.canvas_extents = {extent, extent, extent};
    g.write_block = ms.write_block;
    g.context.kind = ms.context;
    g.context.out_dim = ms.ctx_dim;
    g.context.n_classes = ms.n_classes;
    g.context.n_cams = 3;
    g.context.glimpse = std::min<std::size_t>(6, extent);
    gen = GenCore<S>(g, rng);

    typename InferenceNet<S>::Config q;
    q.hidden = ms.hidden;
    q.z_dim = ms.z_dim;
    q.read_dim = ms.read_dim;
    q.context_dim = ms.ctx_dim;
    q.obs_extents = {extent, extent, extent};
    q.obs_is_volume = true;
    q.glimpse = ms.glimpse;
    inf = InferenceNet<S>(q, rng);

    gen.register_params(params, "gen");
    inf.register_params(params, "inf");
  }

  std::function<Tensor<S>(const typename GenCore<S>::Rollout&)> decoder(
      const Tensor<S>& x) const {
    auto pr = proj;
    return [x, pr](const typename GenCore<S>::Rollout& r) {
      return bernoulli_logpdf_logits(x, pr.logits(r.canvas, r.final_state));
    };
  }
};

struct EvalStats {
  double nats_mean = 0;   // negated importance-weighted bound, lower = better
  double nats_stderr = 0;
};

// ---------------------------------------------------------------------------
// Volume trainer
// ---------------------------------------------------------------------------

/// SGVB training of the sequential volume model. Every random draw is a
/// function of (seed, step index), so runs replay bit-exactly and a resumed
/// run continues the interrupted trajectory.
template <class S = float>
class VolumeTrainer {
 public:
  explicit VolumeTrainer(const TrainConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    train_ = build_scenes<S>(cfg_.dataset, cfg_.model, cfg_.seed, 20,
                             cfg_.train_count);
    eval_ = build_scenes<S>(cfg_.dataset, cfg_.model, cfg_.seed, 21,
                            cfg_.eval_count);
    Rng init(derive_seed(cfg_.seed, 1, 0));
    model_.emplace(cfg_.model, cfg_.dataset.extent, init);
    opt_ = Adam<S>(cfg_.lr);
  }

  const TrainConfig& config() const { return cfg_; }
  VolumeModel<S>& model() { return *model_; }
  const VolumeModel<S>& model() const { return *model_; }
  Adam<S>& optimizer() { return opt_; }
  const std::vector<Scene<S>>& train_scenes() const { return train_; }
  const std::vector<Scene<S>>& eval_scenes() const { return eval_; }
  const std::vector<std::string>& metrics() const { return metrics_; }

  /// One optimizer update; all randomness derives from the step index.
  double train_step(std::size_t step_index) {
    Rng rng(derive_seed(cfg_.seed, 2, step_index));
    Tape tape;
    Tape::Scope scope(tape);
    Tensor<S> loss = Tensor<S>::scalar(S(0));
    for (std::size_t b = 0; b < cfg_.batch; ++b) {
      const auto& sc = train_[rng.randint(train_.size())];
      std::vector<Tensor<S>> eps;
      eps.reserve(cfg_.model.steps);
      for (std::size_t t = 0; t < cfg_.model.steps; ++t)
        eps.push_back(Tensor<S>::randn({cfg_.model.z_dim}, rng));
      auto terms = elbo_sample<S>(model_->gen, model_->inf, sc.volume, sc.ctx,
                                  eps, model_->decoder(sc.volume));
      loss = sub(loss, terms.elbo);
    }
    loss = mul_scalar(loss, S(1) / static_cast<S>(cfg_.batch));
    backward(loss);
    // A parameter can sit outside the graph (e.g. the view encoder when a
    // batch carries zero views); its gradient is exactly zero.
    for (auto& [name, p] : model_->params)
      if (!p.has_grad()) p.node()->ensure_grad();
    opt_.step(model_->params);
    return static_cast<double>(loss.item());
  }

  /// Held-out negative importance-weighted bound in nats per volume.
  EvalStats evaluate(std::size_t n_importance, std::uint64_t eval_seed) const {
    if (eval_.empty()) throw ConfigError("no held-out scenes configured");
    double s1 = 0, s2 = 0;
    for (std::size_t i = 0; i < eval_.size(); ++i) {
      Rng rng(derive_seed(eval_seed, 3, i));
      const auto& sc = eval_[i];
      const double bound = static_cast<double>(
          iwae_bound<S>(model_->gen, model_->inf, sc.volume, sc.ctx,
                        n_importance, rng, model_->decoder(sc.volume)));
      const double nats = -bound;
      s1 += nats;
      s2 += nats * nats;
    }
    const double n = static_cast<double>(eval_.size());
    const double mean = s1 / n;
    const double var = std::max(0.0, s2 / n - mean * mean);
    return {mean, std::sqrt(var / n)};
  }

  void save(const std::string& dir, std::int64_t step) {
    save_checkpoint<S>(dir, model_->params, &opt_, step);
  }

  std::int64_t load(const std::string& dir) {
    return load_checkpoint<S>(dir, model_->params, &opt_);
  }

  /// Runs steps [start, budget), recording JSONL metrics and optional
  /// checkpoints under out_dir. Returns the final held-out stats.
  EvalStats run(std::size_t start = 0) {
    for (std::size_t step = start; step < cfg_.budget; ++step) {
      const double loss = train_step(step);
      std::ostringstream line;
      line << "{\"step\":" << step << ",\"loss\":" << loss;
      if (cfg_.eval_every && (step + 1) % cfg_.eval_every == 0) {
        EvalStats es = evaluate(cfg_.eval_importance,
                                derive_seed(cfg_.seed, 4, step));
        line << ",\"nats\":" << es.nats_mean << ",\"nats_stderr\":"
             << es.nats_stderr;
      }
      line << "}";
      metrics_.push_back(line.str());
    }
    EvalStats final_stats =
        evaluate(cfg_.eval_importance, derive_seed(cfg_.seed, 5, 0));
    std::ostringstream line;
    line << "{\"step\":" << cfg_.budget << ",\"nats\":"
         << final_stats.nats_mean << ",\"nats_stderr\":"
         << final_stats.nats_stderr << "}";
    metrics_.push_back(line.str());
    if (!cfg_.out_dir.empty()) {
      save(cfg_.out_dir + "/checkpoint",
           static_cast<std::int64_t>(cfg_.budget));
      std::ofstream os(cfg_.out_dir + "/metrics.jsonl");
      for (const auto& l : metrics_) os << l << "\n";
    }
    return final_stats;
  }

 private:
  TrainConfig cfg_;
  std::vector<Scene<S>> train_, eval_;
  std::optional<VolumeModel<S>> model_;
  Adam<S> opt_{3e-3};
  std::vector<std::string> metrics_;
};

// ---------------------------------------------------------------------------
// Deterministic baseline
// ---------------------------------------------------------------------------

/// Six volumetric conv layers mapping the three orthographic views (each
/// tiled along its projection axis into a channel) to a Bernoulli logit
/// volume.
template <class S>
class BaselineConvnet {
 public:
  static constexpr std::size_t kLayers = 6;

  BaselineConvnet() = default;
  BaselineConvnet(std::size_t extent, std::size_t channels, Rng& rng)
      : extent_(extent) {
    const std::size_t c = channels, c2 = 2 * channels;
    const std::size_t chans[kLayers + 1] = {3, c, c, c2, c2, c2, 1};
    for (std::size_t l = 0; l < kLayers; ++l) {
      ws_[l] = glorot<S>({chans[l + 1], chans[l], 3, 3, 3}, rng);
      bs_[l] = zero_param<S>({chans[l + 1]});
    }
  }

  std::size_t layer_count() const { return kLayers; }

  /// views = exactly the three orthographic projections in axis order.
  Tensor<S> logits(const std::vector<Tensor<S>>& views) const {
    if (views.size() != 3)
      throw ShapeMismatch("baseline expects exactly 3 views");
    const std::size_t e = extent_;
    for (const auto& v : views)
      if (v.shape() != Shape{e, e})
        throw ShapeMismatch("baseline view extent mismatch");
    Tensor<S> x = Tensor<S>::zeros({1, 3, e, e, e});
    auto& val = x.data();
    for (std::size_t z = 0; z < e; ++z)
      for (std::size_t y = 0; y < e; ++y)
        for (std::size_t xx = 0; xx < e; ++xx) {
          const std::size_t base = (z * e + y) * e + xx;
          val[0 * e * e * e + base] = views[0].data()[y * e + xx];
          val[1 * e * e * e + base] = views[1].data()[z * e + xx];
          val[2 * e * e * e + base] = views[2].data()[z * e + y];
        }
    Tensor<S> h = x;
    for (std::size_t l = 0; l < kLayers; ++l) {
      const std::size_t oc = ws_[l].shape()[0];
      h = add(conv(h, ws_[l], 3, 1, 1),
              reshape(bs_[l], {1, oc, 1, 1, 1}));
      if (l + 1 < kLayers) h = relu(h);
    }
    return reshape(h, {e, e, e});
  }

  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    for (std::size_t l = 0; l < kLayers; ++l) {
      ws_[l] = ps.add(prefix + ".w" + std::to_string(l), ws_[l]);
      bs_[l] = ps.add(prefix + ".b" + std::to_string(l), bs_[l]);
    }
  }

 private:
  std::size_t extent_ = 8;
  Tensor<S> ws_[kLayers], bs_[kLayers];
};

struct BaselineConfig {
  DatasetSpec dataset;
  std::size_t channels = 6;
  double lr = 3e-3;
  std::size_t batch = 4;
  std::size_t budget = 150;
  std::size_t train_count = 64;
  std::size_t eval_count = 16;
  std::uint64_t seed = 0;
};

/// Trains the deterministic 3-view baseline by Bernoulli NLL.
template <class S = float>
class BaselineTrainer {
 public:
  explicit BaselineTrainer(const BaselineConfig& cfg) : cfg_(cfg) {
    if (cfg.budget < 1) throw ConfigError("budget must be >= 1");
    ModelSpec ms;
    ms.context = ContextKind::views;
    ms.n_views = 3;
    train_ = build_scenes<S>(cfg.dataset, ms, cfg.seed, 20, cfg.train_count);
    eval_ = build_scenes<S>(cfg.dataset, ms, cfg.seed, 21, cfg.eval_count);
    Rng init(derive_seed(cfg.seed, 1, 0));
    net_ = BaselineConvnet<S>(cfg.dataset.extent, cfg.channels, init);
    net_.register_params(params_, "baseline");
    opt_ = Adam<S>(cfg.lr);
  }

  BaselineConvnet<S>& net() { return net_; }
  ParamStore<S>& params() { return params_; }

  double train_step(std::size_t step_index) {
    Rng rng(derive_seed(cfg_.seed, 2, step_index));
    Tape tape;
    Tape::Scope scope(tape);
    Tensor<S> loss = Tensor<S>::scalar(S(0));
    for (std::size_t b = 0; b < cfg_.batch; ++b) {
      const auto& sc = train_[rng.randint(train_.size())];
      loss = sub(loss,
                 bernoulli_logpdf_logits(sc.volume, net_.logits(sc.ctx.views)));
    }
    loss = mul_scalar(loss, S(1) / static_cast<S>(cfg_.batch));
    backward(loss);
    opt_.step(params_);
    return static_cast<double>(loss.item());
  }

  /// Mean Bernoulli NLL per held-out volume, in nats.
  EvalStats evaluate() const {
    Tape::Pause pause;
    double s1 = 0, s2 = 0;
    for (const auto& sc : eval_) {
      const double nll = -static_cast<double>(
          bernoulli_logpdf_logits(sc.volume, net_.logits(sc.ctx.views))
              .item());
      s1 += nll;
      s2 += nll * nll;
    }
    const double n = static_cast<double>(eval_.size());
    const double mean = s1 / n;
    const double var = std::max(0.0, s2 / n - mean * mean);
    return {mean, std::sqrt(var / n)};
  }

  EvalStats run() {
    for (std::size_t step = 0; step < cfg_.budget; ++step) train_step(step);
    return evaluate();
  }

 private:
  BaselineConfig cfg_;
  std::vector<Scene<S>> train_, eval_;
  BaselineConvnet<S> net_;
  ParamStore<S> params_;
  Adam<S> opt_{3e-3};
};

// ---------------------------------------------------------------------------
// Mesh fitting through the black-box renderer
// ---------------------------------------------------------------------------

struct MeshFitConfig {
  std::size_t steps = 250;
  std::size_t k_samples = 12;
  double sigma = 0.05;
  double lr = 0.02;
  std::uint64_t seed = 0;
};

struct MeshFitResult {
  double initial_nll = 0;
  double final_nll = 0;
  std::vector<double> canvas;
};

/// Gaussian reconstruction NLL of the rendered image (unit pixel variance,
/// additive constant dropped).
inline double render_nll(const MeshProjection& proj,
                         const std::vector<double>& canvas,
                         const ImageRGB& target) {
  ImageRGB im = proj.render(canvas);
  if (im.width != target.width || im.height != target.height)
    throw ShapeMismatch("render/target size mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < im.rgb.size(); ++i) {
    const double d = static_cast<double>(im.rgb[i]) - target.rgb[i];
    acc += d * d;
  }
  return 0.5 * acc;
}

/// Recovers a single scene's mesh canvas by multi-sample REINFORCE through
/// the non-differentiable rasterizer.
inline MeshFitResult fit_mesh_single_scene(const ImageRGB& target,
                                           const MeshProjection& proj,
                                           const MeshFitConfig& cfg) {
  const std::size_t dim = proj.canvas_dim();
  ParamStore<double> ps;
  Tensor<double> canvas = ps.add("canvas", Tensor<double>::zeros({dim}, true));
  Adam<double> opt(cfg.lr);

  MeshFitResult out;
  out.initial_nll = render_nll(proj, canvas.data(), target);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, 6, step));
    std::vector<std::vector<double>> eps(cfg.k_samples,
                                         std::vector<double>(dim));
    std::vector<double> losses(cfg.k_samples);
    for (std::size_t k = 0; k < cfg.k_samples; ++k) {
      std::vector<double> probe = canvas.data();
      for (std::size_t d = 0; d < dim; ++d) {
        eps[k][d] = rng.normal();
        probe[d] += cfg.sigma * eps[k][d];
      }
      losses[k] = render_nll(proj, probe, target);
    }
    std::vector<double> grad = reinforce_gradient(losses, eps, cfg.sigma);
    canvas.node()->ensure_grad();
    canvas.node()->grad = grad;
    opt.step(ps);
  }

  out.final_nll = render_nll(proj, canvas.data(), target);
  out.canvas = canvas.data();
  return out;
}

}  // namespace voxgen
