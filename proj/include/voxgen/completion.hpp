#pragma once

#include <cstdint>
#include <vector>

#include "voxgen/genmodel.hpp"
#include "voxgen/inference.hpp"

namespace voxgen {

/// Marks which voxels are observed (clamped) during completion. Stored in
/// the volume's row-major order.
struct ObservationMask {
  Shape shape;
  std::vector<bool> observed;

  static ObservationMask all_observed(const Shape& sh) {
    ObservationMask m;
    m.shape = sh;
    std::size_t n = 1;
    for (std::size_t e : sh) n *= e;
    m.observed.assign(n, true);
    return m;
  }

  /// Hides the half of the volume with the smaller width coordinate.
  static ObservationMask left_half_hidden(const Shape& sh) {
    if (sh.size() != 3) throw ShapeMismatch("mask expects a volume shape");
    ObservationMask m = all_observed(sh);
    std::size_t i = 0;
    for (std::size_t z = 0; z < sh[0]; ++z)
      for (std::size_t y = 0; y < sh[1]; ++y)
        for (std::size_t x = 0; x < sh[2]; ++x, ++i)
          if (x < sh[2] / 2) m.observed[i] = false;
    return m;
  }

  std::size_t unobserved_count() const {
    std::size_t n = 0;
    for (bool b : observed)
      if (!b) ++n;
    return n;
  }
};

namespace detail {

template <class S>
inline void check_mask(const Tensor<S>& x, const ObservationMask& mask) {
  if (x.shape() != mask.shape || x.size() != mask.observed.size())
    throw ShapeMismatch("mask shape does not match volume");
}

}  // namespace detail

/// One application of the completion kernel: draw a latent trajectory from
/// the recognition model given the current state, regenerate the volume,
/// sample unobserved voxels from the model and copy observed ones through.
template <class S, class Proj>
inline Tensor<S> complete_step(const GenCore<S>& gen,
                               const InferenceNet<S>& inf, const Proj& proj,
                               const Context<S>& ctx, const Tensor<S>& x,
                               const ObservationMask& mask, Rng& rng) {
  detail::check_mask(x, mask);
  Tape::Pause pause;
  const auto& cfg = gen.config();
  typename GenCore<S>::State s = gen.initial_state();
  Tensor<S> canvas = gen.initial_canvas();
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    Tensor<S> e = gen.read(ctx, s);
    Tensor<S> r = inf.read(x, s);
    auto m = inf.moments(r, s, e);
    Tensor<S> z = Tensor<S>::zeros({cfg.z_dim});
    for (std::size_t i = 0; i < cfg.z_dim; ++i)
      z.at(i) = m.mu.data()[i] +
                m.sigma.data()[i] * static_cast<S>(rng.normal());
    s = gen.step_state(z, e, s);
    canvas = gen.write(s, canvas);
  }
  Tensor<S> probs = proj.probs(canvas, s);
  if (probs.shape() != x.shape())
    throw ShapeMismatch("projection output does not match volume");
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask.observed[i])
      out.at(i) = x.data()[i];
    else
      out.at(i) = static_cast<S>(rng.uniform()) < probs.data()[i] ? S(1)
                                                                  : S(0);
  }
  return out;
}

template <class S>
struct CompletionResult {
  std::vector<std::size_t> snapshot_iters;
  std::vector<Tensor<S>> snapshots;
  Tensor<S> final;
};

inline std::vector<std::size_t> default_snapshot_iters() {
  return {1, 2, 3, 4, 5, 6, 7, 8, 100};
}

/// Runs the completion chain from a Bernoulli(1/2) fill of the unobserved
/// region. The rng order is: one uniform per unobserved voxel for the init,
/// then the per-iteration kernel draws, so a chain is replayable from its
/// seed alone.
template <class S, class Proj>
inline CompletionResult<S> complete(
    const GenCore<S>& gen, const InferenceNet<S>& inf, const Proj& proj,
    const Context<S>& ctx, const Tensor<S>& x_partial,
    const ObservationMask& mask, std::size_t iters, std::uint64_t seed,
    std::vector<std::size_t> snapshot_iters = default_snapshot_iters()) {
  detail::check_mask(x_partial, mask);
  if (iters < 1) throw DomainError("completion needs iters >= 1");
  Rng rng(seed);
  Tensor<S> x = Tensor<S>::zeros(x_partial.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    x.at(i) = mask.observed[i] ? x_partial.data()[i]
                               : static_cast<S>(rng.uniform() < 0.5 ? 1 : 0);

  CompletionResult<S> out;
  for (std::size_t it = 1; it <= iters; ++it) {
    x = complete_step(gen, inf, proj, ctx, x, mask, rng);
    for (std::size_t want : snapshot_iters)
      if (want == it) {
        out.snapshot_iters.push_back(it);
        out.snapshots.push_back(x);
      }
  }
  out.final = x;
  return out;
}

}  // namespace voxgen
