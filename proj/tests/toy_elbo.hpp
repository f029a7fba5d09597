#pragma once

// Tiny two-step, one-latent-per-step volume model on a 2x2x2 canvas. The
// total latent space is 2-D, small enough that log p(x) is computable by
// dense quadrature, which gives an external check on the variational bound.

#include <cmath>
#include <functional>
#include <vector>

#include "voxgen/genmodel.hpp"
#include "voxgen/inference.hpp"
#include "voxgen/projection.hpp"

namespace voxgen::testsuite {

struct ToyElboModel {
  GenCore<double> gen;
  InferenceNet<double> inf;
  IdentityProjection<double> proj;
  Context<double> ctx;
  Tensor<double> x;

  std::function<Tensor<double>(const GenCore<double>::Rollout&)> decoder()
      const {
    auto xl = x;
    auto pr = proj;
    return [xl, pr](const GenCore<double>::Rollout& r) {
      return bernoulli_logpdf_logits(xl, pr.logits(r.canvas, r.final_state));
    };
  }
};

inline ToyElboModel make_toy_elbo_model(std::uint64_t seed) {
  GenCore<double>::Config g;
  g.z_dim = 1;
  g.hidden = 8;
  g.steps = 2;
  g.canvas_kind = CanvasKind::volume;
  g.canvas_extents = {2, 2, 2};
  g.write_block = 2;
  g.context.kind = ContextKind::none;
  g.context.out_dim = 2;

  InferenceNet<double>::Config q;
  q.hidden = 8;
  q.z_dim = 1;
  q.read_dim = 4;
  q.context_dim = 2;
  q.obs_extents = {2, 2, 2};
  q.obs_is_volume = true;
  q.glimpse = 2;

  Rng rng(seed);
  ToyElboModel m{GenCore<double>(g, rng), InferenceNet<double>(q, rng),
                 IdentityProjection<double>{}, Context<double>{},
                 Tensor<double>::from({2, 2, 2},
                                      {1, 0, 0, 1, 1, 1, 0, 0})};
  return m;
}

/// log p(x) by trapezoid quadrature over the 2-D latent space, truncated at
/// +-lim standard deviations. The integrand is p(x|z) N(z), so truncation
/// error is below the prior tail mass.
inline double toy_log_px_quadrature(const ToyElboModel& m, std::size_t n_grid,
                                    double lim) {
  Tape::Pause pause;
  const double h = 2.0 * lim / static_cast<double>(n_grid - 1);
  auto decode = m.decoder();
  std::vector<double> terms;
  terms.reserve(n_grid * n_grid);
  for (std::size_t i = 0; i < n_grid; ++i) {
    const double z1 = -lim + h * static_cast<double>(i);
    const double w1 = (i == 0 || i + 1 == n_grid) ? 0.5 * h : h;
    for (std::size_t j = 0; j < n_grid; ++j) {
      const double z2 = -lim + h * static_cast<double>(j);
      const double w2 = (j == 0 || j + 1 == n_grid) ? 0.5 * h : h;
      std::vector<Tensor<double>> zs = {Tensor<double>::from({1}, {z1}),
                                        Tensor<double>::from({1}, {z2})};
      const double lj = log_joint<double>(m.gen, m.ctx, zs, decode).item();
      terms.push_back(lj + std::log(w1) + std::log(w2));
    }
  }
  return logsumexp(terms);
}

/// Fits the recognition model to the (frozen) generative model by drawing
/// (z, x) from the model and maximizing log q(z | x) with teacher-forced
/// states. Drives q toward the true posterior without touching theta.
inline void sleep_train_inference(ToyElboModel& m, std::size_t steps,
                                  std::uint64_t seed, double lr = 3e-3) {
  ParamStore<double> ps;
  m.inf.register_params(ps, "q");
  Adam<double> opt(lr);
  Rng rng(seed);
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<Tensor<double>> zs;
    Tensor<double> x;
    {
      Tape::Pause pause;
      zs = m.gen.sample_prior(rng);
      auto roll = m.gen.rollout(zs, m.ctx);
      auto probs = m.proj.probs(roll.canvas, roll.final_state);
      x = Tensor<double>::zeros(probs.shape());
      for (std::size_t i = 0; i < x.size(); ++i)
        x.at(i) = rng.uniform() < probs.data()[i] ? 1.0 : 0.0;
    }
    Tape tape;
    Tape::Scope scope(tape);
    Tensor<double> loss = Tensor<double>::scalar(0.0);
    GenCore<double>::State s = m.gen.initial_state();
    for (std::size_t t = 0; t < m.gen.config().steps; ++t) {
      Tensor<double> e = m.gen.read(m.ctx, s);
      Tensor<double> r = m.inf.read(x, s);
      auto mom = m.inf.moments(r, s, e);
      loss = sub(loss, gaussian_logpdf(zs[t], mom.mu, mom.sigma));
      s = m.gen.step_state(zs[t], e, s);
    }
    backward(loss);
    opt.step(ps);
  }
}

/// Exact conditional p(x_u | x_o) over all assignments of the unobserved
/// voxels, by per-assignment latent quadrature. Bit k of an assignment index
/// is the k-th unobserved voxel in storage order.
inline std::vector<double> toy_conditional_quadrature(
    const ToyElboModel& m, const std::vector<bool>& observed,
    const Tensor<double>& x_ref, std::size_t n_grid = 81, double lim = 6.0) {
  std::vector<std::size_t> hidden;
  for (std::size_t i = 0; i < observed.size(); ++i)
    if (!observed[i]) hidden.push_back(i);
  const std::size_t n_states = std::size_t{1} << hidden.size();
  std::vector<double> logp(n_states);
  for (std::size_t u = 0; u < n_states; ++u) {
    ToyElboModel probe = m;
    probe.x = Tensor<double>::from(x_ref.shape(), x_ref.data());
    for (std::size_t k = 0; k < hidden.size(); ++k)
      probe.x.at(hidden[k]) = (u >> k) & 1 ? 1.0 : 0.0;
    logp[u] = toy_log_px_quadrature(probe, n_grid, lim);
  }
  const double z = logsumexp(logp);
  std::vector<double> cond(n_states);
  for (std::size_t u = 0; u < n_states; ++u) cond[u] = std::exp(logp[u] - z);
  return cond;
}

/// Index of the current unobserved-voxel assignment under the bit order of
/// toy_conditional_quadrature.
inline std::size_t hidden_state_index(const Tensor<double>& x,
                                      const std::vector<bool>& observed) {
  std::size_t u = 0, k = 0;
  for (std::size_t i = 0; i < observed.size(); ++i)
    if (!observed[i]) {
      if (x.data()[i] >= 0.5) u |= std::size_t{1} << k;
      ++k;
    }
  return u;
}

inline double total_variation(const std::vector<double>& a,
                              const std::vector<double>& b) {
  double tv = 0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
  return 0.5 * tv;
}

struct MeanStderr {
  double mean, stderr_;
};

/// Monte-Carlo estimate of E_q[ELBO] with its standard error.
inline MeanStderr toy_mean_elbo(const ToyElboModel& m, std::size_t n_samples,
                                std::uint64_t seed) {
  Tape::Pause pause;
  Rng rng(seed);
  auto decode = m.decoder();
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    std::vector<Tensor<double>> eps = {Tensor<double>::randn({1}, rng),
                                       Tensor<double>::randn({1}, rng)};
    const double v =
        elbo_sample<double>(m.gen, m.inf, m.x, m.ctx, eps, decode).elbo.item();
    s1 += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = s1 / n;
  const double var = std::max(0.0, s2 / n - mean * mean);
  return {mean, std::sqrt(var / n)};
}

}  // namespace voxgen::testsuite
