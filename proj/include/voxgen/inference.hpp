#pragma once

#include <functional>
#include <vector>

#include "voxgen/genmodel.hpp"
#include "voxgen/nn.hpp"
#include "voxgen/vst.hpp"

namespace voxgen {

/// KL(N(mu, diag(sigma^2)) || N(0, I)) in closed form:
///   1/2 sum(mu^2 + sigma^2 - 1 - 2 log sigma)
template <class S>
inline Tensor<S> kl_standard_normal(const Tensor<S>& mu,
                                    const Tensor<S>& sigma) {
  if (mu.shape() != sigma.shape())
    throw ShapeMismatch("kl mu/sigma shape mismatch");
  for (S s : sigma.data())
    if (!(s > S(0))) throw DomainError("kl sigma must be > 0");
  Tensor<S> term = sub(add(mul(mu, mu), mul(sigma, sigma)),
                       add_scalar(mul_scalar(log(sigma), S(2)), S(1)));
  return mul_scalar(sum(term), S(0.5));
}

/// Amortized posterior over the latent trajectory. The observation read
/// mirrors the generative write: an attention glimpse of the volume (or a
/// full flatten of small observations) feeds an MLP, and the moment heads
/// condition on the read vector, the previous state and the context read.
/// State transitions reuse the generative core's parameters, so q and p
/// share one recurrence.
template <class S>
class InferenceNet {
 public:
  struct Config {
    std::size_t hidden = 64;     // must match the generative core
    std::size_t z_dim = 3;
    std::size_t read_dim = 16;
    std::size_t context_dim = 8; // e_t dimension of the paired core
    Shape obs_extents = {8, 8, 8};
    bool obs_is_volume = true;   // false: rank-2 image observation
    std::size_t glimpse = 4;     // attention read extent per axis
    S sigma_floor = S(1e-4);
  };

  InferenceNet() = default;
  InferenceNet(const Config& cfg, Rng& rng) : cfg_(cfg) {
    const std::size_t g = cfg.glimpse;
    if (cfg.obs_is_volume) {
      attn_ = Mlp<S>({cfg.hidden, 12}, {Act::identity}, rng);
      read_ = Mlp<S>({g * g * g, cfg.read_dim}, {Act::tanh}, rng);
    } else {
      attn_ = Mlp<S>({cfg.hidden, 6}, {Act::identity}, rng);
      read_ = Mlp<S>({g * g, cfg.read_dim}, {Act::tanh}, rng);
    }
    const std::size_t in = cfg.read_dim + cfg.hidden + cfg.context_dim;
    mu_head_ = Mlp<S>({in, cfg.z_dim}, {Act::identity}, rng);
    sigma_head_ = Mlp<S>({in, cfg.z_dim}, {Act::identity}, rng);
  }

  const Config& config() const { return cfg_; }

  /// r_t = f_r(x, s_{t-1})
  Tensor<S> read(const Tensor<S>& x,
                 const typename LstmCell<S>::State& prev) const {
    const std::size_t g = cfg_.glimpse;
    if (cfg_.obs_is_volume) {
      if (x.shape() != cfg_.obs_extents)
        throw ShapeMismatch("observation extents mismatch");
      Tensor<S> p = affine_from_raw_3d(attn_.forward(prev.h));
      Tensor<S> glimpse = vst_sample(x, p, {g, g, g});
      return read_.forward(flatten(glimpse));
    }
    if (x.rank() != 2) throw ShapeMismatch("observation must be an image");
    Tensor<S> p = affine_from_raw_2d(attn_.forward(prev.h));
    Tensor<S> glimpse = st_sample_2d(x, p, {g, g});
    return read_.forward(flatten(glimpse));
  }

  struct Moments {
    Tensor<S> mu, sigma;
  };

  /// Posterior moments for step t. sigma = softplus(raw) + floor keeps the
  /// scale strictly positive.
  Moments moments(const Tensor<S>& r, const typename LstmCell<S>::State& prev,
                  const Tensor<S>& e) const {
    Tensor<S> joint = concat<S>({r, prev.h, e}, 0);
    Tensor<S> mu = mu_head_.forward(joint);
    Tensor<S> sigma =
        add_scalar(softplus(sigma_head_.forward(joint)), cfg_.sigma_floor);
    return {mu, sigma};
  }

  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    attn_.register_params(ps, prefix + ".attn");
    read_.register_params(ps, prefix + ".read");
    mu_head_.register_params(ps, prefix + ".mu");
    sigma_head_.register_params(ps, prefix + ".sigma");
  }

 private:
  Config cfg_;
  Mlp<S> attn_, read_, mu_head_, sigma_head_;
};

// ---------------------------------------------------------------------------
// Variational objective
// ---------------------------------------------------------------------------

template <class S>
struct ElboTerms {
  Tensor<S> elbo;   // recon - kl, scalar
  Tensor<S> recon;  // E_q[log p(x|z)] single-sample estimate
  Tensor<S> kl;     // sum_t KL(q_t || N(0,I))
  std::vector<Tensor<S>> zs, mus, sigmas;
  typename GenCore<S>::Rollout rollout;
};

/// One reparameterized ELBO evaluation. `eps` supplies the standard-normal
/// draws (one [z_dim] tensor per step), so the whole computation is a
/// deterministic function of its inputs; `decode` maps the finished rollout
/// to the reconstruction log-likelihood of x.
template <class S>
inline ElboTerms<S> elbo_sample(
    const GenCore<S>& gen, const InferenceNet<S>& inf, const Tensor<S>& x,
    const Context<S>& ctx, const std::vector<Tensor<S>>& eps,
    const std::function<Tensor<S>(const typename GenCore<S>::Rollout&)>&
        decode) {
  const auto& cfg = gen.config();
  if (eps.size() != cfg.steps)
    throw ShapeMismatch("need one eps per step");

  ElboTerms<S> out;
  typename GenCore<S>::State s = gen.initial_state();
  Tensor<S> canvas = gen.initial_canvas();
  Tensor<S> kl = Tensor<S>::scalar(S(0));

  for (std::size_t t = 0; t < cfg.steps; ++t) {
    Tensor<S> e = gen.read(ctx, s);
    Tensor<S> r = inf.read(x, s);
    auto m = inf.moments(r, s, e);
    Tensor<S> z = add(m.mu, mul(m.sigma, eps[t]));
    kl = add(kl, kl_standard_normal(m.mu, m.sigma));
    s = gen.step_state(z, e, s);
    canvas = gen.write(s, canvas);
    out.zs.push_back(z);
    out.mus.push_back(m.mu);
    out.sigmas.push_back(m.sigma);
  }
  out.rollout = {canvas, s};
  out.recon = decode(out.rollout);
  out.kl = kl;
  out.elbo = sub(out.recon, kl);
  return out;
}

/// log p(x, z) for a fixed latent trajectory: reconstruction plus the
/// standard-normal prior mass. Used by quadrature oracles and importance
/// weighting.
template <class S>
inline Tensor<S> log_joint(
    const GenCore<S>& gen, const Context<S>& ctx,
    const std::vector<Tensor<S>>& zs,
    const std::function<Tensor<S>(const typename GenCore<S>::Rollout&)>&
        decode) {
  auto roll = gen.rollout(zs, ctx);
  Tensor<S> lp = decode(roll);
  for (const auto& z : zs) lp = add(lp, standard_normal_logpdf(z));
  return lp;
}

/// Importance-weighted bound log(1/n sum_i w_i), w_i = p(x,z_i)/q(z_i|x).
/// Evaluation only; runs outside any tape.
template <class S>
inline S iwae_bound(
    const GenCore<S>& gen, const InferenceNet<S>& inf, const Tensor<S>& x,
    const Context<S>& ctx, std::size_t n_samples, Rng& rng,
    const std::function<Tensor<S>(const typename GenCore<S>::Rollout&)>&
        decode) {
  if (n_samples == 0) throw DomainError("iwae needs at least one sample");
  Tape::Pause pause;
  const auto& cfg = gen.config();
  std::vector<S> logw;
  logw.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    std::vector<Tensor<S>> eps;
    for (std::size_t t = 0; t < cfg.steps; ++t)
      eps.push_back(Tensor<S>::randn({cfg.z_dim}, rng));
    auto terms = elbo_sample(gen, inf, x, ctx, eps, decode);
    S lq = S(0), lp = S(0);
    for (std::size_t t = 0; t < cfg.steps; ++t) {
      lq += gaussian_logpdf(terms.zs[t], terms.mus[t], terms.sigmas[t]).item();
      lp += standard_normal_logpdf(terms.zs[t]).item();
    }
    logw.push_back(terms.recon.item() + lp - lq);
  }
  return logsumexp(logw) - std::log(static_cast<S>(n_samples));
}

}  // namespace voxgen
