#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "voxgen/genmodel.hpp"
#include "voxgen/gradcheck.hpp"

using namespace voxgen;

namespace {

TEST(Likelihood, BernoulliMatchesHandComputation) {
  auto x = Tensor<double>::from({2}, {1.0, 0.0});
  auto p = Tensor<double>::from({2}, {0.7, 0.2});
  const double expected = std::log(0.7) + std::log(0.8);
  EXPECT_NEAR(bernoulli_logpdf(x, p).item(), expected, 1e-12);
}

TEST(Likelihood, BernoulliRejectsBoundaryProbs) {
  auto x = Tensor<double>::from({2}, {1.0, 0.0});
  EXPECT_THROW(bernoulli_logpdf(x, Tensor<double>::from({2}, {1.0, 0.5})),
               DomainError);
  EXPECT_THROW(bernoulli_logpdf(x, Tensor<double>::from({2}, {0.5, 0.0})),
               DomainError);
  EXPECT_THROW(bernoulli_logpdf(x, Tensor<double>::from({3}, {.5, .5, .5})),
               ShapeMismatch);
}

TEST(Likelihood, LogitFormAgreesWithProbabilityForm) {
  auto x = Tensor<double>::from({3}, {1.0, 0.0, 1.0});
  auto l = Tensor<double>::from({3}, {0.3, -1.2, 2.0});
  auto probs = sigmoid(l);
  EXPECT_NEAR(bernoulli_logpdf_logits(x, l).item(),
              bernoulli_logpdf(x, probs).item(), 1e-10);
}

TEST(Likelihood, LogitFormIsStableAtExtremes) {
  auto x = Tensor<double>::from({2}, {1.0, 0.0});
  auto l = Tensor<double>::from({2}, {500.0, -500.0});
  // both elements are maximally confident and correct
  double lp = bernoulli_logpdf_logits(x, l).item();
  EXPECT_TRUE(std::isfinite(lp));
  EXPECT_NEAR(lp, 0.0, 1e-12);
  auto wrong = Tensor<double>::from({2}, {0.0, 1.0});
  EXPECT_NEAR(bernoulli_logpdf_logits(wrong, l).item(), -1000.0, 1e-9);
}

TEST(Likelihood, GaussianMatchesHandComputation) {
  auto x = Tensor<double>::from({1}, {0.5});
  auto m = Tensor<double>::from({1}, {0.0});
  auto s = Tensor<double>::from({1}, {2.0});
  const double expected =
      -0.5 * (0.25 / 4.0) - std::log(2.0) - 0.5 * std::log(2.0 * 3.14159265358979323846);
  EXPECT_NEAR(gaussian_logpdf(x, m, s).item(), expected, 1e-12);
  EXPECT_THROW(gaussian_logpdf(x, m, Tensor<double>::from({1}, {0.0})),
               DomainError);
}

TEST(Likelihood, StandardNormalAgreesWithGeneralGaussian) {
  auto z = Tensor<double>::from({3}, {0.1, -1.5, 2.0});
  auto zero = Tensor<double>::zeros({3});
  auto one = Tensor<double>::ones({3});
  EXPECT_NEAR(standard_normal_logpdf(z).item(),
              gaussian_logpdf(z, zero, one).item(), 1e-12);
}

TEST(Likelihood, LogSumExp) {
  std::vector<double> v = {std::log(1.0), std::log(2.0), std::log(3.0)};
  EXPECT_NEAR(logsumexp(v), std::log(6.0), 1e-12);
  std::vector<double> big = {1000.0, 1000.0};
  EXPECT_NEAR(logsumexp(big), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_THROW(logsumexp(std::vector<double>{}), DomainError);
}

TEST(Affine, ZeroRawIsIdentity) {
  auto p3 = affine_from_raw_3d(Tensor<double>::zeros({12}));
  ASSERT_EQ(p3.shape(), (Shape{3, 4}));
  const std::vector<double> want3 = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  for (std::size_t i = 0; i < 12; ++i) EXPECT_DOUBLE_EQ(p3.data()[i], want3[i]);

  auto p2 = affine_from_raw_2d(Tensor<double>::zeros({6}));
  ASSERT_EQ(p2.shape(), (Shape{2, 3}));
  const std::vector<double> want2 = {1, 0, 0, 0, 1, 0};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(p2.data()[i], want2[i]);

  EXPECT_THROW(affine_from_raw_3d(Tensor<double>::zeros({11})), ShapeMismatch);
  EXPECT_THROW(affine_from_raw_2d(Tensor<double>::zeros({12})), ShapeMismatch);
}

TEST(Affine, RawEntriesLandWhereExpected) {
  std::vector<double> raw(12, 0.0);
  raw[1] = 0.25;   // A[0][1]
  raw[9] = -0.5;   // t_x
  auto p = affine_from_raw_3d(Tensor<double>::from({12}, raw));
  EXPECT_DOUBLE_EQ(p.data()[0 * 4 + 1], 0.25);
  EXPECT_DOUBLE_EQ(p.data()[0 * 4 + 3], -0.5);
  EXPECT_DOUBLE_EQ(p.data()[1 * 4 + 3], 0.0);
}

TEST(ContextEncoder, NoneEmitsZeros) {
  Rng rng(7);
  ContextEncoder<double>::Config cfg;
  cfg.kind = ContextKind::none;
  cfg.out_dim = 5;
  ContextEncoder<double> enc(cfg, rng);
  Context<double> ctx;
  auto e = enc.read(ctx, Tensor<double>::randn({64}, rng));
  ASSERT_EQ(e.shape(), (Shape{5}));
  for (double v : e.data()) EXPECT_DOUBLE_EQ(v, 0.0);

  Context<double> labeled;
  labeled.kind = ContextKind::class_label;
  EXPECT_THROW(enc.read(labeled, Tensor<double>::zeros({64})),
               ContextMismatch);
}

TEST(ContextEncoder, ClassLabelSelectsEmbeddingColumn) {
  Rng rng(11);
  ContextEncoder<double>::Config cfg;
  cfg.kind = ContextKind::class_label;
  cfg.out_dim = 4;
  cfg.n_classes = 3;
  ContextEncoder<double> enc(cfg, rng);
  ParamStore<double> ps;
  enc.register_params(ps, "g");
  const auto& embed = ps.get("g.embed");
  ASSERT_EQ(embed.shape(), (Shape{4, 3}));

  Context<double> ctx;
  ctx.kind = ContextKind::class_label;
  ctx.class_index = 2;
  auto e = enc.read(ctx, Tensor<double>::zeros({64}));
  for (std::size_t r = 0; r < 4; ++r)
    EXPECT_DOUBLE_EQ(e.data()[r], embed.data()[r * 3 + 2]);

  ctx.class_index = 3;
  EXPECT_THROW(enc.read(ctx, Tensor<double>::zeros({64})), ContextMismatch);
}

TEST(ContextEncoder, ViewFeaturesSumOverViews) {
  Rng rng(13);
  ContextEncoder<double>::Config cfg;
  cfg.kind = ContextKind::views;
  cfg.out_dim = 4;
  cfg.hidden = 6;
  cfg.n_cams = 3;
  cfg.glimpse = 4;
  ContextEncoder<double> enc(cfg, rng);
  auto h = Tensor<double>::randn({6}, rng);
  auto img_a = Tensor<double>::rand_uniform({8, 8}, rng, 0.0, 1.0);
  auto img_b = Tensor<double>::rand_uniform({8, 8}, rng, 0.0, 1.0);

  Context<double> both;
  both.kind = ContextKind::views;
  both.views = {img_a, img_b};
  both.camera_ids = {0, 2};
  auto e_both = enc.read(both, h);

  Context<double> only_a = both, only_b = both;
  only_a.views = {img_a};
  only_a.camera_ids = {0};
  only_b.views = {img_b};
  only_b.camera_ids = {2};
  auto e_a = enc.read(only_a, h);
  auto e_b = enc.read(only_b, h);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(e_both.data()[i], e_a.data()[i] + e_b.data()[i], 1e-12);

  // summing makes the read order-invariant
  Context<double> swapped = both;
  swapped.views = {img_b, img_a};
  swapped.camera_ids = {2, 0};
  auto e_swapped = enc.read(swapped, h);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(e_both.data()[i], e_swapped.data()[i], 1e-12);
}

TEST(ContextEncoder, ViewValidation) {
  Rng rng(17);
  ContextEncoder<double>::Config cfg;
  cfg.kind = ContextKind::views;
  cfg.hidden = 6;
  cfg.n_cams = 2;
  cfg.glimpse = 4;
  ContextEncoder<double> enc(cfg, rng);
  auto h = Tensor<double>::zeros({6});
  auto img = Tensor<double>::zeros({8, 8});

  Context<double> ctx;
  ctx.kind = ContextKind::views;
  ctx.views = {img};
  ctx.camera_ids = {0, 1};
  EXPECT_THROW(enc.read(ctx, h), ContextMismatch);

  ctx.camera_ids = {2};
  EXPECT_THROW(enc.read(ctx, h), ContextMismatch);

  ctx.camera_ids = {0};
  ctx.views = {Tensor<double>::zeros({8})};
  EXPECT_THROW(enc.read(ctx, h), ShapeMismatch);

  EXPECT_THROW(
      ContextEncoder<double>(
          []  {
            ContextEncoder<double>::Config c;
            c.kind = ContextKind::class_label;
            c.n_classes = 0;
            return c;
          }(),
          rng),
      ConfigError);
}

GenCore<double>::Config small_volume_config(std::size_t steps) {
  GenCore<double>::Config cfg;
  cfg.z_dim = 2;
  cfg.hidden = 6;
  cfg.steps = steps;
  cfg.canvas_kind = CanvasKind::volume;
  cfg.canvas_extents = {4, 4, 4};
  cfg.write_block = 2;
  cfg.context.kind = ContextKind::none;
  cfg.context.out_dim = 3;
  return cfg;
}

TEST(GenCore, ParameterCountIndependentOfSteps) {
  std::vector<std::size_t> counts;
  for (std::size_t steps : {1u, 4u, 8u}) {
    Rng rng(23);
    GenCore<double> core(small_volume_config(steps), rng);
    ParamStore<double> ps;
    core.register_params(ps, "gen");
    counts.push_back(ps.scalar_count());
  }
  EXPECT_EQ(counts[0], counts[1]);
  EXPECT_EQ(counts[1], counts[2]);
  EXPECT_GT(counts[0], 0u);
}

TEST(GenCore, RolloutShapesAndDeterminism) {
  Rng rng(29);
  GenCore<double> core(small_volume_config(3), rng);
  Context<double> ctx;
  Rng zrng(31);
  auto zs = core.sample_prior(zrng);
  ASSERT_EQ(zs.size(), 3u);
  ASSERT_EQ(zs[0].shape(), (Shape{2}));

  auto r1 = core.rollout(zs, ctx);
  auto r2 = core.rollout(zs, ctx);
  ASSERT_EQ(r1.canvas.shape(), (Shape{4, 4, 4}));
  ASSERT_EQ(r1.final_state.h.shape(), (Shape{6}));
  EXPECT_EQ(r1.canvas.data(), r2.canvas.data());

  // wrong trajectory length and wrong latent width are rejected
  std::vector<Tensor<double>> two(zs.begin(), zs.begin() + 2);
  EXPECT_THROW(core.rollout(two, ctx), ShapeMismatch);
  std::vector<Tensor<double>> wide = {Tensor<double>::zeros({3}),
                                      Tensor<double>::zeros({3}),
                                      Tensor<double>::zeros({3})};
  EXPECT_THROW(core.rollout(wide, ctx), ShapeMismatch);
}

TEST(GenCore, ZeroStateWritesNothing) {
  // all write-head biases start at zero, so a zero state paints nothing
  Rng rng(37);
  GenCore<double> core(small_volume_config(2), rng);
  GenCore<double>::State s = core.initial_state();
  auto canvas = Tensor<double>::randn({4, 4, 4}, rng);
  auto before = canvas.data();
  auto after = core.write(s, canvas);
  for (std::size_t i = 0; i < before.size(); ++i)
    EXPECT_NEAR(after.data()[i], before[i], 1e-15);
}

TEST(GenCore, MeshCanvasAccumulates) {
  Rng rng(41);
  GenCore<double>::Config cfg;
  cfg.z_dim = 2;
  cfg.hidden = 6;
  cfg.steps = 2;
  cfg.canvas_kind = CanvasKind::mesh;
  cfg.mesh_canvas_dim = 10;
  cfg.context.kind = ContextKind::none;
  cfg.context.out_dim = 3;
  GenCore<double> core(cfg, rng);
  Context<double> ctx;
  Rng zrng(43);
  auto roll = core.rollout(core.sample_prior(zrng), ctx);
  ASSERT_EQ(roll.canvas.shape(), (Shape{10}));

  // two identical states write twice the single increment
  auto z = Tensor<double>::from({2}, {0.4, -0.2});
  auto e = Tensor<double>::zeros({3});
  auto s = core.step_state(z, e, core.initial_state());
  auto once = core.write(s, core.initial_canvas());
  auto twice = core.write(s, once);
  for (std::size_t i = 0; i < 10; ++i)
    EXPECT_NEAR(twice.data()[i], 2.0 * once.data()[i], 1e-12);
}

TEST(GenCore, RolloutGradcheck) {
  Rng rng(47);
  GenCore<double> core(small_volume_config(2), rng);
  Context<double> ctx;
  auto w = Tensor<double>::randn({4, 4, 4}, rng);

  auto f = [&](const Tensor<double>& v) {
    std::vector<Tensor<double>> zs = {reshape(slice(v, 0, 0, 2), {2}),
                                      reshape(slice(v, 0, 2, 2), {2})};
    auto roll = core.rollout(zs, ctx);
    return sum(mul(roll.canvas, w));
  };
  Rng xr(53);
  auto x0 = Tensor<double>::randn({4}, xr);
  auto res = grad_check<double>(f, x0, 1e-5);
  EXPECT_LT(res.max_rel_err, 1e-6) << "worst index " << res.worst_index;
}

TEST(GenCore, ClassConditionedRolloutDependsOnLabel) {
  Rng rng(59);
  auto cfg = small_volume_config(2);
  cfg.context.kind = ContextKind::class_label;
  cfg.context.n_classes = 4;
  GenCore<double> core(cfg, rng);
  Rng zrng(61);
  auto zs = core.sample_prior(zrng);

  Context<double> c0, c1;
  c0.kind = c1.kind = ContextKind::class_label;
  c0.class_index = 0;
  c1.class_index = 1;
  auto r0 = core.rollout(zs, c0);
  auto r1 = core.rollout(zs, c1);
  double diff = 0;
  for (std::size_t i = 0; i < r0.canvas.size(); ++i)
    diff = std::max(diff, std::abs(r0.canvas.data()[i] - r1.canvas.data()[i]));
  EXPECT_GT(diff, 1e-6);
}

TEST(GenCore, SamplePriorIsSeedDeterministic) {
  Rng rng(67);
  GenCore<double> core(small_volume_config(3), rng);
  Rng a(5), b(5), c(6);
  auto za = core.sample_prior(a);
  auto zb = core.sample_prior(b);
  auto zc = core.sample_prior(c);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(za[t].data(), zb[t].data());
  }
  EXPECT_NE(za[0].data(), zc[0].data());
}

}  // namespace
