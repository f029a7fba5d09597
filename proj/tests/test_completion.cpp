#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "toy_elbo.hpp"
#include "voxgen/completion.hpp"

using namespace voxgen;
using namespace voxgen::testsuite;

namespace {

TEST(Mask, Constructors) {
  auto all = ObservationMask::all_observed({2, 2, 2});
  EXPECT_EQ(all.observed.size(), 8u);
  EXPECT_EQ(all.unobserved_count(), 0u);

  auto half = ObservationMask::left_half_hidden({2, 2, 2});
  EXPECT_EQ(half.unobserved_count(), 4u);
  // hidden voxels are exactly those with x = 0
  std::size_t i = 0;
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x, ++i)
        EXPECT_EQ(half.observed[i], x >= 1);

  EXPECT_THROW(ObservationMask::left_half_hidden({4, 4}), ShapeMismatch);
}

TEST(CompleteStep, AllObservedMaskIsIdentity) {
  auto m = make_toy_elbo_model(301);
  auto mask = ObservationMask::all_observed({2, 2, 2});
  Rng rng(5);
  auto out = complete_step(m.gen, m.inf, m.proj, m.ctx, m.x, mask, rng);
  EXPECT_EQ(out.data(), m.x.data());
}

TEST(CompleteStep, ObservedEntriesInvariantAndBinary) {
  auto m = make_toy_elbo_model(303);
  auto mask = ObservationMask::left_half_hidden({2, 2, 2});
  Rng rng(7);
  Tensor<double> x = m.x;
  for (std::size_t it = 0; it < 50; ++it) {
    x = complete_step(m.gen, m.inf, m.proj, m.ctx, x, mask, rng);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (mask.observed[i]) EXPECT_EQ(x.data()[i], m.x.data()[i]);
      EXPECT_TRUE(x.data()[i] == 0.0 || x.data()[i] == 1.0);
    }
  }
}

TEST(CompleteStep, ShapeValidation) {
  auto m = make_toy_elbo_model(305);
  auto mask = ObservationMask::all_observed({2, 2, 4});
  Rng rng(9);
  EXPECT_THROW(complete_step(m.gen, m.inf, m.proj, m.ctx, m.x, mask, rng),
               ShapeMismatch);
}

TEST(Complete, SeedReplayAndSnapshotSelection) {
  auto m = make_toy_elbo_model(307);
  auto mask = ObservationMask::left_half_hidden({2, 2, 2});
  auto a = complete(m.gen, m.inf, m.proj, m.ctx, m.x, mask, 12, 99);
  auto b = complete(m.gen, m.inf, m.proj, m.ctx, m.x, mask, 12, 99);
  EXPECT_EQ(a.final.data(), b.final.data());
  // snapshots 1..8 recorded, 100 skipped (chain too short)
  EXPECT_EQ(a.snapshot_iters,
            (std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7, 8}));
  ASSERT_EQ(a.snapshots.size(), 8u);

  EXPECT_THROW(complete(m.gen, m.inf, m.proj, m.ctx, m.x, mask, 0, 1),
               DomainError);
}

TEST(Complete, OneIterEqualsSingleStepFromNoiseInit) {
  auto m = make_toy_elbo_model(309);
  auto mask = ObservationMask::left_half_hidden({2, 2, 2});
  const std::uint64_t seed = 1234;
  auto chain = complete(m.gen, m.inf, m.proj, m.ctx, m.x, mask, 1, seed);

  Rng rng(seed);
  Tensor<double> x0 = Tensor<double>::zeros({2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i)
    x0.at(i) = mask.observed[i] ? m.x.data()[i]
                                : (rng.uniform() < 0.5 ? 1.0 : 0.0);
  auto manual = complete_step(m.gen, m.inf, m.proj, m.ctx, x0, mask, rng);
  EXPECT_EQ(chain.final.data(), manual.data());
}

TEST(Complete, ChainMarginalMatchesQuadratureConditional) {
  // kernel uses q in place of the exact posterior, so fit q to the model
  // first; the stationary marginal should then land on p(x_u | x_o)
  auto m = make_toy_elbo_model(311);
  sleep_train_inference(m, 3000, 42);

  auto mask = ObservationMask::left_half_hidden({2, 2, 2});
  auto cond = toy_conditional_quadrature(m, mask.observed, m.x, 81, 6.0);
  ASSERT_EQ(cond.size(), 16u);
  double sum = 0;
  for (double c : cond) sum += c;
  EXPECT_NEAR(sum, 1.0, 1e-9);

  const std::size_t burn = 2000, steps = 100000;
  std::vector<double> tally(16, 0.0);
  Rng rng(77);
  Tensor<double> x = Tensor<double>::zeros({2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i)
    x.at(i) = mask.observed[i] ? m.x.data()[i]
                               : (rng.uniform() < 0.5 ? 1.0 : 0.0);
  for (std::size_t it = 0; it < steps; ++it) {
    x = complete_step(m.gen, m.inf, m.proj, m.ctx, x, mask, rng);
    if (it >= burn) tally[hidden_state_index(x, mask.observed)] += 1.0;
  }
  for (double& t : tally) t /= static_cast<double>(steps - burn);

  const double tv = total_variation(tally, cond);
  EXPECT_LE(tv, 0.05) << "chain/quadrature TV " << tv;
}

}  // namespace
