#include "voxgen/mesh.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "voxgen/render.hpp"

using namespace voxgen;

TEST(Icosphere, CountsAndEulerCharacteristic) {
  struct Want {
    int sub;
    std::size_t v, f, e;
  };
  const Want table[] = {{0, 12, 20, 30}, {1, 42, 80, 120}, {2, 162, 320, 480}};
  for (const auto& w : table) {
    auto m = make_icosphere(w.sub);
    EXPECT_EQ(m.vertices.size(), w.v) << "sub " << w.sub;
    EXPECT_EQ(m.faces.size(), w.f);
    EXPECT_EQ(m.edge_count(), w.e);
    // V - E + F = 2 for a sphere
    EXPECT_EQ(static_cast<long>(m.vertices.size()) -
                  static_cast<long>(m.edge_count()) +
                  static_cast<long>(m.faces.size()),
              2);
    for (const auto& v : m.vertices) EXPECT_NEAR(vnorm(v), 1.0, 1e-12);
    for (const auto& f : m.faces)
      for (auto i : f) EXPECT_LT(i, m.vertices.size());
  }
}

TEST(Icosphere, VerticesDistinct) {
  auto m = make_icosphere(2);
  double min_d = 10.0;
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    for (std::size_t j = i + 1; j < m.vertices.size(); ++j)
      min_d = std::min(min_d, vnorm(vsub(m.vertices[i], m.vertices[j])));
  EXPECT_GT(min_d, 0.1);  // well separated, no failed dedup duplicates
}

TEST(Euler, RotationIsSpecialOrthogonal) {
  Rng rng(41);
  for (int i = 0; i < 20; ++i) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3),
                 c = rng.uniform(-3, 3);
    auto R = euler_rotation(a, b, c);
    // rows orthonormal
    for (int r = 0; r < 3; ++r)
      for (int s = 0; s < 3; ++s)
        EXPECT_NEAR(vdot(R[r], R[s]), r == s ? 1.0 : 0.0, 1e-12);
    const double det = vdot(R[0], vcross(R[1], R[2]));
    EXPECT_NEAR(det, 1.0, 1e-12);
  }
  // identity at zero angles
  auto I = euler_rotation(0, 0, 0);
  EXPECT_NEAR(I[0][0], 1, 1e-15);
  EXPECT_NEAR(I[1][1], 1, 1e-15);
  EXPECT_NEAR(I[2][2], 1, 1e-15);
  // pure x rotation maps +y to (0, cos, sin)
  auto Rx = euler_rotation(0.3, 0, 0);
  auto v = rotate(Rx, {0, 1, 0});
  EXPECT_NEAR(v[0], 0.0, 1e-15);
  EXPECT_NEAR(v[1], std::cos(0.3), 1e-15);
  EXPECT_NEAR(v[2], std::sin(0.3), 1e-15);
}

TEST(MeshParams, UnitRadialIdentityPose) {
  auto sphere = make_icosphere(1);
  MeshParams p;
  p.radial.assign(sphere.vertices.size(), 1.0);
  auto m = apply_mesh_params(sphere, p);
  for (std::size_t i = 0; i < sphere.vertices.size(); ++i)
    EXPECT_NEAR(vnorm(vsub(m.vertices[i], sphere.vertices[i])), 0.0, 1e-12);
  ASSERT_EQ(m.face_colors.size(), m.faces.size());
  // palette cycles with period 6
  EXPECT_EQ(m.face_colors[0], m.face_colors[6]);
  std::set<std::array<float, 3>> distinct(m.face_colors.begin(),
                                          m.face_colors.end());
  EXPECT_EQ(distinct.size(), 6u);
}

TEST(MeshParams, RadialScalesAndPoseMoves) {
  auto sphere = make_icosphere(0);
  MeshParams p;
  p.radial.assign(12, 2.5);
  p.translation = {1.0, -2.0, 3.0};
  auto m = apply_mesh_params(sphere, p);
  for (const auto& v : m.vertices)
    EXPECT_NEAR(vnorm(vsub(v, p.translation)), 2.5, 1e-12);

  // rotation preserves pairwise distances
  MeshParams q;
  q.radial.assign(12, 1.0);
  q.euler = {0.4, -0.8, 1.2};
  auto mr = apply_mesh_params(sphere, q);
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j)
      EXPECT_NEAR(vnorm(vsub(mr.vertices[i], mr.vertices[j])),
                  vnorm(vsub(sphere.vertices[i], sphere.vertices[j])), 1e-12);
}

TEST(MeshParams, RejectsNonPositiveDisplacement) {
  auto sphere = make_icosphere(0);
  MeshParams p;
  p.radial.assign(12, 1.0);
  p.radial[3] = 0.0;
  EXPECT_THROW(apply_mesh_params(sphere, p), NonPositiveDisplacement);
  p.radial[3] = -0.5;
  EXPECT_THROW(apply_mesh_params(sphere, p), NonPositiveDisplacement);
  p.radial.pop_back();
  EXPECT_THROW(apply_mesh_params(sphere, p), ShapeMismatch);
}

TEST(Cube, FixtureTopology) {
  auto c = make_cube(1.0, {0, 0, 4});
  EXPECT_EQ(c.vertices.size(), 8u);
  EXPECT_EQ(c.faces.size(), 12u);
  EXPECT_EQ(c.edge_count(), 18u);
  for (const auto& v : c.vertices) {
    EXPECT_NEAR(std::abs(v[0]), 0.5, 1e-15);
    EXPECT_NEAR(std::abs(v[1]), 0.5, 1e-15);
    EXPECT_NEAR(std::abs(v[2] - 4.0), 0.5, 1e-15);
  }
}

TEST(Render, CubeSilhouetteMatchesAnalyticArea) {
  // Face-on unit cube: the silhouette is the near face, a square of side
  // focal*s/(Z - s/2) in normalized units.
  Camera cam;
  cam.width = cam.height = 513;
  cam.focal = 1.5;
  const double s = 1.0, Z = 4.0;
  auto cube = make_cube(s, {0, 0, Z});
  auto im = render_mesh(cube, cam);
  const double side_ndc = cam.focal * s / (Z - s / 2.0);
  const double side_px = side_ndc * 0.5 * static_cast<double>(cam.width - 1);
  const double analytic = side_px * side_px;
  const double got = static_cast<double>(covered_pixels(im));
  EXPECT_LT(std::abs(got - analytic) / analytic, 0.02)
      << "analytic " << analytic << " rasterized " << got;
}

TEST(Render, DeterministicAndDepthOrdered) {
  Camera cam;
  cam.width = cam.height = 65;
  auto sphere = make_icosphere(1);
  MeshParams p;
  p.radial.assign(sphere.vertices.size(), 1.0);
  p.translation = {0.1, -0.05, 5.0};
  p.euler = {0.3, 0.7, -0.2};
  auto mesh = apply_mesh_params(sphere, p);
  auto im1 = render_mesh(mesh, cam);
  auto im2 = render_mesh(mesh, cam);
  EXPECT_EQ(im1.rgb, im2.rgb);  // bitwise deterministic

  // Two stacked triangles covering the center: the nearer one must win.
  TriangleMesh two;
  two.vertices = {{-1, -1, 2}, {1, -1, 2}, {0, 1, 2},
                  {-1, -1, 3}, {1, -1, 3}, {0, 1, 3}};
  two.faces = {{3, 4, 5}, {0, 1, 2}};  // far listed first
  two.face_colors = {{0.f, 1.f, 0.f}, {1.f, 0.f, 0.f}};
  auto imd = render_mesh(two, cam);
  const float* center = imd.pixel(32, 32);
  EXPECT_GT(center[0], 0.f);   // red (near) visible
  EXPECT_EQ(center[1], 0.f);   // green (far) occluded
}

TEST(Render, LambertianBrightnessOrdering) {
  // A triangle facing the camera reflects the headlight-ish lights more
  // strongly than the same triangle tilted nearly edge-on.
  Camera cam;
  cam.width = cam.height = 33;
  TriangleMesh flat;
  flat.vertices = {{-1, -1, 4}, {1, -1, 4}, {0, 1, 4}};
  flat.faces = {{0, 1, 2}};
  flat.face_colors = {{1.f, 1.f, 1.f}};
  TriangleMesh tilted = flat;
  tilted.vertices = {{-1, -1, 3.0}, {1, -1, 5.0}, {0, 1, 4.0}};
  auto bright = render_mesh(flat, cam);
  auto dim = render_mesh(tilted, cam);
  EXPECT_GT(bright.pixel(16, 16)[0], dim.pixel(16, 16)[0]);
}

TEST(Render, DegenerateCameraThrows) {
  Camera cam;
  auto cube = make_cube(1.0, {0, 0, 0.3});  // straddles the near plane
  EXPECT_THROW(render_mesh(cube, cam), DegenerateCamera);
  auto behind = make_cube(1.0, {0, 0, -3.0});
  EXPECT_THROW(render_mesh(behind, cam), DegenerateCamera);
}

TEST(Reinforce, ExactlyZeroOnConstantLoss) {
  Rng rng(42);
  const std::size_t K = 6, dim = 20;
  std::vector<std::vector<double>> eps(K, std::vector<double>(dim));
  for (auto& e : eps)
    for (auto& v : e) v = rng.normal();
  // identical losses, including an awkward value
  std::vector<double> losses(K, 0.1 + 1.0 / 3.0);
  auto g = reinforce_gradient(losses, eps, 0.02);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Reinforce, MatchesNaiveFormula) {
  Rng rng(43);
  const std::size_t K = 5, dim = 3;
  std::vector<double> losses(K);
  std::vector<std::vector<double>> eps(K, std::vector<double>(dim));
  for (auto& l : losses) l = rng.uniform(-2, 2);
  for (auto& e : eps)
    for (auto& v : e) v = rng.normal();
  const double sigma = 0.1;
  auto g = reinforce_gradient(losses, eps, sigma);

  for (std::size_t d = 0; d < dim; ++d) {
    double want = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      double others = 0.0;
      for (std::size_t j = 0; j < K; ++j)
        if (j != k) others += losses[j];
      const double baseline = others / static_cast<double>(K - 1);
      want += (losses[k] - baseline) * eps[k][d] / sigma;
    }
    want /= static_cast<double>(K);
    EXPECT_NEAR(g[d], want, 1e-12);
  }
}

TEST(Reinforce, RecoversLinearLossGradient) {
  // loss(theta) = g . theta: the estimator is unbiased for g; averaging
  // many independent estimates should land close.
  Rng rng(44);
  const std::size_t dim = 4, K = 8;
  const std::vector<double> gtrue = {1.5, -0.7, 0.3, 2.0};
  const double sigma = 0.05;
  std::vector<double> acc(dim, 0.0);
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    std::vector<std::vector<double>> eps(K, std::vector<double>(dim));
    std::vector<double> losses(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t d = 0; d < dim; ++d) {
        eps[k][d] = rng.normal();
        losses[k] += gtrue[d] * sigma * eps[k][d];
      }
    }
    auto g = reinforce_gradient(losses, eps, sigma);
    for (std::size_t d = 0; d < dim; ++d) acc[d] += g[d];
  }
  for (std::size_t d = 0; d < dim; ++d)
    EXPECT_NEAR(acc[d] / trials, gtrue[d], 0.08) << "dim " << d;
}

TEST(Reinforce, VarianceShrinksWithMoreSamples) {
  Rng rng(45);
  const double sigma = 0.1;
  auto estimate_var = [&](std::size_t K) {
    const int trials = 1500;
    double m1 = 0.0, m2 = 0.0;
    for (int t = 0; t < trials; ++t) {
      std::vector<std::vector<double>> eps(K, std::vector<double>(1));
      std::vector<double> losses(K);
      for (std::size_t k = 0; k < K; ++k) {
        eps[k][0] = rng.normal();
        const double x = sigma * eps[k][0];
        losses[k] = 2.0 * x + 3.0 * x * x;
      }
      const double g = reinforce_gradient(losses, eps, sigma)[0];
      m1 += g;
      m2 += g * g;
    }
    m1 /= trials;
    m2 /= trials;
    return m2 - m1 * m1;
  };
  const double v2 = estimate_var(2), v8 = estimate_var(8), v32 = estimate_var(32);
  EXPECT_GT(v2, v8);
  EXPECT_GT(v8, v32);
}

TEST(Reinforce, InputValidation) {
  std::vector<std::vector<double>> eps = {{0.1}, {0.2}};
  EXPECT_THROW(reinforce_gradient<double>({1.0}, {{0.1}}, 0.1), ShapeMismatch);
  EXPECT_THROW(reinforce_gradient<double>({1.0, 2.0}, eps, 0.0), DomainError);
  EXPECT_THROW(reinforce_gradient<double>({1.0, 2.0}, {{0.1}, {0.2, 0.3}}, 0.1),
               ShapeMismatch);
}

TEST(ObjExport, IcosphereSurvivesRoundTrip) {
  auto m = make_icosphere(2);
  auto obj = m.to_obj();
  EXPECT_EQ(obj.vertices.size(), 162u);
  EXPECT_EQ(obj.faces.size(), 320u);
}
