#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "voxgen/image_io.hpp"
#include "voxgen/mesh.hpp"

namespace voxgen {

/// Pinhole camera at the origin looking along +z, y up. A vertex is
/// projected to (focal*X/Z, focal*Y/Z) and mapped onto the pixel grid with
/// image row 0 at the top.
struct Camera {
  std::size_t width = 64, height = 64;
  double focal = 2.0;
  double near = 0.05;
};

namespace detail {

struct ProjectedVertex {
  double px, py, z;
};

inline ProjectedVertex project_vertex(const Vec3& v, const Camera& cam) {
  if (v[2] <= cam.near)
    throw DegenerateCamera("vertex at or behind the near plane (z = " +
                           std::to_string(v[2]) + ")");
  const double xn = cam.focal * v[0] / v[2];
  const double yn = cam.focal * v[1] / v[2];
  return {(xn + 1.0) * 0.5 * static_cast<double>(cam.width - 1),
          (1.0 - yn) * 0.5 * static_cast<double>(cam.height - 1), v[2]};
}

}  // namespace detail

/// Flat-shaded software rasterizer with a z-buffer. Triangles are shaded by
/// three fixed directional lights plus an ambient term; winding order is
/// irrelevant (no culling, two-sided normals). The output is a deterministic
/// function of mesh and camera. Not differentiable.
inline ImageRGB render_mesh(const TriangleMesh& mesh, const Camera& cam) {
  ImageRGB im(cam.width, cam.height, 0.f);
  std::vector<float> zbuf(cam.width * cam.height,
                          std::numeric_limits<float>::infinity());

  std::vector<detail::ProjectedVertex> proj(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    proj[i] = detail::project_vertex(mesh.vertices[i], cam);

  static const Vec3 light_dirs[3] = {
      vnormalize({0.4, 0.3, -0.85}),
      vnormalize({-0.5, 0.2, -0.8}),
      vnormalize({0.1, -0.6, -0.75}),
  };
  static const double light_w[3] = {0.45, 0.25, 0.15};
  const double ambient = 0.25;

  for (std::size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const auto& f = mesh.faces[fi];
    const auto& a = proj[f[0]];
    const auto& b = proj[f[1]];
    const auto& c = proj[f[2]];

    const double area =
        (b.px - a.px) * (c.py - a.py) - (c.px - a.px) * (b.py - a.py);
    if (area == 0.0) continue;

    // World-space flat normal, two-sided.
    const Vec3 n = vnormalize(vcross(vsub(mesh.vertices[f[1]],
                                          mesh.vertices[f[0]]),
                                     vsub(mesh.vertices[f[2]],
                                          mesh.vertices[f[0]])));
    double intensity = ambient;
    for (int li = 0; li < 3; ++li)
      intensity += light_w[li] * std::abs(vdot(n, light_dirs[li]));
    intensity = std::min(intensity, 1.0);

    std::array<float, 3> base = {0.8f, 0.8f, 0.8f};
    if (fi < mesh.face_colors.size()) base = mesh.face_colors[fi];
    const float shade[3] = {static_cast<float>(base[0] * intensity),
                            static_cast<float>(base[1] * intensity),
                            static_cast<float>(base[2] * intensity)};

    const long x0 = std::max(0L, static_cast<long>(
                                     std::floor(std::min({a.px, b.px, c.px}))));
    const long x1 = std::min(static_cast<long>(cam.width) - 1,
                             static_cast<long>(
                                 std::ceil(std::max({a.px, b.px, c.px}))));
    const long y0 = std::max(0L, static_cast<long>(
                                     std::floor(std::min({a.py, b.py, c.py}))));
    const long y1 = std::min(static_cast<long>(cam.height) - 1,
                             static_cast<long>(
                                 std::ceil(std::max({a.py, b.py, c.py}))));

    for (long y = y0; y <= y1; ++y)
      for (long x = x0; x <= x1; ++x) {
        const double px = static_cast<double>(x);
        const double py = static_cast<double>(y);
        const double w0 = ((b.px - a.px) * (py - a.py) -
                           (px - a.px) * (b.py - a.py)) /
                          area;
        const double w1 = ((px - a.px) * (c.py - a.py) -
                           (c.px - a.px) * (py - a.py)) /
                          area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double z = w2 * a.z + w1 * b.z + w0 * c.z;
        const std::size_t pi = static_cast<std::size_t>(y) * cam.width +
                               static_cast<std::size_t>(x);
        if (z < zbuf[pi]) {
          zbuf[pi] = static_cast<float>(z);
          float* dst = im.pixel(static_cast<std::size_t>(x),
                                static_cast<std::size_t>(y));
          dst[0] = shade[0];
          dst[1] = shade[1];
          dst[2] = shade[2];
        }
      }
  }
  return im;
}

/// Fraction-free silhouette: pixels covered by any triangle.
inline std::size_t covered_pixels(const ImageRGB& im) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < im.width * im.height; ++i)
    if (im.rgb[3 * i] > 0.f || im.rgb[3 * i + 1] > 0.f ||
        im.rgb[3 * i + 2] > 0.f)
      ++n;
  return n;
}

/// Mean squared error over RGB channels of equal-sized images.
inline double image_mse(const ImageRGB& a, const ImageRGB& b) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeMismatch("image size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = static_cast<double>(a.rgb[i]) - b.rgb[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.rgb.size());
}

// ---------------------------------------------------------------------------
// Score-function estimator
// ---------------------------------------------------------------------------

/// Multi-sample REINFORCE gradient with a leave-one-out baseline.
/// Sample k perturbs the parameter vector by sigma*eps_k and observes
/// losses[k]; the estimate is
///   g_d = (1/K) sum_k signal_k * eps[k][d] / sigma,
///   signal_k = loss_k - mean_{j != k} loss_j.
/// The signal is computed from pairwise differences, so identical losses
/// yield an exactly zero gradient.
template <class S>
inline std::vector<S> reinforce_gradient(
    const std::vector<S>& losses, const std::vector<std::vector<S>>& eps,
    S sigma) {
  const std::size_t K = losses.size();
  if (K < 2) throw ShapeMismatch("reinforce needs at least 2 samples");
  if (eps.size() != K) throw ShapeMismatch("losses/eps count mismatch");
  if (!(sigma > S(0))) throw DomainError("reinforce sigma must be > 0");
  const std::size_t dim = eps[0].size();
  for (const auto& e : eps)
    if (e.size() != dim) throw ShapeMismatch("eps dimension mismatch");

  std::vector<S> grad(dim, S(0));
  for (std::size_t k = 0; k < K; ++k) {
    S signal = S(0);
    for (std::size_t j = 0; j < K; ++j)
      if (j != k) signal += losses[k] - losses[j];
    signal /= static_cast<S>(K - 1);
    const S scale = signal / (sigma * static_cast<S>(K));
    for (std::size_t d = 0; d < dim; ++d) grad[d] += scale * eps[k][d];
  }
  return grad;
}

}  // namespace voxgen
