#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "voxgen/common.hpp"
#include "voxgen/serialize.hpp"

namespace voxgen {

using Vec3 = std::array<double, 3>;

inline Vec3 vadd(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 vsub(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 vscale(const Vec3& a, double s) {
  return {a[0] * s, a[1] * s, a[2] * s};
}
inline double vdot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline Vec3 vcross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}
inline double vnorm(const Vec3& a) { return std::sqrt(vdot(a, a)); }
inline Vec3 vnormalize(const Vec3& a) {
  const double n = vnorm(a);
  return n > 0 ? vscale(a, 1.0 / n) : a;
}

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> faces;
  std::vector<std::array<float, 3>> face_colors;  // empty or one per face

  std::size_t edge_count() const {
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& f : faces)
      for (int i = 0; i < 3; ++i) {
        const std::size_t a = f[i], b = f[(i + 1) % 3];
        edges.emplace(std::min(a, b), std::max(a, b));
      }
    return edges.size();
  }

  ObjMesh to_obj() const {
    ObjMesh o;
    o.vertices.assign(vertices.begin(), vertices.end());
    o.faces = faces;
    return o;
  }
};

/// Unit icosphere: regular icosahedron with each subdivision splitting every
/// face into four, midpoints deduplicated and pushed onto the sphere.
/// Two subdivisions give 162 vertices, 320 faces, 480 edges.
inline TriangleMesh make_icosphere(int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v = vnormalize(v);
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> midpoint;
    auto mid = [&](std::size_t a, std::size_t b) {
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      m.vertices.push_back(
          vnormalize(vscale(vadd(m.vertices[a], m.vertices[b]), 0.5)));
      const std::size_t idx = m.vertices.size() - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<std::size_t, 3>> next;
    next.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const std::size_t ab = mid(f[0], f[1]);
      const std::size_t bc = mid(f[1], f[2]);
      const std::size_t ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  return m;
}

/// Rotation about x, then y, then z: R = Rz(c) . Ry(b) . Rx(a).
inline std::array<Vec3, 3> euler_rotation(double a, double b, double c) {
  const double ca = std::cos(a), sa = std::sin(a);
  const double cb = std::cos(b), sb = std::sin(b);
  const double cc = std::cos(c), sc = std::sin(c);
  return {Vec3{cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa},
          Vec3{sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa},
          Vec3{-sb, cb * sa, cb * ca}};
}

inline Vec3 rotate(const std::array<Vec3, 3>& R, const Vec3& v) {
  return {vdot(R[0], v), vdot(R[1], v), vdot(R[2], v)};
}

/// Fixed six-color palette cycled over faces.
inline std::array<float, 3> face_palette(std::size_t face_index) {
  static const std::array<std::array<float, 3>, 6> palette = {{
      {0.85f, 0.25f, 0.25f},
      {0.25f, 0.70f, 0.30f},
      {0.25f, 0.40f, 0.85f},
      {0.90f, 0.75f, 0.20f},
      {0.65f, 0.30f, 0.75f},
      {0.25f, 0.75f, 0.75f},
  }};
  return palette[face_index % 6];
}

/// Mesh parameterization: one radial displacement per icosphere vertex plus
/// a 6-dof pose (3 Euler angles, 3 translation components).
struct MeshParams {
  std::vector<double> radial;  // one per vertex, strictly positive
  std::array<double, 3> euler{0, 0, 0};
  std::array<double, 3> translation{0, 0, 0};
};

/// Instantiates the surface: v_i = R . (r_i * u_i) + t over unit directions
/// u_i of the template sphere. Face colors follow the fixed palette.
inline TriangleMesh apply_mesh_params(const TriangleMesh& sphere,
                                      const MeshParams& params) {
  if (params.radial.size() != sphere.vertices.size())
    throw ShapeMismatch("radial displacement count " +
                        std::to_string(params.radial.size()) +
                        " does not match vertex count " +
                        std::to_string(sphere.vertices.size()));
  for (double r : params.radial)
    if (!(r > 0.0))
      throw NonPositiveDisplacement("radial displacements must be > 0");
  TriangleMesh out;
  out.vertices.resize(sphere.vertices.size());
  const auto R =
      euler_rotation(params.euler[0], params.euler[1], params.euler[2]);
  for (std::size_t i = 0; i < sphere.vertices.size(); ++i)
    out.vertices[i] = vadd(
        rotate(R, vscale(sphere.vertices[i], params.radial[i])),
        params.translation);
  out.faces = sphere.faces;
  out.face_colors.resize(out.faces.size());
  for (std::size_t i = 0; i < out.faces.size(); ++i)
    out.face_colors[i] = face_palette(i);
  return out;
}

/// Axis-aligned cube fixture (8 vertices, 12 faces), side length `side`,
/// centered at `center`.
inline TriangleMesh make_cube(double side, const Vec3& center) {
  TriangleMesh m;
  const double h = side / 2.0;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({center[0] + ((i & 1) ? h : -h),
                          center[1] + ((i & 2) ? h : -h),
                          center[2] + ((i & 4) ? h : -h)});
  // Each quad split into two triangles, outward winding not required by the
  // renderer (no culling).
  m.faces = {{0, 1, 3}, {0, 3, 2}, {4, 6, 7}, {4, 7, 5},
             {0, 4, 5}, {0, 5, 1}, {2, 3, 7}, {2, 7, 6},
             {0, 2, 6}, {0, 6, 4}, {1, 5, 7}, {1, 7, 3}};
  m.face_colors.resize(m.faces.size());
  for (std::size_t i = 0; i < m.faces.size(); ++i)
    m.face_colors[i] = face_palette(i);
  return m;
}

}  // namespace voxgen
