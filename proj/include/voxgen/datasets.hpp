#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "voxgen/common.hpp"
#include "voxgen/serialize.hpp"
#include "voxgen/tensor.hpp"
#include "voxgen/vst.hpp"

namespace voxgen {

enum class PrimitiveKind { cube, sphere, pyramid, cylinder, capsule, ellipsoid };

inline const char* primitive_kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::cube: return "cube";
    case PrimitiveKind::sphere: return "sphere";
    case PrimitiveKind::pyramid: return "pyramid";
    case PrimitiveKind::cylinder: return "cylinder";
    case PrimitiveKind::capsule: return "capsule";
    case PrimitiveKind::ellipsoid: return "ellipsoid";
  }
  throw Error("unknown primitive kind");
}

inline PrimitiveKind primitive_kind_from_string(const std::string& s) {
  for (PrimitiveKind k :
       {PrimitiveKind::cube, PrimitiveKind::sphere, PrimitiveKind::pyramid,
        PrimitiveKind::cylinder, PrimitiveKind::capsule,
        PrimitiveKind::ellipsoid})
    if (s == primitive_kind_name(k)) return k;
  throw ConfigError("unknown primitive kind: " + s);
}

constexpr std::size_t kPrimitiveKindCount = 6;

inline PrimitiveKind primitive_kind_from_index(std::size_t i) {
  static const PrimitiveKind kinds[] = {
      PrimitiveKind::cube,     PrimitiveKind::sphere,
      PrimitiveKind::pyramid,  PrimitiveKind::cylinder,
      PrimitiveKind::capsule,  PrimitiveKind::ellipsoid};
  if (i >= kPrimitiveKindCount) throw InvalidAxis("primitive index out of range");
  return kinds[i];
}

/// Augmentation ranges. Translation bounds are per world axis (x, y, z) in
/// voxels; the rotation angle is sampled uniformly in [-rotation, rotation]
/// about a random axis.
struct AugmentSpec {
  std::array<double, 3> translation = {0.0, 0.0, 0.0};
  double rotation = 0.0;
  bool binarize = true;
};

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Mat3 identity_mat3() {
  return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
}

/// Rodrigues rotation about a (normalized) axis.
inline Mat3 axis_angle_rotation(std::array<double, 3> axis, double angle) {
  const double n =
      std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  if (n <= 0) throw DomainError("rotation axis must be nonzero");
  for (double& a : axis) a /= n;
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  const double x = axis[0], y = axis[1], z = axis[2];
  return {{{t * x * x + c, t * x * y - s * z, t * x * z + s * y},
           {t * x * y + s * z, t * y * y + c, t * y * z - s * x},
           {t * x * z - s * y, t * y * z + s * x, t * z * z + c}}};
}

inline Mat3 random_rotation(Rng& rng, double range) {
  if (range == 0.0) return identity_mat3();
  std::array<double, 3> axis;
  double n = 0;
  do {
    axis = {rng.normal(), rng.normal(), rng.normal()};
    n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  } while (n < 1e-12);
  return axis_angle_rotation(axis, rng.uniform(-range, range));
}

/// Rotates the volume's content by R about the grid center, then translates
/// it by t voxels (world x, y, z), resampling trilinearly with zero padding.
/// Pure data transform; never recorded on a tape.
template <class S>
inline Tensor<S> rotate_translate(const Tensor<S>& v, const Mat3& R,
                                  const std::array<double, 3>& t_vox,
                                  bool binarize = true) {
  if (v.rank() != 3) throw ShapeMismatch("rotate_translate expects a volume");
  Tape::Pause pause;
  // content(x) moves to R x + t, so each output sample reads R^T (u - t)
  std::vector<S> p(12, S(0));
  std::array<double, 3> tn;
  for (std::size_t j = 0; j < 3; ++j) {
    // world axis j spans the storage extent shape[2 - j]
    const std::size_t n = v.shape()[2 - j];
    tn[j] = n <= 1 ? 0.0 : 2.0 * t_vox[j] / static_cast<double>(n - 1);
  }
  for (std::size_t r = 0; r < 3; ++r) {
    double dot = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      p[r * 4 + j] = static_cast<S>(R[j][r]);  // (R^T)[r][j]
      dot += R[j][r] * tn[j];
    }
    p[r * 4 + 3] = static_cast<S>(-dot);
  }
  Tensor<S> out = vst_sample(v, Tensor<S>::from({3, 4}, p), v.shape());
  if (binarize)
    for (S& x : out.data()) x = x >= S(0.5) ? S(1) : S(0);
  return out;
}

template <class S>
inline Tensor<S> augment(const Tensor<S>& v, const AugmentSpec& aug,
                         std::uint64_t seed) {
  Rng rng(seed);
  const Mat3 R = random_rotation(rng, aug.rotation);
  std::array<double, 3> t;
  for (std::size_t j = 0; j < 3; ++j)
    t[j] = aug.translation[j] == 0.0
               ? 0.0
               : rng.uniform(-aug.translation[j], aug.translation[j]);
  return rotate_translate(v, R, t, aug.binarize);
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

/// Solid primitive voxelized by a per-voxel-center inside test. Canonical
/// sizes are stated at extent 30 and scale linearly with the grid.
template <class S>
inline Tensor<S> voxelize_primitive(PrimitiveKind kind,
                                    std::size_t extent = 30) {
  if (extent < 2) throw DomainError("volume extent must be >= 2");
  const double sc = static_cast<double>(extent) / 30.0;
  const double c = 0.5 * static_cast<double>(extent - 1);
  Tensor<S> out = Tensor<S>::zeros({extent, extent, extent});
  auto& val = out.data();
  std::size_t i = 0;
  for (std::size_t zi = 0; zi < extent; ++zi)
    for (std::size_t yi = 0; yi < extent; ++yi)
      for (std::size_t xi = 0; xi < extent; ++xi, ++i) {
        const double x = static_cast<double>(xi) - c;
        const double y = static_cast<double>(yi) - c;
        const double z = static_cast<double>(zi) - c;
        bool in = false;
        switch (kind) {
          case PrimitiveKind::cube: {
            const double h = 6.0 * sc;
            in = std::abs(x) <= h && std::abs(y) <= h && std::abs(z) <= h;
            break;
          }
          case PrimitiveKind::sphere: {
            const double r = 8.0 * sc;
            in = x * x + y * y + z * z <= r * r;
            break;
          }
          case PrimitiveKind::pyramid: {
            const double height = 12.0 * sc, base = 6.0 * sc;
            const double h = z + 0.5 * height;  // 0 at base, height at apex
            if (h >= 0.0 && h <= height) {
              const double half = base * (1.0 - h / height);
              in = std::abs(x) <= half && std::abs(y) <= half;
            }
            break;
          }
          case PrimitiveKind::cylinder: {
            const double r = 6.0 * sc, hh = 7.0 * sc;
            in = x * x + y * y <= r * r && std::abs(z) <= hh;
            break;
          }
          case PrimitiveKind::capsule: {
            const double r = 5.0 * sc, a = 5.0 * sc;
            const double dz = std::abs(z) <= a ? 0.0 : std::abs(z) - a;
            in = x * x + y * y + dz * dz <= r * r;
            break;
          }
          case PrimitiveKind::ellipsoid: {
            const double a = 10.0 * sc, b = 7.0 * sc, d = 5.0 * sc;
            const double q = (x / a) * (x / a) + (y / b) * (y / b) +
                             (z / d) * (z / d);
            in = q <= 1.0;
            break;
          }
        }
        if (in) val[i] = S(1);
      }
  return out;
}

template <class S>
inline Tensor<S> gen_primitive(PrimitiveKind kind, const AugmentSpec& aug,
                               std::uint64_t seed, std::size_t extent = 30) {
  return augment(voxelize_primitive<S>(kind, extent), aug, seed);
}

// ---------------------------------------------------------------------------
// Wireframe cube
// ---------------------------------------------------------------------------

/// 12 cube edges rasterized by sub-voxel line stepping after rotating the
/// corner frame about the grid center.
template <class S>
inline Tensor<S> necker_wireframe(const Mat3& R, std::size_t extent = 40,
                                  double side = 10.0) {
  if (extent < 2) throw DomainError("volume extent must be >= 2");
  const double c = 0.5 * static_cast<double>(extent - 1);
  std::array<std::array<double, 3>, 8> corners;
  for (std::size_t k = 0; k < 8; ++k) {
    const double o[3] = {(k & 1) ? side * 0.5 : -side * 0.5,
                         (k & 2) ? side * 0.5 : -side * 0.5,
                         (k & 4) ? side * 0.5 : -side * 0.5};
    for (std::size_t r = 0; r < 3; ++r)
      corners[k][r] =
          c + R[r][0] * o[0] + R[r][1] * o[1] + R[r][2] * o[2];
  }
  // edges connect corners differing in exactly one index bit
  Tensor<S> out = Tensor<S>::zeros({extent, extent, extent});
  auto& val = out.data();
  const auto ext = static_cast<long>(extent);
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t bit = 0; bit < 3; ++bit) {
      const std::size_t b = a ^ (std::size_t{1} << bit);
      if (b < a) continue;
      double len = 0;
      for (std::size_t r = 0; r < 3; ++r) {
        const double d = corners[b][r] - corners[a][r];
        len += d * d;
      }
      const auto steps =
          static_cast<std::size_t>(std::ceil(std::sqrt(len) * 4.0)) + 1;
      for (std::size_t s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / static_cast<double>(steps);
        long idx[3];
        bool ok = true;
        for (std::size_t r = 0; r < 3; ++r) {
          const double p = corners[a][r] + t * (corners[b][r] - corners[a][r]);
          idx[r] = std::lround(p);
          if (idx[r] < 0 || idx[r] >= ext) ok = false;
        }
        // idx is (x, y, z); storage is [z][y][x]
        if (ok)
          val[(static_cast<std::size_t>(idx[2]) * extent +
               static_cast<std::size_t>(idx[1])) *
                  extent +
              static_cast<std::size_t>(idx[0])] = S(1);
      }
    }
  return out;
}

template <class S>
inline Tensor<S> gen_necker(std::uint64_t seed, std::size_t extent = 40,
                            double side = 10.0) {
  Rng rng(seed);
  const double pi = 3.14159265358979323846;
  return necker_wireframe<S>(random_rotation(rng, pi), extent, side);
}

/// Axis-aligned box at a random position, solid or hollow with equal
/// probability. The two variants cast identical silhouettes along every
/// storage axis, so any per-voxel predictor conditioned on projections
/// faces a coin flip on each interior voxel, while one global bit decides
/// the whole volume.
template <class S>
inline Tensor<S> gen_box(std::uint64_t seed, std::size_t extent = 8) {
  if (extent < 4) throw ShapeMismatch("gen_box needs extent >= 4");
  Rng rng(seed);
  const std::size_t lo_side = extent / 2;
  const std::size_t hi_side = 3 * extent / 4;
  const std::size_t side = lo_side + rng.randint(hi_side - lo_side + 1);
  std::size_t corner[3];
  for (auto& c : corner) c = rng.randint(extent - side + 1);
  const bool hollow = rng.uniform() < 0.5;
  Tensor<S> out = Tensor<S>::zeros({extent, extent, extent});
  auto& data = out.data();
  for (std::size_t z = corner[0]; z < corner[0] + side; ++z)
    for (std::size_t y = corner[1]; y < corner[1] + side; ++y)
      for (std::size_t x = corner[2]; x < corner[2] + side; ++x) {
        const bool interior =
            z > corner[0] && z + 1 < corner[0] + side && y > corner[1] &&
            y + 1 < corner[1] + side && x > corner[2] && x + 1 < corner[2] + side;
        if (hollow && interior) continue;
        data[(z * extent + y) * extent + x] = S(1);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Views
// ---------------------------------------------------------------------------

/// Orthographic max projection along one storage axis (0 = depth, 1 =
/// height, 2 = width). The axis index doubles as the camera identity.
template <class S>
inline Tensor<S> max_projection(const Tensor<S>& v, std::size_t axis) {
  if (v.rank() != 3) throw ShapeMismatch("max_projection expects a volume");
  if (axis >= 3) throw InvalidAxis("projection axis out of range");
  Tape::Pause pause;
  const auto& sh = v.shape();
  Shape out_shape;
  for (std::size_t i = 0; i < 3; ++i)
    if (i != axis) out_shape.push_back(sh[i]);
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  const auto& src = v.data();
  auto& dst = out.data();
  std::size_t i = 0;
  for (std::size_t z = 0; z < sh[0]; ++z)
    for (std::size_t y = 0; y < sh[1]; ++y)
      for (std::size_t x = 0; x < sh[2]; ++x, ++i) {
        std::size_t a, b;
        if (axis == 0) { a = y; b = x; }
        else if (axis == 1) { a = z; b = x; }
        else { a = z; b = y; }
        std::size_t j = a * out_shape[1] + b;
        dst[j] = std::max(dst[j], src[i]);
      }
  return out;
}

template <class S>
inline std::vector<Tensor<S>> make_views(const Tensor<S>& v) {
  return {max_projection(v, 0), max_projection(v, 1), max_projection(v, 2)};
}

// ---------------------------------------------------------------------------
// Extruded digits
// ---------------------------------------------------------------------------

template <class S>
struct LabeledVolume {
  Tensor<S> volume;
  std::uint8_t label = 0;
};

/// Binarizes each image, extrudes it along depth to a fixed thickness and
/// augments per item. Images are resampled to (extent - 2)^2 so small toy
/// extents work on 28x28 inputs.
template <class S>
inline std::vector<LabeledVolume<S>> extrude_digit_volumes(
    const IdxImages& im, const std::vector<std::uint8_t>& labels,
    const AugmentSpec& aug, std::uint64_t seed, std::size_t extent = 30,
    std::size_t thickness = 8,
    std::size_t limit = std::numeric_limits<std::size_t>::max()) {
  if (extent < 4) throw DomainError("digit volume extent must be >= 4");
  if (thickness == 0 || thickness > extent)
    throw DomainError("extrusion thickness must be in [1, extent]");
  if (labels.size() != im.count)
    throw LabelCountMismatch("images/labels count mismatch");

  Tape::Pause pause;
  const std::size_t n = std::min(limit, im.count);
  const std::size_t target = extent - 2;
  const std::size_t z0 = (extent - thickness) / 2;
  const std::size_t off = (extent - target) / 2;
  std::vector<LabeledVolume<S>> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<S> pix(im.rows * im.cols);
    for (std::size_t i = 0; i < pix.size(); ++i)
      pix[i] = static_cast<S>(im.pixels[k * pix.size() + i]) / S(255);
    Tensor<S> img = Tensor<S>::from({im.rows, im.cols}, pix);
    if (target != im.rows || target != im.cols) {
      // identity normalized transform resamples onto the smaller grid
      img = st_sample_2d(img, Tensor<S>::from({2, 3}, {1, 0, 0, 0, 1, 0}),
                         {target, target});
    }
    for (S& p : img.data()) p = p >= S(0.5) ? S(1) : S(0);

    Tensor<S> vol = Tensor<S>::zeros({extent, extent, extent});
    auto& val = vol.data();
    for (std::size_t z = z0; z < z0 + thickness; ++z)
      for (std::size_t y = 0; y < target; ++y)
        for (std::size_t x = 0; x < target; ++x)
          val[(z * extent + (y + off)) * extent + (x + off)] =
              img.data()[y * target + x];
    out.push_back(
        {augment(vol, aug, derive_seed(seed, 11, k)), labels[k]});
  }
  return out;
}

template <class S>
inline std::vector<LabeledVolume<S>> extrude_digits(
    const std::string& images_path, const std::string& labels_path,
    const AugmentSpec& aug, std::uint64_t seed, std::size_t extent = 30,
    std::size_t thickness = 8,
    std::size_t limit = std::numeric_limits<std::size_t>::max()) {
  return extrude_digit_volumes<S>(read_idx_images(images_path),
                                  read_idx_labels(labels_path), aug, seed,
                                  extent, thickness, limit);
}

// ---------------------------------------------------------------------------
// Synthetic digit images
// ---------------------------------------------------------------------------

/// Seven-segment glyphs on a 28x28 canvas with small integer jitter; class
/// of sample i is i mod 10. A stand-in corpus for the extrusion pipeline
/// when no real handwriting data is available.
inline IdxImages synth_digit_images(std::size_t n, std::uint64_t seed) {
  // segment bitmasks per digit: A B C D E F G = bits 0..6
  static const unsigned seg[10] = {0x3F, 0x06, 0x5B, 0x4F, 0x66,
                                   0x6D, 0x7D, 0x07, 0x7F, 0x6F};
  IdxImages im;
  im.count = n;
  im.rows = 28;
  im.cols = 28;
  im.pixels.assign(n * 28 * 28, 0);
  Rng rng(seed);
  for (std::size_t k = 0; k < n; ++k) {
    const unsigned mask = seg[k % 10];
    const long jx = static_cast<long>(rng.randint(5)) - 2;
    const long jy = static_cast<long>(rng.randint(5)) - 2;
    auto rect = [&](long x0, long y0, long x1, long y1) {
      for (long y = y0 + jy; y <= y1 + jy; ++y)
        for (long x = x0 + jx; x <= x1 + jx; ++x)
          if (x >= 0 && x < 28 && y >= 0 && y < 28)
            im.pixels[k * 784 + static_cast<std::size_t>(y) * 28 +
                      static_cast<std::size_t>(x)] = 255;
    };
    // glyph box x in [8, 19], y in [4, 23], stroke width 3
    if (mask & 0x01) rect(8, 4, 19, 6);     // A: top
    if (mask & 0x02) rect(17, 4, 19, 13);   // B: top right
    if (mask & 0x04) rect(17, 14, 19, 23);  // C: bottom right
    if (mask & 0x08) rect(8, 21, 19, 23);   // D: bottom
    if (mask & 0x10) rect(8, 14, 10, 23);   // E: bottom left
    if (mask & 0x20) rect(8, 4, 10, 13);    // F: top left
    if (mask & 0x40) rect(8, 12, 19, 14);   // G: middle
  }
  return im;
}

inline std::vector<std::uint8_t> synth_digit_labels(std::size_t n) {
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i)
    labels[i] = static_cast<std::uint8_t>(i % 10);
  return labels;
}

}  // namespace voxgen
