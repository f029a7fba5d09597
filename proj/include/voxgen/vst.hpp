#pragma once

#include <array>
#include <cstddef>

#include "voxgen/tensor.hpp"

namespace voxgen {

/// Normalized coordinate of index i on an extent-n axis. Corners sit exactly
/// at -1 and 1; a single-sample axis sits at 0.
template <class S>
inline S norm_coord(std::size_t i, std::size_t n) {
  if (n <= 1) return S(0);
  return S(-1) + S(2) * static_cast<S>(i) / static_cast<S>(n - 1);
}

namespace detail {

// Runtime-dimensional sampler core shared by the 2-D and 3-D transformers.
// Axis order in coordinate vectors is (x, y[, z]) = (fastest, ..., slowest),
// matching p rows; storage is row-major [z,][y,]x.
template <class S>
struct StPlan {
  int dims;                          // 2 or 3
  std::array<std::size_t, 3> in;     // input extents, slowest first
  std::array<std::size_t, 3> out;    // output extents, slowest first
};

// Evaluates the transform for every output cell, invoking
// emit(out_flat_index, corner_base_indices, fractional_offsets, target_u).
// Corner handling (zero padding) is left to the caller.
template <class S, class Emit>
inline void st_run(const StPlan<S>& plan, const S* pv, Emit&& emit) {
  const int D = plan.dims;
  const std::size_t cols = static_cast<std::size_t>(D) + 1;
  std::array<std::size_t, 3> oext = plan.out, iext = plan.in;

  std::array<std::size_t, 3> oi{0, 0, 0};
  const std::size_t total = [&] {
    std::size_t t = 1;
    for (int a = 0; a < D; ++a) t *= oext[a];
    return t;
  }();

  std::array<S, 3> u{};      // target coords, (x,y[,z]) order
  std::array<S, 3> src{};    // source coords
  std::array<S, 3> f{};      // fractional source indices
  std::array<std::ptrdiff_t, 3> base{};
  std::array<S, 3> frac{};

  for (std::size_t flat = 0; flat < total; ++flat) {
    // oi counts [slowest..fastest]; coordinate axis a = D-1-storage_axis.
    for (int a = 0; a < D; ++a)
      u[a] = norm_coord<S>(oi[D - 1 - a], oext[D - 1 - a]);

    for (int r = 0; r < D; ++r) {
      S acc = pv[r * cols + D];  // translation column
      for (int a = 0; a < D; ++a) acc += pv[r * cols + a] * u[a];
      src[r] = acc;
    }
    for (int r = 0; r < D; ++r) {
      const std::size_t n = iext[D - 1 - r];
      f[r] = (src[r] + S(1)) * S(0.5) * static_cast<S>(n - 1);
      const S fl = std::floor(f[r]);
      base[r] = static_cast<std::ptrdiff_t>(fl);
      frac[r] = f[r] - fl;
    }

    emit(flat, base, frac, u);

    for (int a = D; a-- > 0;) {
      if (++oi[a] < oext[a]) break;
      oi[a] = 0;
    }
  }
}

template <class S>
inline Tensor<S> st_sample(const Tensor<S>& x, const Tensor<S>& p,
                           const Shape& out_extents, int dims) {
  if (static_cast<int>(x.rank()) != dims)
    throw ShapeMismatch("spatial transform input rank must equal dims");
  const std::size_t cols = static_cast<std::size_t>(dims) + 1;
  if (p.shape() != Shape{static_cast<std::size_t>(dims), cols})
    throw ShapeMismatch("transform params must be [" + std::to_string(dims) +
                        "," + std::to_string(cols) + "], got " +
                        shape_str(p.shape()));
  if (static_cast<int>(out_extents.size()) != dims)
    throw ShapeMismatch("output extents rank mismatch");
  for (auto e : out_extents)
    if (e == 0) throw ShapeMismatch("zero output extent");

  StPlan<S> plan;
  plan.dims = dims;
  plan.in = {1, 1, 1};
  plan.out = {1, 1, 1};
  for (int a = 0; a < dims; ++a) {
    plan.in[a] = x.shape()[a];
    plan.out[a] = out_extents[a];
  }

  Tensor<S> y(out_extents);
  const S* xv = x.data().data();
  S* yv = y.data().data();
  const std::size_t ncorner = std::size_t{1} << dims;

  auto in_stride = [&](int coord_axis) {  // stride of coordinate axis
    std::size_t s = 1;
    for (int a = dims - 1; a > dims - 1 - coord_axis; --a) s *= plan.in[a];
    return s;
  };
  std::array<std::size_t, 3> stride{};
  for (int r = 0; r < dims; ++r) stride[r] = in_stride(r);

  st_run<S>(plan, p.data().data(),
            [&](std::size_t flat, const std::array<std::ptrdiff_t, 3>& base,
                const std::array<S, 3>& frac, const std::array<S, 3>&) {
              S acc = S(0);
              for (std::size_t c = 0; c < ncorner; ++c) {
                S w = S(1);
                std::size_t off = 0;
                bool ok = true;
                for (int r = 0; r < dims; ++r) {
                  const int bit = (c >> r) & 1;
                  const std::ptrdiff_t idx = base[r] + bit;
                  const std::size_t n = plan.in[dims - 1 - r];
                  if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(n)) {
                    ok = false;
                    break;
                  }
                  w *= bit ? frac[r] : S(1) - frac[r];
                  off += static_cast<std::size_t>(idx) * stride[r];
                }
                if (ok && w != S(0)) acc += w * xv[off];
              }
              yv[flat] = acc;
            });

  if (detail::track(x, p)) {
    auto xn = x.node();
    auto pn = p.node();
    auto yn = y.node();
    detail::record(y, [xn, pn, yn, plan, stride, dims, ncorner]() {
      if (yn->grad.empty()) return;
      const bool gx = xn->requires_grad, gp = pn->requires_grad;
      if (!gx && !gp) return;
      if (gx) xn->ensure_grad();
      if (gp) pn->ensure_grad();
      const S* xval = xn->value.data();
      const std::size_t cols = static_cast<std::size_t>(dims) + 1;
      st_run<S>(
          plan, pn->value.data(),
          [&](std::size_t flat, const std::array<std::ptrdiff_t, 3>& base,
              const std::array<S, 3>& frac, const std::array<S, 3>& u) {
            const S g = yn->grad[flat];
            if (g == S(0)) return;
            std::array<S, 3> dval_df{S(0), S(0), S(0)};
            for (std::size_t c = 0; c < ncorner; ++c) {
              S w = S(1);
              std::size_t off = 0;
              bool ok = true;
              for (int r = 0; r < dims; ++r) {
                const int bit = (c >> r) & 1;
                const std::ptrdiff_t idx = base[r] + bit;
                const std::size_t n = plan.in[dims - 1 - r];
                if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(n)) {
                  ok = false;
                  break;
                }
                w *= bit ? frac[r] : S(1) - frac[r];
                off += static_cast<std::size_t>(idx) * stride[r];
              }
              if (!ok) continue;
              if (gx) xn->grad[off] += g * w;
              if (gp) {
                // d(weight)/d(frac_r): flip axis r's factor to +-1.
                for (int r = 0; r < dims; ++r) {
                  S dw = S(1);
                  for (int q = 0; q < dims; ++q) {
                    const int bit = (c >> q) & 1;
                    if (q == r)
                      dw *= bit ? S(1) : S(-1);
                    else
                      dw *= bit ? frac[q] : S(1) - frac[q];
                  }
                  dval_df[r] += dw * xval[off];
                }
              }
            }
            if (gp) {
              for (int r = 0; r < dims; ++r) {
                const std::size_t n = plan.in[dims - 1 - r];
                const S df_ds = S(0.5) * static_cast<S>(n - 1);
                const S gs = g * dval_df[r] * df_ds;
                for (int a = 0; a < dims; ++a)
                  pn->grad[r * cols + a] += gs * u[a];
                pn->grad[r * cols + dims] += gs;
              }
            }
          });
    });
  }
  return y;
}

}  // namespace detail

/// 3-D spatial transform: samples x [D,H,W] at source positions A.u + t for
/// every output cell, p = [3,4] rows (A | t) over (x,y,z) coordinates.
/// Trilinear interpolation with zero padding outside [-1,1]^3; the kernel is
/// separable, one linear factor per axis.
template <class S>
inline Tensor<S> vst_sample(const Tensor<S>& x, const Tensor<S>& p,
                            const Shape& out_extents) {
  return detail::st_sample(x, p, out_extents, 3);
}

/// 2-D counterpart for image glimpses: x [H,W], p [2,3] over (x,y).
template <class S>
inline Tensor<S> st_sample_2d(const Tensor<S>& x, const Tensor<S>& p,
                              const Shape& out_extents) {
  return detail::st_sample(x, p, out_extents, 2);
}

/// Additive canvas write: canvas + T_p[content] resampled to the canvas
/// extents. Overlapping writes accumulate.
template <class S>
inline Tensor<S> vst_write(const Tensor<S>& canvas, const Tensor<S>& content,
                           const Tensor<S>& p) {
  if (canvas.rank() != 3) throw ShapeMismatch("canvas must be rank 3");
  return add(canvas, vst_sample(content, p, canvas.shape()));
}

/// Source-coordinate grid for a [3,4] transform, returned as [D,H,W,3] with
/// (x,y,z) per cell. Forward-only utility.
template <class S>
inline Tensor<S> affine_grid_3d(const Tensor<S>& p, std::size_t D,
                                std::size_t H, std::size_t W) {
  if (p.shape() != Shape{3, 4})
    throw ShapeMismatch("affine_grid_3d params must be [3,4]");
  Tensor<S> g({D, H, W, 3});
  const S* pv = p.data().data();
  std::size_t o = 0;
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        const S u[3] = {norm_coord<S>(w, W), norm_coord<S>(h, H),
                        norm_coord<S>(d, D)};
        for (int r = 0; r < 3; ++r)
          g.at(o++) = pv[r * 4 + 0] * u[0] + pv[r * 4 + 1] * u[1] +
                      pv[r * 4 + 2] * u[2] + pv[r * 4 + 3];
      }
  return g;
}

/// Identity transform parameters.
template <class S>
inline Tensor<S> identity_affine(int dims) {
  if (dims == 3)
    return Tensor<S>::from({3, 4},
                           {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0});
  if (dims == 2) return Tensor<S>::from({2, 3}, {1, 0, 0, 0, 1, 0});
  throw ShapeMismatch("identity_affine dims must be 2 or 3");
}

}  // namespace voxgen
