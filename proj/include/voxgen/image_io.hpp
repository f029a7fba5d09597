#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "voxgen/serialize.hpp"
#include "voxgen/tensor.hpp"

namespace voxgen {

/// Row-major RGB image with channels interleaved, values in [0,1].
struct ImageRGB {
  std::size_t width = 0, height = 0;
  std::vector<float> rgb;  // 3 * width * height

  ImageRGB() = default;
  ImageRGB(std::size_t w, std::size_t h, float fill = 0.f)
      : width(w), height(h), rgb(3 * w * h, fill) {}

  float* pixel(std::size_t x, std::size_t y) {
    return rgb.data() + 3 * (y * width + x);
  }
  const float* pixel(std::size_t x, std::size_t y) const {
    return rgb.data() + 3 * (y * width + x);
  }
};

/// Grayscale [H,W] tensor in [0,1] replicated across channels.
template <class S>
inline ImageRGB image_from_gray(const Tensor<S>& t) {
  if (t.rank() != 2) throw ShapeMismatch("gray image must be rank 2");
  ImageRGB im(t.shape()[1], t.shape()[0]);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const float v = std::clamp(static_cast<float>(t[i]), 0.f, 1.f);
    im.rgb[3 * i] = im.rgb[3 * i + 1] = im.rgb[3 * i + 2] = v;
  }
  return im;
}

/// Lays a volume's z-slices out on a near-square grid, one pixel of mid-gray
/// separator between cells.
template <class S>
inline ImageRGB slice_montage(const Tensor<S>& v) {
  if (v.rank() != 3) throw ShapeMismatch("montage expects a volume");
  const std::size_t d = v.shape()[0], h = v.shape()[1], w = v.shape()[2];
  std::size_t cols = 1;
  while (cols * cols < d) ++cols;
  const std::size_t rows = (d + cols - 1) / cols;
  ImageRGB im(cols * (w + 1) - 1, rows * (h + 1) - 1, 0.5f);
  for (std::size_t z = 0; z < d; ++z) {
    const std::size_t ox = (z % cols) * (w + 1), oy = (z / cols) * (h + 1);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const float g = std::clamp(
            static_cast<float>(v.data()[(z * h + y) * w + x]), 0.f, 1.f);
        float* px = im.pixel(ox + x, oy + y);
        px[0] = px[1] = px[2] = g;
      }
  }
  return im;
}

namespace detail {

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(
      std::clamp(v, 0.f, 1.f) * 255.f + 0.5f);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PPM (ASCII P3)
// ---------------------------------------------------------------------------

inline void write_ppm(const std::string& path, const ImageRGB& im) {
  auto os = detail::open_out(path);
  os << "P3\n" << im.width << " " << im.height << "\n255\n";
  for (std::size_t y = 0; y < im.height; ++y) {
    for (std::size_t x = 0; x < im.width; ++x) {
      const float* p = im.pixel(x, y);
      os << int(detail::to_byte(p[0])) << " " << int(detail::to_byte(p[1]))
         << " " << int(detail::to_byte(p[2]));
      os << (x + 1 == im.width ? "\n" : " ");
    }
  }
  if (!os) throw Error("write failed: " + path);
}

inline ImageRGB read_ppm(const std::string& path) {
  auto is = detail::open_in(path);
  std::string magic;
  is >> magic;
  if (magic != "P3") throw BadMagic(path + ": not an ASCII PPM");
  std::size_t w, h;
  int maxval;
  if (!(is >> w >> h >> maxval) || maxval <= 0)
    throw TruncatedFile(path + ": bad PPM header");
  ImageRGB im(w, h);
  for (std::size_t i = 0; i < 3 * w * h; ++i) {
    int v;
    if (!(is >> v)) throw TruncatedFile(path + ": short PPM payload");
    im.rgb[i] = static_cast<float>(v) / static_cast<float>(maxval);
  }
  return im;
}

// ---------------------------------------------------------------------------
// PNG (8-bit RGB, zlib-deflated, filter 0)
// ---------------------------------------------------------------------------

namespace detail {

inline void png_chunk(std::ostream& os, const char type[4],
                      const std::vector<std::uint8_t>& data) {
  put_u32_be(os, static_cast<std::uint32_t>(data.size()));
  os.write(type, 4);
  if (!data.empty())
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size()));
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(type), 4));
  if (!data.empty())
    crc = static_cast<std::uint32_t>(
        crc32(crc, data.data(), static_cast<uInt>(data.size())));
  put_u32_be(os, crc);
}

}  // namespace detail

inline void write_png(const std::string& path, const ImageRGB& im) {
  auto os = detail::open_out(path);
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a,
                                       '\n'};
  os.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr(13);
  auto be32 = [](std::uint8_t* p, std::uint32_t v) {
    p[0] = v >> 24;
    p[1] = v >> 16;
    p[2] = v >> 8;
    p[3] = v;
  };
  be32(ihdr.data(), static_cast<std::uint32_t>(im.width));
  be32(ihdr.data() + 4, static_cast<std::uint32_t>(im.height));
  ihdr[8] = 8;   // bit depth
  ihdr[9] = 2;   // truecolor
  ihdr[10] = 0;  // deflate
  ihdr[11] = 0;  // adaptive filtering
  ihdr[12] = 0;  // no interlace
  detail::png_chunk(os, "IHDR", ihdr);

  // Scanlines, each prefixed with filter byte 0.
  std::vector<std::uint8_t> raw;
  raw.reserve(im.height * (1 + 3 * im.width));
  for (std::size_t y = 0; y < im.height; ++y) {
    raw.push_back(0);
    for (std::size_t x = 0; x < im.width; ++x) {
      const float* p = im.pixel(x, y);
      raw.push_back(detail::to_byte(p[0]));
      raw.push_back(detail::to_byte(p[1]));
      raw.push_back(detail::to_byte(p[2]));
    }
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> idat(bound);
  if (compress2(idat.data(), &bound, raw.data(),
                static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw Error("png deflate failed");
  idat.resize(bound);
  detail::png_chunk(os, "IDAT", idat);
  detail::png_chunk(os, "IEND", {});
  if (!os) throw Error("write failed: " + path);
}

}  // namespace voxgen
