#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "voxgen/tensor.hpp"

namespace voxgen {

namespace detail {

inline void put_u32_le(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
      static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u32_be(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32_le(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw TruncatedFile("unexpected end of file reading " + what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint32_t get_u32_be(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw TruncatedFile("unexpected end of file reading " + what);
  return (static_cast<std::uint32_t>(b[0]) << 24) |
         (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) |
         static_cast<std::uint32_t>(b[3]);
}

template <class T>
inline void put_scalar_le(std::ostream& os, T v) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));  // little-endian host assumed below
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open for reading: " + path);
  return is;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// VGT1: tensor snapshot
//   "VGT1" | u32 rank | u32 extents[rank] | u8 dtype (0=f32, 1=f64) | payload
// All integers and payload little-endian, payload row-major.
// ---------------------------------------------------------------------------

template <class S>
inline void write_vgt1(const std::string& path, const Tensor<S>& t) {
  auto os = detail::open_out(path);
  os.write("VGT1", 4);
  detail::put_u32_le(os, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape())
    detail::put_u32_le(os, static_cast<std::uint32_t>(e));
  const std::uint8_t dt = t.dtype() == Dtype::f32 ? 0 : 1;
  os.write(reinterpret_cast<const char*>(&dt), 1);
  for (S v : t.data()) detail::put_scalar_le(os, v);
  if (!os) throw Error("write failed: " + path);
}

template <class S>
inline Tensor<S> read_vgt1(const std::string& path) {
  auto is = detail::open_in(path);
  char magic[4];
  if (!is.read(magic, 4)) throw TruncatedFile(path + ": empty file");
  if (std::string(magic, 4) != "VGT1")
    throw BadMagic(path + ": not a VGT1 file");
  const std::uint32_t rank = detail::get_u32_le(is, "rank");
  if (rank > 8) throw BadMagic(path + ": implausible rank");
  Shape shape(rank);
  for (auto& e : shape) e = detail::get_u32_le(is, "extent");
  std::uint8_t dt;
  if (!is.read(reinterpret_cast<char*>(&dt), 1))
    throw TruncatedFile(path + ": missing dtype");
  if (dt > 1) throw BadMagic(path + ": unknown dtype");

  const std::size_t n = numel(shape);
  std::vector<S> out(n);
  if (dt == 0) {
    std::vector<float> raw(n);
    if (n && !is.read(reinterpret_cast<char*>(raw.data()),
                      static_cast<std::streamsize>(n * 4)))
      throw TruncatedFile(path + ": short payload");
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<S>(raw[i]);
  } else {
    std::vector<double> raw(n);
    if (n && !is.read(reinterpret_cast<char*>(raw.data()),
                      static_cast<std::streamsize>(n * 8)))
      throw TruncatedFile(path + ": short payload");
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<S>(raw[i]);
  }
  return Tensor<S>::from(std::move(shape), std::move(out));
}

// ---------------------------------------------------------------------------
// VOX1: single volume
//   "VOX1" | u32 D | u32 H | u32 W | f32 payload [z][y][x]
// ---------------------------------------------------------------------------

template <class S>
inline void write_vox1(const std::string& path, const Tensor<S>& v) {
  if (v.rank() != 3)
    throw ShapeMismatch("VOX1 stores rank-3 volumes, got " +
                        shape_str(v.shape()));
  auto os = detail::open_out(path);
  os.write("VOX1", 4);
  for (int i = 0; i < 3; ++i)
    detail::put_u32_le(os, static_cast<std::uint32_t>(v.shape()[i]));
  for (S x : v.data()) detail::put_scalar_le(os, static_cast<float>(x));
  if (!os) throw Error("write failed: " + path);
}

template <class S = float>
inline Tensor<S> read_vox1(const std::string& path) {
  auto is = detail::open_in(path);
  char magic[4];
  if (!is.read(magic, 4)) throw TruncatedFile(path + ": empty file");
  if (std::string(magic, 4) != "VOX1")
    throw BadMagic(path + ": not a VOX1 file");
  Shape shape(3);
  shape[0] = detail::get_u32_le(is, "D");
  shape[1] = detail::get_u32_le(is, "H");
  shape[2] = detail::get_u32_le(is, "W");
  const std::size_t n = numel(shape);
  std::vector<float> raw(n);
  if (n && !is.read(reinterpret_cast<char*>(raw.data()),
                    static_cast<std::streamsize>(n * 4)))
    throw TruncatedFile(path + ": short payload");
  std::vector<S> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<S>(raw[i]);
  return Tensor<S>::from(std::move(shape), std::move(out));
}

// ---------------------------------------------------------------------------
// IDX (big-endian), images magic 0x00000803, labels magic 0x00000801
// ---------------------------------------------------------------------------

struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;  // count*rows*cols
};

inline IdxImages read_idx_images(const std::string& path) {
  auto is = detail::open_in(path);
  const std::uint32_t magic = detail::get_u32_be(is, "magic");
  if (magic != 0x00000803u)
    throw BadMagic(path + ": not an IDX image file");
  IdxImages out;
  out.count = detail::get_u32_be(is, "count");
  out.rows = detail::get_u32_be(is, "rows");
  out.cols = detail::get_u32_be(is, "cols");
  out.pixels.resize(out.count * out.rows * out.cols);
  if (!out.pixels.empty() &&
      !is.read(reinterpret_cast<char*>(out.pixels.data()),
               static_cast<std::streamsize>(out.pixels.size())))
    throw TruncatedFile(path + ": short image payload");
  return out;
}

inline std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
  auto is = detail::open_in(path);
  const std::uint32_t magic = detail::get_u32_be(is, "magic");
  if (magic != 0x00000801u)
    throw BadMagic(path + ": not an IDX label file");
  const std::uint32_t count = detail::get_u32_be(is, "count");
  std::vector<std::uint8_t> labels(count);
  if (count && !is.read(reinterpret_cast<char*>(labels.data()), count))
    throw TruncatedFile(path + ": short label payload");
  return labels;
}

inline void write_idx_images(const std::string& path, const IdxImages& im) {
  if (im.pixels.size() != im.count * im.rows * im.cols)
    throw ShapeMismatch("IDX image payload size mismatch");
  auto os = detail::open_out(path);
  detail::put_u32_be(os, 0x00000803u);
  detail::put_u32_be(os, static_cast<std::uint32_t>(im.count));
  detail::put_u32_be(os, static_cast<std::uint32_t>(im.rows));
  detail::put_u32_be(os, static_cast<std::uint32_t>(im.cols));
  os.write(reinterpret_cast<const char*>(im.pixels.data()),
           static_cast<std::streamsize>(im.pixels.size()));
  if (!os) throw Error("write failed: " + path);
}

inline void write_idx_labels(const std::string& path,
                             const std::vector<std::uint8_t>& labels) {
  auto os = detail::open_out(path);
  detail::put_u32_be(os, 0x00000801u);
  detail::put_u32_be(os, static_cast<std::uint32_t>(labels.size()));
  os.write(reinterpret_cast<const char*>(labels.data()),
           static_cast<std::streamsize>(labels.size()));
  if (!os) throw Error("write failed: " + path);
}

/// Loads an image/label pair, enforcing matched counts.
inline std::pair<IdxImages, std::vector<std::uint8_t>> read_idx_pair(
    const std::string& images_path, const std::string& labels_path) {
  auto images = read_idx_images(images_path);
  auto labels = read_idx_labels(labels_path);
  if (images.count != labels.size())
    throw LabelCountMismatch(std::to_string(images.count) + " images vs " +
                             std::to_string(labels.size()) + " labels");
  return {std::move(images), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Wavefront OBJ (vertices and triangular faces only, 1-indexed)
// ---------------------------------------------------------------------------

struct ObjMesh {
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<std::size_t, 3>> faces;  // zero-based in memory
};

inline void write_obj(const std::string& path, const ObjMesh& mesh) {
  auto os = detail::open_out(path);
  char buf[96];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v[0], v[1], v[2]);
    os << buf;
  }
  for (const auto& f : mesh.faces) {
    std::snprintf(buf, sizeof buf, "f %zu %zu %zu\n", f[0] + 1, f[1] + 1,
                  f[2] + 1);
    os << buf;
  }
  if (!os) throw Error("write failed: " + path);
}

inline ObjMesh read_obj(const std::string& path) {
  auto is = detail::open_in(path);
  ObjMesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      std::array<double, 3> v;
      if (!(ls >> v[0] >> v[1] >> v[2]))
        throw BadMagic(path + ":" + std::to_string(lineno) +
                       ": malformed vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<long, 3> f;
      if (!(ls >> f[0] >> f[1] >> f[2]))
        throw BadMagic(path + ":" + std::to_string(lineno) +
                       ": malformed face");
      std::array<std::size_t, 3> zf;
      for (int i = 0; i < 3; ++i) {
        if (f[i] < 1 || static_cast<std::size_t>(f[i]) > mesh.vertices.size())
          throw BadMagic(path + ":" + std::to_string(lineno) +
                         ": face index out of range");
        zf[i] = static_cast<std::size_t>(f[i]) - 1;
      }
      mesh.faces.push_back(zf);
    }
    // other tags ignored
  }
  return mesh;
}

}  // namespace voxgen
