#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "slcd/tensor.hpp"

namespace slcd {

namespace detail {

struct FileHandle {
  std::FILE* f = nullptr;
  explicit FileHandle(const std::string& path, const char* mode)
      : f(std::fopen(path.c_str(), mode)) {}
  ~FileHandle() {
    if (f) std::fclose(f);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
};

inline void write_png_bytes(const std::string& path,
                            const std::vector<std::uint8_t>& bytes, int height,
                            int width, int color_type) {
  FileHandle fh(path, "wb");
  require(fh.f != nullptr, "write_png: cannot open " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "write_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("write_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("write_png: libpng failure writing " + path);
  }
  png_init_io(png, fh.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  int stride = color_type == PNG_COLOR_TYPE_RGB ? 3 * width : width;
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(stride)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline std::vector<std::uint8_t> read_png_bytes(const std::string& path,
                                                int expect_color_type,
                                                int& height, int& width) {
  FileHandle fh(path, "rb");
  require(fh.f != nullptr, "read_png: cannot open " + path);
  png_byte sig[8];
  require(std::fread(sig, 1, 8, fh.f) == 8 && !png_sig_cmp(sig, 0, 8),
          "read_png: not a PNG file: " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "read_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("read_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("read_png: libpng failure reading " + path);
  }
  png_init_io(png, fh.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  height = static_cast<int>(png_get_image_height(png, info));
  width = static_cast<int>(png_get_image_width(png, info));
  int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  if (color_type != expect_color_type || bit_depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("read_png: unexpected format in " + path);
  }
  int stride = color_type == PNG_COLOR_TYPE_RGB ? 3 * width : width;
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(stride) * static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y)
    png_read_row(png, bytes.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(stride), nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return bytes;
}

}  // namespace detail

// Writes a flat [h*w*3] image with values in [-1,1] as 8-bit RGB,
// v -> round((v+1)/2 * 255).
inline void write_image_png(const std::string& path, const Tensor& image,
                            int height, int width) {
  require(image.numel() == static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3,
          "write_image_png: shape mismatch");
  std::vector<std::uint8_t> bytes(image.numel());
  for (std::size_t i = 0; i < image.numel(); ++i) {
    double v01 = (image.data[i] + 1.0) / 2.0;
    long q = std::lround(v01 * 255.0);
    bytes[i] = static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
  }
  detail::write_png_bytes(path, bytes, height, width, PNG_COLOR_TYPE_RGB);
}

inline Tensor read_image_png(const std::string& path, int expect_height,
                             int expect_width) {
  int h = 0, w = 0;
  auto bytes = detail::read_png_bytes(path, PNG_COLOR_TYPE_RGB, h, w);
  require(h == expect_height && w == expect_width,
          "read_image_png: unexpected size in " + path);
  Tensor out({bytes.size()});
  for (std::size_t i = 0; i < bytes.size(); ++i)
    out.data[i] = static_cast<double>(bytes[i]) / 255.0 * 2.0 - 1.0;
  return out;
}

// Label masks are stored raw, one byte per pixel.
inline void write_mask_png(const std::string& path, const std::vector<int>& mask,
                           int height, int width) {
  require(mask.size() == static_cast<std::size_t>(height) * static_cast<std::size_t>(width),
          "write_mask_png: shape mismatch");
  std::vector<std::uint8_t> bytes(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    require(mask[i] >= 0 && mask[i] <= 255, "write_mask_png: label out of byte range");
    bytes[i] = static_cast<std::uint8_t>(mask[i]);
  }
  detail::write_png_bytes(path, bytes, height, width, PNG_COLOR_TYPE_GRAY);
}

inline std::vector<int> read_mask_png(const std::string& path, int expect_height,
                                      int expect_width) {
  int h = 0, w = 0;
  auto bytes = detail::read_png_bytes(path, PNG_COLOR_TYPE_GRAY, h, w);
  require(h == expect_height && w == expect_width,
          "read_mask_png: unexpected size in " + path);
  std::vector<int> out(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) out[i] = bytes[i];
  return out;
}

namespace detail {

// Binary PPM (P6) / PGM (P5) with maxval 255.
inline std::vector<std::uint8_t> read_pnm_bytes(const std::string& path,
                                                bool rgb, int& height,
                                                int& width) {
  FileHandle fh(path, "rb");
  require(fh.f != nullptr, "read_pnm: cannot open " + path);
  auto next_token = [&]() {
    std::string tok;
    int c;
    while ((c = std::fgetc(fh.f)) != EOF) {
      if (c == '#') {
        while ((c = std::fgetc(fh.f)) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    require(!tok.empty(), "read_pnm: truncated header in " + path);
    return tok;
  };
  std::string magic = next_token();
  require(magic == (rgb ? "P6" : "P5"),
          "read_pnm: expected " + std::string(rgb ? "P6" : "P5") + " in " + path);
  width = static_cast<int>(parse_int(next_token()));
  height = static_cast<int>(parse_int(next_token()));
  require(width >= 1 && height >= 1, "read_pnm: bad dimensions in " + path);
  require(parse_int(next_token()) == 255, "read_pnm: maxval must be 255");
  std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * (rgb ? 3 : 1);
  std::vector<std::uint8_t> bytes(n);
  require(std::fread(bytes.data(), 1, n, fh.f) == n,
          "read_pnm: truncated pixel data in " + path);
  return bytes;
}

inline bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace detail

// PNG by default, binary PPM/PGM accepted as a read-only fallback.
inline Tensor read_image_any(const std::string& path, int expect_height,
                             int expect_width) {
  if (detail::has_suffix(path, ".ppm")) {
    int h = 0, w = 0;
    auto bytes = detail::read_pnm_bytes(path, true, h, w);
    require(h == expect_height && w == expect_width,
            "read_image_any: unexpected size in " + path);
    Tensor out({bytes.size()});
    for (std::size_t i = 0; i < bytes.size(); ++i)
      out.data[i] = static_cast<double>(bytes[i]) / 255.0 * 2.0 - 1.0;
    return out;
  }
  return read_image_png(path, expect_height, expect_width);
}

inline std::vector<int> read_mask_any(const std::string& path, int expect_height,
                                      int expect_width) {
  if (detail::has_suffix(path, ".pgm")) {
    int h = 0, w = 0;
    auto bytes = detail::read_pnm_bytes(path, false, h, w);
    require(h == expect_height && w == expect_width,
            "read_mask_any: unexpected size in " + path);
    std::vector<int> out(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) out[i] = bytes[i];
    return out;
  }
  return read_mask_png(path, expect_height, expect_width);
}

}  // namespace slcd
