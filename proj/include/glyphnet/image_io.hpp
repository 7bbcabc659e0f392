#pragma once

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "glyphnet/tensor.hpp"

namespace glyphnet {

struct ImageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline Tensor<float> gray_from_bytes(const std::vector<unsigned char>& px, int h, int w) {
  Tensor<float> t({1, h, w});
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i)
    t[i] = static_cast<float>(px[static_cast<size_t>(i)]) / 255.0f;
  return t;
}

inline Tensor<float> read_png_gray(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ImageError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageError("png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageError("png info allocation failed");
  }
  std::vector<unsigned char> px;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError("corrupt png: " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_expand(png);  // palette/low-bit-depth/tRNS to full bytes
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR)
    png_set_rgb_to_gray(png, PNG_ERROR_ACTION_NONE, -1, -1);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  if (png_get_channels(png, info) != 1) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError("png did not reduce to one channel: " + path.string());
  }
  px.resize(static_cast<size_t>(w) * h);
  rows.resize(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = px.data() + static_cast<size_t>(y) * w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return gray_from_bytes(px, h, w);
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

inline Tensor<float> read_jpeg_gray(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ImageError("cannot open " + path.string());
  jpeg_decompress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ImageError("corrupt jpeg: " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_GRAYSCALE;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  std::vector<unsigned char> px(static_cast<size_t>(w) * h);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = px.data() + static_cast<size_t>(cinfo.output_scanline) * w;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return gray_from_bytes(px, h, w);
}

inline void skip_pnm_space(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      in.get();
    } else {
      return;
    }
  }
}

inline Tensor<float> read_pgm_gray(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw ImageError("not a PGM file: " + path.string());
  int w = 0, h = 0, maxval = 0;
  skip_pnm_space(in);
  in >> w;
  skip_pnm_space(in);
  in >> h;
  skip_pnm_space(in);
  in >> maxval;
  if (!in || w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw ImageError("bad PGM header: " + path.string());
  Tensor<float> t({1, h, w});
  const std::int64_t n = static_cast<std::int64_t>(w) * h;
  if (magic == "P2") {
    for (std::int64_t i = 0; i < n; ++i) {
      int v;
      in >> v;
      if (!in) throw ImageError("truncated PGM: " + path.string());
      t[i] = static_cast<float>(v) / static_cast<float>(maxval);
    }
  } else {
    in.get();  // single whitespace after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(static_cast<size_t>(n) * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
      throw ImageError("truncated PGM: " + path.string());
    for (std::int64_t i = 0; i < n; ++i) {
      const int v = bytes == 1 ? buf[static_cast<size_t>(i)]
                               : (buf[static_cast<size_t>(i) * 2] << 8) |
                                     buf[static_cast<size_t>(i) * 2 + 1];
      t[i] = static_cast<float>(v) / static_cast<float>(maxval);
    }
  }
  return t;
}

}  // namespace detail

/// Decode an image file to grayscale (1,H,W) with values in [0,1]. Format is
/// chosen by extension: .png, .jpg/.jpeg, .pgm.
inline Tensor<float> read_image_gray(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".png") return detail::read_png_gray(path);
  if (ext == ".jpg" || ext == ".jpeg") return detail::read_jpeg_gray(path);
  if (ext == ".pgm") return detail::read_pgm_gray(path);
  throw ImageError("unsupported image extension '" + ext + "': " + path.string());
}

/// Binary 8-bit PGM writer (used by the synthetic-corpus generator).
inline void write_pgm(const std::filesystem::path& path, const Tensor<float>& img) {
  if (img.rank() != 3 || img.dim(0) != 1)
    throw ShapeError("write_pgm expects (1,H,W), got " + shape_str(img.shape()));
  const int h = img.dim(1), w = img.dim(2);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot write " + path.string());
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = std::clamp(img[static_cast<std::int64_t>(y) * w + x], 0.0f, 1.0f);
      row[static_cast<size_t>(x)] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(row.data()), w);
  }
  if (!out) throw ImageError("write failed: " + path.string());
}

/// Scale to fit `target` x `target` preserving aspect ratio (bilinear), then
/// center on a zero background. A same-size input passes through unchanged.
inline Tensor<float> resize_pad(const Tensor<float>& img, int target) {
  if (img.rank() != 3 || img.dim(0) != 1)
    throw ShapeError("resize_pad expects (1,H,W), got " + shape_str(img.shape()));
  if (target < 1) throw std::invalid_argument("target size must be positive");
  const int h = img.dim(1), w = img.dim(2);
  if (h == target && w == target) return img;
  const double scale = std::min(static_cast<double>(target) / h, static_cast<double>(target) / w);
  const int nh = std::max(1, static_cast<int>(std::lround(h * scale)));
  const int nw = std::max(1, static_cast<int>(std::lround(w * scale)));
  Tensor<float> out({1, target, target});
  const int oy = (target - nh) / 2, ox = (target - nw) / 2;
  for (int y = 0; y < nh; ++y) {
    // Map destination pixel centers back into the source grid.
    const double sy = (y + 0.5) * static_cast<double>(h) / nh - 0.5;
    const int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    for (int x = 0; x < nw; ++x) {
      const double sx = (x + 0.5) * static_cast<double>(w) / nw - 0.5;
      const int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      auto at = [&](int yy, int xx) -> double {
        yy = std::clamp(yy, 0, h - 1);
        xx = std::clamp(xx, 0, w - 1);
        return static_cast<double>(img[static_cast<std::int64_t>(yy) * w + xx]);
      };
      const double v = at(y0, x0) * (1 - fy) * (1 - fx) + at(y0, x0 + 1) * (1 - fy) * fx +
                       at(y0 + 1, x0) * fy * (1 - fx) + at(y0 + 1, x0 + 1) * fy * fx;
      out[static_cast<std::int64_t>(oy + y) * target + (ox + x)] = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace glyphnet
