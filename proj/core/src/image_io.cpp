#include "lnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "lnet/errors.hpp"

namespace lnet::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::filesystem::path& path, const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw IoError("write_png: unsupported channel count");
  if (r.bit_depth != 8 && r.bit_depth != 16) throw IoError("write_png: unsupported bit depth");
  if (r.samples.size() != static_cast<std::size_t>(r.height) * r.width * r.channels) {
    throw IoError("write_png: sample count mismatch");
  }
  File fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  const int bytes = r.bit_depth / 8;
  std::vector<png_byte> row(static_cast<std::size_t>(r.width) * r.channels * bytes);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng error while writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, r.width, r.height, r.bit_depth,
               r.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t per_row = static_cast<std::size_t>(r.width) * r.channels;
  for (int y = 0; y < r.height; ++y) {
    for (std::size_t i = 0; i < per_row; ++i) {
      const std::uint16_t v = r.samples[y * per_row + i];
      if (bytes == 1) {
        row[i] = static_cast<png_byte>(v);
      } else {
        row[2 * i] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
        row[2 * i + 1] = static_cast<png_byte>(v & 0xff);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Raster read_png(const std::filesystem::path& path) {
  File fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  Raster r;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  r.width = static_cast<int>(png_get_image_width(png, info));
  r.height = static_cast<int>(png_get_image_height(png, info));
  r.channels = png_get_channels(png, info);
  r.bit_depth = png_get_bit_depth(png, info);
  if ((r.channels != 1 && r.channels != 3) || (r.bit_depth != 8 && r.bit_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG layout: " + path.string());
  }
  const int bytes = r.bit_depth / 8;
  const std::size_t per_row = static_cast<std::size_t>(r.width) * r.channels;
  row.resize(per_row * bytes);
  r.samples.resize(per_row * r.height);
  for (int y = 0; y < r.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (std::size_t i = 0; i < per_row; ++i) {
      r.samples[y * per_row + i] =
          bytes == 1 ? row[i] : static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1]);
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return r;
}

Raster to_raster(const Tensor& t, int bit_depth) {
  if (t.n() != 1) throw ShapeError("to_raster expects a single image");
  Raster r{t.h(), t.w(), t.c(), bit_depth, {}};
  const double top = bit_depth == 16 ? 65535.0 : 255.0;
  r.samples.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    r.samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp(t[i], 0.0, 1.0) * top));
  }
  return r;
}

Tensor to_tensor(const Raster& r) {
  Tensor t({1, r.height, r.width, r.channels});
  const double top = r.bit_depth == 16 ? 65535.0 : 255.0;
  for (std::size_t i = 0; i < r.samples.size(); ++i) t[i] = r.samples[i] / top;
  return t;
}

}  // namespace lnet::io
