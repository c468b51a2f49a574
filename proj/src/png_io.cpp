#include "dtnt/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace dtnt {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageU8 read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail_io("cannot open '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail_io("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail_io("libpng init failed");
  }
  std::vector<png_bytep> row_ptrs;
  ImageU8 img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_io("failed to decode '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  // normalize to 8-bit gray or RGB
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_io("'" + path + "' has " + std::to_string(channels) +
            " channels after normalization, expected 1 or 3");
  }
  img.width = static_cast<int>(width);
  img.height = static_cast<int>(height);
  img.channels = channels;
  img.pixels.resize(static_cast<size_t>(width) * height * channels);
  row_ptrs.resize(height);
  for (png_uint_32 y = 0; y < height; ++y)
    row_ptrs[y] = img.pixels.data() + static_cast<size_t>(y) * width * channels;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    fail_io("write_png: " + std::to_string(img.channels) + " channels, expected 1 or 3");
  if (img.pixels.size() !=
      static_cast<size_t>(img.width) * img.height * img.channels)
    fail_io("write_png: pixel buffer does not match geometry");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail_io("cannot write '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail_io("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail_io("libpng init failed");
  }
  std::vector<png_bytep> row_ptrs(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail_io("failed to encode '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    row_ptrs[y] = const_cast<png_bytep>(img.pixels.data()) +
                  static_cast<size_t>(y) * img.width * img.channels;
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor<float> image_to_tensor(const ImageU8& img) {
  Tensor<float> t = Tensor<float>::zeros({img.channels, img.height, img.width});
  float* dst = t.data().data();
  const int64_t plane = static_cast<int64_t>(img.height) * img.width;
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      for (int64_t c = 0; c < img.channels; ++c)
        dst[c * plane + y * img.width + x] =
            static_cast<float>(img.pixels[(y * img.width + x) * img.channels + c]) /
            255.0f;
  return t;
}

ImageU8 tensor_to_image(const Tensor<float>& t) {
  if (t.rank() != 3 || (t.dim(0) != 1 && t.dim(0) != 3))
    fail_shape("tensor_to_image: expected [1|3,H,W], got " + shape_str(t.shape()));
  ImageU8 img;
  img.channels = static_cast<int>(t.dim(0));
  img.height = static_cast<int>(t.dim(1));
  img.width = static_cast<int>(t.dim(2));
  img.pixels.resize(static_cast<size_t>(img.width) * img.height * img.channels);
  const float* src = t.data().data();
  const int64_t plane = static_cast<int64_t>(img.height) * img.width;
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      for (int64_t c = 0; c < img.channels; ++c) {
        const double v = std::floor(static_cast<double>(src[c * plane + y * img.width + x]) *
                                        255.0 +
                                    0.5);  // round half up
        img.pixels[(y * img.width + x) * img.channels + c] =
            static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  return img;
}

}  // namespace dtnt
