#include "leapvo/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "leapvo/errors.hpp"

namespace leapvo {

GrayImage rgb_to_gray(const GrayImage& r, const GrayImage& g, const GrayImage& b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

double sample_bilinear(const GrayImage& image, double x, double y) {
  const Eigen::Index w = image.cols();
  const Eigen::Index h = image.rows();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<Eigen::Index>(std::floor(x));
  const auto y0 = static_cast<Eigen::Index>(std::floor(y));
  const Eigen::Index x1 = std::min(x0 + 1, w - 1);
  const Eigen::Index y1 = std::min(y0 + 1, h - 1);
  const double ax = x - static_cast<double>(x0);
  const double ay = y - static_cast<double>(y0);
  return (1.0 - ay) * ((1.0 - ax) * image(y0, x0) + ax * image(y0, x1)) +
         ay * ((1.0 - ax) * image(y1, x0) + ax * image(y1, x1));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

GrayImage read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::kIoError, "cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kIoError, "libpng init failed");
  }
  GrayImage out;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kIoError, "malformed PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int channels = png_get_channels(png, info);
  const size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  out.resize(height, width);
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x) {
      const png_byte* px = rows[y] + x * channels;
      out(y, x) = channels >= 3 ? 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2] : px[0];
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoError, "libpng init failed");
  }
  const auto width = static_cast<png_uint_32>(image.cols());
  const auto height = static_cast<png_uint_32>(image.rows());
  std::vector<png_byte> row(width);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoError, "PNG encode failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x)
      row[x] = static_cast<png_byte>(std::lround(std::clamp(image(y, x), 0.0, 255.0)));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace leapvo
