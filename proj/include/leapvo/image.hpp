#pragma once

#include <filesystem>

#include <Eigen/Core>

namespace leapvo {

/// Grayscale image, rows = height, cols = width, indexed (y, x).
using GrayImage = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Luminance 0.299 R + 0.587 G + 0.114 B.
GrayImage rgb_to_gray(const GrayImage& r, const GrayImage& g, const GrayImage& b);

/// Bilinear sample with clamp-to-edge addressing.
double sample_bilinear(const GrayImage& image, double x, double y);

/// Reads an 8/16-bit gray, gray+alpha, RGB or RGBA PNG as luminance in [0, 255].
GrayImage read_png(const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG; values are clamped to [0, 255] and rounded.
void write_png(const std::filesystem::path& path, const GrayImage& image);

}  // namespace leapvo
