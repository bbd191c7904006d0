#pragma once

#include <cstdint>
#include <vector>

#include "leapvo/geometry.hpp"
#include "leapvo/image.hpp"

namespace leapvo {

/// Per-pixel gradient magnitude, possibly downscaled from the source image.
struct GradientMap {
  GrayImage magnitude;
  int scale = 1;  ///< source pixels per map pixel along each axis
  int source_width = 0;
  int source_height = 0;

  int width() const { return static_cast<int>(magnitude.cols()); }
  int height() const { return static_cast<int>(magnitude.rows()); }
};

/// A point to track: the frame it was picked in and its pixel there.
struct Query {
  int frame = 0;
  Vec2 pixel = Vec2::Zero();
  /// Identity of the generating scene point, -1 when unknown.
  std::int64_t point_id = -1;
  /// Frame the track was originally hosted in; differs from `frame` when a
  /// chained window re-queries an existing track.
  int host_frame = 0;
};

using QuerySet = std::vector<Query>;

/// Magnitude of the unnormalised 3x3 Sobel responses (cross-correlation).
/// Border pixels are zero. Throws ImageTooSmall below 3x3.
GradientMap sobel_gradient_map(const GrayImage& image);

/// Non-overlapping pool x pool average; trailing partial cells average over
/// the pixels they actually cover.
GradientMap pool_gradient(const GradientMap& map, int pool);

/// Splits the map into k x k cells and returns the n/k^2 strongest pixels of
/// every cell (ties broken in row-major order), in source-image coordinates.
/// Throws InvalidGridSpec unless k^2 divides n and each cell holds enough pixels.
QuerySet grid_max_sample(const GradientMap& map, int k, int n, int frame = 0);

/// Sobel, pool, grid selection in one call.
QuerySet sample_keypoints(const GrayImage& image, int pool, int k, int n, int frame = 0);

}  // namespace leapvo
