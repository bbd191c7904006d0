#include "leapvo/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "leapvo/errors.hpp"

namespace leapvo {

GradientMap sobel_gradient_map(const GrayImage& image) {
  const Eigen::Index h = image.rows();
  const Eigen::Index w = image.cols();
  if (h < 3 || w < 3)
    throw Error(ErrorCode::kImageTooSmall,
                "Sobel needs at least 3x3, got " + std::to_string(w) + "x" + std::to_string(h));
  GradientMap map;
  map.magnitude = GrayImage::Zero(h, w);
  map.source_width = static_cast<int>(w);
  map.source_height = static_cast<int>(h);
  for (Eigen::Index y = 1; y + 1 < h; ++y) {
    for (Eigen::Index x = 1; x + 1 < w; ++x) {
      const double gx = (image(y - 1, x + 1) + 2.0 * image(y, x + 1) + image(y + 1, x + 1)) -
                        (image(y - 1, x - 1) + 2.0 * image(y, x - 1) + image(y + 1, x - 1));
      const double gy = (image(y + 1, x - 1) + 2.0 * image(y + 1, x) + image(y + 1, x + 1)) -
                        (image(y - 1, x - 1) + 2.0 * image(y - 1, x) + image(y - 1, x + 1));
      map.magnitude(y, x) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return map;
}

GradientMap pool_gradient(const GradientMap& map, int pool) {
  if (pool < 1) throw Error(ErrorCode::kInvalidArgument, "pool must be >= 1");
  if (pool == 1) return map;
  const Eigen::Index h = map.magnitude.rows();
  const Eigen::Index w = map.magnitude.cols();
  const Eigen::Index ph = (h + pool - 1) / pool;
  const Eigen::Index pw = (w + pool - 1) / pool;
  GradientMap out;
  out.magnitude.resize(ph, pw);
  out.scale = map.scale * pool;
  out.source_width = map.source_width;
  out.source_height = map.source_height;
  for (Eigen::Index cy = 0; cy < ph; ++cy) {
    for (Eigen::Index cx = 0; cx < pw; ++cx) {
      const Eigen::Index y0 = cy * pool;
      const Eigen::Index x0 = cx * pool;
      const Eigen::Index bh = std::min<Eigen::Index>(pool, h - y0);
      const Eigen::Index bw = std::min<Eigen::Index>(pool, w - x0);
      out.magnitude(cy, cx) = map.magnitude.block(y0, x0, bh, bw).mean();
    }
  }
  return out;
}

namespace {

// Centre of map pixel `m` in source coordinates along an axis of `extent` pixels.
double to_source(Eigen::Index m, int scale, int extent) {
  const double first = static_cast<double>(m) * scale;
  const double last = std::min<double>(first + scale, extent) - 1.0;
  return 0.5 * (first + last);
}

}  // namespace

QuerySet grid_max_sample(const GradientMap& map, int k, int n, int frame) {
  if (k < 1 || n < 1 || n % (k * k) != 0)
    throw Error(ErrorCode::kInvalidGridSpec,
                "k^2 must divide n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  const int w = map.width();
  const int h = map.height();
  if (k > w || k > h) throw Error(ErrorCode::kInvalidGridSpec, "grid k exceeds map size");
  const int per_cell = n / (k * k);
  const int src_w = map.source_width > 0 ? map.source_width : w * map.scale;
  const int src_h = map.source_height > 0 ? map.source_height : h * map.scale;

  QuerySet out;
  out.reserve(static_cast<size_t>(n));
  std::vector<Eigen::Index> cell;
  for (int gy = 0; gy < k; ++gy) {
    const int y0 = gy * h / k;
    const int y1 = (gy + 1) * h / k;
    for (int gx = 0; gx < k; ++gx) {
      const int x0 = gx * w / k;
      const int x1 = (gx + 1) * w / k;
      cell.clear();
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) cell.push_back(static_cast<Eigen::Index>(y) * w + x);
      if (static_cast<int>(cell.size()) < per_cell)
        throw Error(ErrorCode::kInvalidGridSpec, "grid cell smaller than points per cell");
      // cell is in row-major order, so a stable sort keeps that order on ties
      std::stable_sort(cell.begin(), cell.end(), [&](Eigen::Index a, Eigen::Index b) {
        return map.magnitude(a / w, a % w) > map.magnitude(b / w, b % w);
      });
      for (int i = 0; i < per_cell; ++i) {
        const Eigen::Index idx = cell[static_cast<size_t>(i)];
        Query q;
        q.frame = frame;
        q.host_frame = frame;
        q.pixel = {to_source(idx % w, map.scale, src_w), to_source(idx / w, map.scale, src_h)};
        out.push_back(q);
      }
    }
  }
  return out;
}

QuerySet sample_keypoints(const GrayImage& image, int pool, int k, int n, int frame) {
  return grid_max_sample(pool_gradient(sobel_gradient_map(image), pool), k, n, frame);
}

}  // namespace leapvo
