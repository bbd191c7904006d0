#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "leapvo/errors.hpp"
#include "leapvo/tracker.hpp"

namespace leapvo {

namespace {

constexpr int kMinPyramidSize = 32;
constexpr int kPolishIterations = 10;
constexpr double kPolishMaxShift = 1.5;

GrayImage downsample(const GrayImage& img) {
  const Eigen::Index h = img.rows() / 2;
  const Eigen::Index w = img.cols() / 2;
  GrayImage out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
      out(y, x) = 0.25 * (img(2 * y, 2 * x) + img(2 * y, 2 * x + 1) + img(2 * y + 1, 2 * x) +
                          img(2 * y + 1, 2 * x + 1));
  return out;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Bilinear value and gradient, clamp-to-edge.
double sample_with_gradient(const GrayImage& img, double x, double y, Vec2& grad) {
  const Eigen::Index w = img.cols();
  const Eigen::Index h = img.rows();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const auto x0 = std::min(static_cast<Eigen::Index>(std::floor(x)), w - 2);
  const auto y0 = std::min(static_cast<Eigen::Index>(std::floor(y)), h - 2);
  const double ax = x - static_cast<double>(x0);
  const double ay = y - static_cast<double>(y0);
  const double i00 = img(y0, x0);
  const double i01 = img(y0, x0 + 1);
  const double i10 = img(y0 + 1, x0);
  const double i11 = img(y0 + 1, x0 + 1);
  grad.x() = (1.0 - ay) * (i01 - i00) + ay * (i11 - i10);
  grad.y() = (1.0 - ax) * (i10 - i00) + ax * (i11 - i01);
  return (1.0 - ay) * ((1.0 - ax) * i00 + ax * i01) + ay * ((1.0 - ax) * i10 + ax * i11);
}

}  // namespace

FeaturePyramid::FeaturePyramid(std::vector<GrayImage> levels, int patch)
    : levels_(std::move(levels)), patch_(patch) {}

Vec2 FeaturePyramid::to_level(const Vec2& x, int l) {
  const double s = std::ldexp(1.0, l);
  return (x.array() + 0.5) / s - 0.5;
}

bool FeaturePyramid::patch_inside(int l, const Vec2& xl) const {
  const GrayImage& img = level(l);
  const double half = patch_ / 2;
  return xl.x() - half >= 0.0 && xl.y() - half >= 0.0 &&
         xl.x() + half <= static_cast<double>(img.cols() - 1) &&
         xl.y() + half <= static_cast<double>(img.rows() - 1);
}

Eigen::VectorXd FeaturePyramid::descriptor(int l, const Vec2& xl) const {
  const GrayImage& img = level(l);
  const int half = patch_ / 2;
  Eigen::VectorXd d(patch_ * patch_);
  int i = 0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) d[i++] = sample_bilinear(img, xl.x() + dx, xl.y() + dy);
  d.array() -= d.mean();
  return d;
}

FeaturePyramid build_feature_pyramid(const GrayImage& image, int levels, int patch) {
  if (image.rows() < kMinPyramidSize || image.cols() < kMinPyramidSize)
    throw Error(ErrorCode::kImageTooSmall, "feature pyramid needs at least 32x32 pixels");
  if (levels < 1 || patch < 1 || patch % 2 == 0)
    throw Error(ErrorCode::kInvalidArgument, "pyramid needs >= 1 level and an odd patch size");
  std::vector<GrayImage> lv;
  lv.push_back(image);
  for (int l = 1; l < levels; ++l) lv.push_back(downsample(lv.back()));
  return FeaturePyramid(std::move(lv), patch);
}

double ncc(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  const double na = ca.norm();
  const double nb = cb.norm();
  if (na < 1e-9 || nb < 1e-9) return 0.0;
  return ca.dot(cb) / (na * nb);
}

std::vector<std::optional<Eigen::VectorXd>> query_descriptors(const FeaturePyramid& pyramid, const Vec2& x) {
  std::vector<std::optional<Eigen::VectorXd>> out(static_cast<size_t>(pyramid.levels()));
  for (int l = 0; l < pyramid.levels(); ++l) {
    const Vec2 xl = FeaturePyramid::to_level(x, l);
    if (pyramid.patch_inside(l, xl)) out[static_cast<size_t>(l)] = pyramid.descriptor(l, xl);
  }
  return out;
}

CostVolume build_cost_volume(const FeaturePyramid& pyramid,
                             const std::vector<std::optional<Eigen::VectorXd>>& query, const Vec2& x,
                             int radius) {
  if (radius < 1) throw Error(ErrorCode::kInvalidArgument, "correlation radius must be >= 1");
  const int side = 2 * radius + 1;
  const int p = pyramid.patch();
  const int half = p / 2;
  const int grid = side + p - 1;
  CostVolume vol;
  vol.radius = radius;
  for (int l = 0; l < pyramid.levels(); ++l) {
    Eigen::MatrixXd scores = Eigen::MatrixXd::Constant(side, side, -1.0);
    const auto& q = query[static_cast<size_t>(l)];
    vol.level_valid.push_back(q.has_value());
    if (!q) {
      vol.scores.push_back(std::move(scores));
      continue;
    }
    const GrayImage& img = pyramid.level(l);
    const Vec2 xl = FeaturePyramid::to_level(x, l);
    // all offsets share the fractional position, so resample one local grid
    Eigen::MatrixXd local(grid, grid);
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < grid; ++j)
        local(i, j) = sample_bilinear(img, xl.x() - radius - half + j, xl.y() - radius - half + i);
    const double qn = q->norm();
    Eigen::VectorXd d(p * p);
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        if (!pyramid.patch_inside(l, xl + Vec2(dx, dy))) continue;
        int k = 0;
        for (int a = 0; a < p; ++a)
          for (int b = 0; b < p; ++b) d[k++] = local(dy + radius + a, dx + radius + b);
        d.array() -= d.mean();
        const double dn = d.norm();
        scores(dy + radius, dx + radius) = (qn < 1e-9 || dn < 1e-9) ? 0.0 : q->dot(d) / (qn * dn);
      }
    }
    vol.scores.push_back(std::move(scores));
  }
  return vol;
}

Vec2 soft_argmax(const CostVolume& volume, double beta) {
  Vec2 sum = Vec2::Zero();
  int used = 0;
  const int r = volume.radius;
  for (size_t l = 0; l < volume.scores.size(); ++l) {
    if (!volume.level_valid[l]) continue;
    const Eigen::MatrixXd& c = volume.scores[l];
    const double top = c.maxCoeff();
    const Eigen::ArrayXXd w = (beta * (c.array() - top)).exp();
    Vec2 off = Vec2::Zero();
    for (int i = 0; i < c.rows(); ++i)
      for (int j = 0; j < c.cols(); ++j) off += w(i, j) * Vec2(j - r, i - r);
    sum += std::ldexp(1.0, static_cast<int>(l)) * off / w.sum();
    ++used;
  }
  return used > 0 ? Vec2(sum / used) : Vec2::Zero();
}

RefineUpdate refine_step(const Vec2& x, const Eigen::VectorXd& f, const CostVolume& volume,
                         const FeaturePyramid& pyramid, double beta) {
  RefineUpdate u;
  u.delta_x = soft_argmax(volume, beta);
  const Vec2 next = FeaturePyramid::to_level(x + u.delta_x, 0);
  if (pyramid.patch_inside(0, next) && f.size() == pyramid.descriptor_size()) {
    u.delta_f = pyramid.descriptor(0, next) - f;
  } else {
    u.delta_f = Eigen::VectorXd::Zero(f.size());
  }
  return u;
}

CostStatistics cost_statistics(const CostVolume& volume) {
  CostStatistics st;
  const Eigen::MatrixXd& c = volume.scores.front();
  const int r = volume.radius;
  st.center = c(r, r);
  Eigen::Index pi = 0;
  Eigen::Index pj = 0;
  st.peak = c.maxCoeff(&pi, &pj);
  double second = -1.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j)
      if (std::abs(i - pi) > 1 || std::abs(j - pj) > 1) second = std::max(second, c(i, j));
  st.second_ratio = st.peak > 1e-9 ? std::clamp(second / st.peak, 0.0, 1.0) : 1.0;
  if (pi > 0 && pj > 0 && pi + 1 < c.rows() && pj + 1 < c.cols()) {
    st.curvature = std::max(0.0, (2.0 * st.peak - c(pi, pj - 1) - c(pi, pj + 1)) +
                                     (2.0 * st.peak - c(pi - 1, pj) - c(pi + 1, pj)));
  }
  return st;
}

CorrelationTracker::CorrelationTracker(CorrelationConfig config) : config_(config) {
  std::mt19937_64 rng(config_.seed ^ 0x636f7272656c6174ULL);
  std::normal_distribution<double> n01(0.0, 1.0 / std::sqrt(static_cast<double>(config_.projection_dim)));
  projection_a_.resize(3, config_.projection_dim);
  projection_b_.resize(3, config_.projection_dim);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < config_.projection_dim; ++j) projection_a_(i, j) = n01(rng);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < config_.projection_dim; ++j) projection_b_(i, j) = n01(rng);
}

CorrelationTracker::CorrelationTracker(const std::vector<GrayImage>& images, CorrelationConfig config)
    : CorrelationTracker(config) {
  for (size_t i = 0; i < images.size(); ++i) add_frame(static_cast<int>(i), images[i]);
}

void CorrelationTracker::add_frame(int frame, const GrayImage& image) {
  pyramids_[frame] = build_feature_pyramid(image, config_.levels, config_.patch);
  images_[frame] = image;
}

void CorrelationTracker::drop_frames_before(int frame) {
  pyramids_.erase(pyramids_.begin(), pyramids_.lower_bound(frame));
  images_.erase(images_.begin(), images_.lower_bound(frame));
}

const FeaturePyramid& CorrelationTracker::pyramid(int frame) const {
  auto it = pyramids_.find(frame);
  if (it == pyramids_.end())
    throw Error(ErrorCode::kWindowMismatch, "no image for frame " + std::to_string(frame));
  return it->second;
}

QuerySet CorrelationTracker::keypoints(int frame, int n) {
  auto it = images_.find(frame);
  if (it == images_.end()) throw Error(ErrorCode::kWindowMismatch, "no image for frame " + std::to_string(frame));
  return sample_keypoints(it->second, config_.keypoint_pool, config_.grid_k, n, frame);
}

namespace {

// Gauss-Newton on the mean-subtracted level-0 patch difference; exact at a
// perfect match since the residual there is zero.
Vec2 polish(const FeaturePyramid& target, const Eigen::VectorXd& templ, Vec2 x) {
  const GrayImage& img = target.level(0);
  const int half = target.patch() / 2;
  const int n = target.patch() * target.patch();
  const Vec2 start = x;
  Eigen::VectorXd values(n);
  Eigen::MatrixX2d grads(n, 2);
  for (int it = 0; it < kPolishIterations; ++it) {
    if (!target.patch_inside(0, x)) return start;
    int k = 0;
    for (int dy = -half; dy <= half; ++dy) {
      for (int dx = -half; dx <= half; ++dx) {
        Vec2 g;
        values[k] = sample_with_gradient(img, x.x() + dx, x.y() + dy, g);
        grads.row(k) = g.transpose();
        ++k;
      }
    }
    const Eigen::VectorXd r = (values.array() - values.mean()).matrix() - templ;
    const Eigen::MatrixX2d j = grads.rowwise() - grads.colwise().mean();
    const Eigen::Matrix2d h = j.transpose() * j;
    if (h.determinant() < 1e-9) return x;
    const Vec2 step = -h.ldlt().solve(j.transpose() * r);
    x += step;
    if ((x - start).norm() > kPolishMaxShift) return start;
    if (step.norm() < 1e-12) break;
  }
  return x;
}

}  // namespace

Track CorrelationTracker::track_one(const Query& q, int first_frame, int num_frames) const {
  const FeaturePyramid& qp = pyramid(q.frame);
  const auto qdesc = query_descriptors(qp, q.pixel);
  const Eigen::VectorXd f0 = qdesc.front() ? *qdesc.front() : Eigen::VectorXd::Zero(qp.descriptor_size());

  Track t;
  t.query = q;
  t.xy = q.pixel.transpose().replicate(num_frames, 1);
  t.visibility = Eigen::VectorXd::Zero(num_frames);
  t.features = f0.transpose().replicate(num_frames, 1);
  Eigen::MatrixXd stats = Eigen::MatrixXd::Zero(num_frames, 3);
  const int qs = q.frame - first_frame;
  t.visibility[qs] = 1.0;

  const bool trackable = std::any_of(qdesc.begin(), qdesc.end(), [](const auto& d) { return d.has_value(); });
  if (trackable) {
    for (int dir : {+1, -1}) {
      for (int s = qs + dir; s >= 0 && s < num_frames; s += dir) {
        const FeaturePyramid& pyr = pyramid(first_frame + s);
        const GrayImage& img = pyr.level(0);
        const Vec2 prev = t.xy.row(s - dir).transpose();
        Vec2 x = prev;
        if (std::abs(s - qs) >= 2) x += prev - t.xy.row(s - 2 * dir).transpose();  // constant velocity
        Eigen::VectorXd f = t.features.row(s - dir).transpose();
        for (int k = 0; k < config_.iterations; ++k) {
          const CostVolume vol = build_cost_volume(pyr, qdesc, x, config_.radius);
          const RefineUpdate u = refine_step(x, f, vol, pyr, config_.beta);
          x += u.delta_x;
          f += u.delta_f;
          x.x() = std::clamp(x.x(), 0.0, static_cast<double>(img.cols() - 1));
          x.y() = std::clamp(x.y(), 0.0, static_cast<double>(img.rows() - 1));
        }
        if (qdesc.front()) x = polish(pyr, *qdesc.front(), x);
        const CostVolume final_vol = build_cost_volume(pyr, qdesc, x, config_.radius);
        const CostStatistics st = cost_statistics(final_vol);
        t.xy.row(s) = x.transpose();
        if (pyr.patch_inside(0, x)) f = pyr.descriptor(0, x);
        t.features.row(s) = f.transpose();
        t.visibility[s] = logistic((st.center - config_.visibility_center) / config_.visibility_scale);
        stats.row(s) << std::max(0.0, 1.0 - st.center), st.second_ratio, 1.0 / (1.0 + st.curvature);
      }
    }
  }
  const Eigen::MatrixXd fa = config_.uncertainty_scale * stats * projection_a_;
  const Eigen::MatrixXd fb = config_.uncertainty_scale * stats * projection_b_;
  t.distribution = make_distribution(t.xy, fa, fb, config_.sigma_floor);
  return t;
}

TrackSet CorrelationTracker::track(int first_frame, int num_frames, const QuerySet& queries) {
  for (int s = 0; s < num_frames; ++s) (void)pyramid(first_frame + s);
  for (const auto& q : queries) {
    if (q.frame < first_frame || q.frame >= first_frame + num_frames)
      throw Error(ErrorCode::kWindowMismatch, "query frame " + std::to_string(q.frame) + " outside window");
  }
  TrackSet out;
  out.first_frame = first_frame;
  out.num_frames = num_frames;
  out.tracks.reserve(queries.size());
  for (const auto& q : queries) out.tracks.push_back(track_one(q, first_frame, num_frames));
  return out;
}

TrackSet correlation_track(const std::vector<GrayImage>& images, const QuerySet& queries,
                           int window_size, const CorrelationConfig& config) {
  if (static_cast<int>(images.size()) != window_size)
    throw Error(ErrorCode::kWindowMismatch, "expected " + std::to_string(window_size) + " images, got " +
                                                std::to_string(images.size()));
  CorrelationTracker tracker(images, config);
  return tracker.track(0, window_size, queries);
}

}  // namespace leapvo
