#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "leapvo/image.hpp"
#include "leapvo/probmodel.hpp"
#include "leapvo/sampling.hpp"
#include "leapvo/synth.hpp"

namespace leapvo {

/// One query trajectory across a window. Row s refers to absolute frame
/// `TrackSet::first_frame + s`.
struct Track {
  Query query;
  Eigen::MatrixX2d xy;           ///< S x 2 pixels
  Eigen::VectorXd visibility;    ///< S, in [0, 1]
  Eigen::MatrixXd features;      ///< S x D point features (D may be 0)
  TrackDistribution distribution;
  double dynamic_score = 0.5;
  int dynamic_label = -1;        ///< ground truth when known, else -1

  Eigen::VectorXd uncertainty() const { return distribution.uncertainty(); }
};

struct TrackSet {
  int first_frame = 0;
  int num_frames = 0;
  std::vector<Track> tracks;
  /// Set by dynamic scoring when no frame pair had enough visible anchors.
  bool insufficient_anchors = false;

  size_t size() const { return tracks.size(); }
  bool contains_frame(int frame) const { return frame >= first_frame && frame < first_frame + num_frames; }
  int row(int frame) const { return frame - first_frame; }
};

/// Front-end contract: track queries bidirectionally across a frame window.
class PointTracker {
 public:
  virtual ~PointTracker() = default;

  /// Tracks `queries` across absolute frames [first_frame, first_frame + num_frames).
  /// Throws WindowMismatch when a query frame lies outside the window.
  virtual TrackSet track(int first_frame, int num_frames, const QuerySet& queries) = 0;

  /// Up to `n` new keypoints hosted in `frame`.
  virtual QuerySet keypoints(int frame, int n) = 0;

  /// Streaming hooks; trackers that own their frames ignore them.
  virtual void add_frame(int /*frame*/, const GrayImage& /*image*/) {}
  virtual void drop_frames_before(int /*frame*/) {}
};

/// Tracks over `num_frames` frames with a tracker whose model window is
/// `window`: overlapping windows with stride window-1, each next window
/// re-querying at the last predicted position. Values for a frame come from
/// the first window that covers it.
TrackSet chain_windows(PointTracker& tracker, int first_frame, int num_frames,
                       const QuerySet& queries, int window);

// ---------------------------------------------------------------------------
// Oracle tracker

struct OracleNoise {
  double sigma_px = 0.0;
  /// Fraction of contaminated tracks in each batch.
  double p_bad = 0.0;
  double sigma_bad = 8.0;
  bool respect_occlusion = true;
  std::uint64_t seed = 0;
};

/// Tracks derived from the scene's exact projections plus injected noise.
class OracleTracker : public PointTracker {
 public:
  OracleTracker(SceneSpec scene, OracleNoise noise, int grid_k = 8,
                double sigma_floor = kDefaultSigmaFloor);

  TrackSet track(int first_frame, int num_frames, const QuerySet& queries) override;
  QuerySet keypoints(int frame, int n) override;

  const SceneSpec& scene() const { return scene_; }
  const GroundTruthTracks& ground_truth() const { return gt_; }
  /// Whether the track hosted at (point, host_frame) was contaminated.
  std::optional<bool> contaminated(std::int64_t point_id, int host_frame) const;

 private:
  std::int64_t match(const Query& q) const;

  SceneSpec scene_;
  GroundTruthTracks gt_;
  OracleNoise noise_;
  int grid_k_;
  double sigma_floor_;
  std::map<std::pair<std::int64_t, int>, bool> bad_;
};

/// Convenience: a single oracle window over the whole scene.
TrackSet oracle_track(const SceneSpec& scene, const QuerySet& queries, const OracleNoise& noise);

// ---------------------------------------------------------------------------
// Correlation tracker

struct CorrelationConfig {
  int levels = 3;
  int patch = 7;
  int radius = 4;
  double beta = 20.0;
  int iterations = 4;
  double visibility_center = 0.5;
  double visibility_scale = 0.1;
  int projection_dim = 8;
  /// Pixel scale applied to the cost-volume statistics before projection.
  double uncertainty_scale = 2.0;
  double sigma_floor = kDefaultSigmaFloor;
  std::uint64_t seed = 0;
  int keypoint_pool = 2;
  int grid_k = 8;
};

/// Image pyramid (factor 2 box downsampling) with on-demand patch descriptors.
class FeaturePyramid {
 public:
  FeaturePyramid() = default;
  FeaturePyramid(std::vector<GrayImage> levels, int patch);

  int levels() const { return static_cast<int>(levels_.size()); }
  int patch() const { return patch_; }
  int descriptor_size() const { return patch_ * patch_; }
  const GrayImage& level(int l) const { return levels_[static_cast<size_t>(l)]; }

  /// Level-l coordinates of a full-resolution pixel.
  static Vec2 to_level(const Vec2& x, int l);
  /// True when the whole patch around the level-l point lies inside the level.
  bool patch_inside(int l, const Vec2& x_level) const;
  /// Mean-subtracted patch, row-major, bilinearly sampled at a level-l point.
  Eigen::VectorXd descriptor(int l, const Vec2& x_level) const;

 private:
  std::vector<GrayImage> levels_;
  int patch_ = 7;
};

/// L scales (1, 1/2, 1/4, ...) with a patch x patch descriptor per pixel.
/// Throws ImageTooSmall below 32x32.
FeaturePyramid build_feature_pyramid(const GrayImage& image, int levels = 3, int patch = 7);

/// Normalised cross-correlation; 0 when either side has no variance.
double ncc(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Local correlation scores per level, entry (dy + r, dx + r) for integer
/// level-l offsets; -1 where the patch leaves the image.
struct CostVolume {
  int radius = 4;
  std::vector<Eigen::MatrixXd> scores;
  std::vector<bool> level_valid;

  double center(int l) const { return scores[static_cast<size_t>(l)](radius, radius); }
};

/// Query descriptors for every level; std::nullopt where the patch leaves the image.
std::vector<std::optional<Eigen::VectorXd>> query_descriptors(const FeaturePyramid& pyramid, const Vec2& x);

CostVolume build_cost_volume(const FeaturePyramid& pyramid,
                             const std::vector<std::optional<Eigen::VectorXd>>& query,
                             const Vec2& x, int radius);

/// Softmax-weighted mean offset over the valid levels, in full-resolution pixels.
Vec2 soft_argmax(const CostVolume& volume, double beta);

struct RefineUpdate {
  Vec2 delta_x = Vec2::Zero();
  Eigen::VectorXd delta_f;
};

/// One additive state update: delta_x from the cost volume, delta_f re-sampling
/// the level-0 descriptor at x + delta_x.
RefineUpdate refine_step(const Vec2& x, const Eigen::VectorXd& f, const CostVolume& volume,
                         const FeaturePyramid& pyramid, double beta);

/// Per-frame evidence statistics used to build the scale matrices.
struct CostStatistics {
  double center = 0.0;       ///< level-0 NCC at the estimate
  double peak = 0.0;
  double second_ratio = 0.0;  ///< best score outside the peak's 3x3, over the peak
  double curvature = 0.0;
};

CostStatistics cost_statistics(const CostVolume& volume);

class CorrelationTracker : public PointTracker {
 public:
  explicit CorrelationTracker(CorrelationConfig config = {});
  /// Frames indexed 0..images.size()-1.
  CorrelationTracker(const std::vector<GrayImage>& images, CorrelationConfig config = {});

  TrackSet track(int first_frame, int num_frames, const QuerySet& queries) override;
  QuerySet keypoints(int frame, int n) override;
  void add_frame(int frame, const GrayImage& image) override;
  void drop_frames_before(int frame) override;

  const CorrelationConfig& config() const { return config_; }

 private:
  const FeaturePyramid& pyramid(int frame) const;
  Track track_one(const Query& q, int first_frame, int num_frames) const;

  CorrelationConfig config_;
  std::map<int, FeaturePyramid> pyramids_;
  std::map<int, GrayImage> images_;
  Eigen::MatrixXd projection_a_;
  Eigen::MatrixXd projection_b_;
};

/// Tracks queries over `images` (frame i = images[i]) with the correlation tracker.
/// Throws WindowMismatch when `window_size` differs from the number of images.
TrackSet correlation_track(const std::vector<GrayImage>& images, const QuerySet& queries,
                           int window_size, const CorrelationConfig& config = {});

}  // namespace leapvo
