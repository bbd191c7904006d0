#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "leapvo/ba.hpp"
#include "leapvo/config.hpp"
#include "leapvo/eval.hpp"
#include "leapvo/synth.hpp"
#include "leapvo/tracker.hpp"

namespace leapvo {

struct FrameDiagnostics {
  int frame = 0;
  int active_tracks = 0;
  int kept_tracks = 0;
  int dropped_tracks = 0;
  int kept_points = 0;
  bool insufficient_anchors = false;
  bool ba_failed = false;
  double ba_initial_cost = 0.0;
  double ba_final_cost = 0.0;
  int ba_accepted = 0;
  double track_ms = 0.0;
  double filter_ms = 0.0;
  double ba_ms = 0.0;
  double total_ms = 0.0;
};

struct TrackRecord {
  int id = 0;
  std::int64_t point_id = -1;
  int host_frame = 0;
  Vec2 pixel = Vec2::Zero();
  double depth = 1.0;
  double dynamic_score = 0.5;
  double mean_uncertainty = 0.0;
  bool kept = false;
  int dynamic_label = -1;
};

/// Sliding-window state of a VO run: poses, landmarks and their accumulated
/// per-frame measurements.
class Pipeline {
 public:
  Pipeline(VoConfig config, Intrinsics intrinsics, PointTracker& tracker);

  /// Processes the next frame. `image` feeds trackers that work on pixels.
  void ingest_frame(double timestamp, const GrayImage* image = nullptr);
  /// Ends the sequence. A sequence shorter than `init_frames` gets its initial
  /// bundle adjustment here.
  void finish();

  int frames() const { return static_cast<int>(poses_.size()); }
  const std::vector<Pose>& poses() const { return poses_; }
  Trajectory trajectory() const;
  const std::vector<FrameDiagnostics>& diagnostics() const { return diagnostics_; }
  std::vector<TrackRecord> track_records() const;
  /// Number of tracks hosted inside the tracking window.
  int active_tracks() const;

 private:
  struct LandmarkState {
    TrackRecord record;
    std::map<int, std::pair<Vec2, double>> measurements;  ///< frame -> (pixel, weight)
    /// Set once BA drives the inverse depth to zero or below.
    bool rejected = false;
  };

  double initial_depth(int frame) const;
  void track_and_filter(int frame, FrameDiagnostics& diag);
  void bundle_adjust(int frame, int iterations, FrameDiagnostics& diag);

  VoConfig config_;
  Intrinsics intrinsics_;
  PointTracker& tracker_;
  std::vector<Pose> poses_;
  std::vector<double> timestamps_;
  std::vector<LandmarkState> landmarks_;
  std::vector<FrameDiagnostics> diagnostics_;
};

struct SequenceResult {
  Trajectory trajectory;
  std::vector<FrameDiagnostics> frames;
  std::vector<TrackRecord> tracks;
};

/// Runs the configured tracker over a synthetic scene (rendering images for
/// the correlation tracker).
SequenceResult run_sequence(const SceneSpec& scene, const VoConfig& config);

/// Runs the correlation tracker over the PNG frames of a directory, in file
/// name order. Timestamps come from `timestamps.txt` when present, otherwise
/// the frame index. Throws SourceEmpty or IntrinsicsMissing.
SequenceResult run_sequence(const std::filesystem::path& image_dir, const std::optional<Intrinsics>& intrinsics,
                            const VoConfig& config);

CorrelationConfig correlation_config(const VoConfig& config);
OracleNoise oracle_noise(const VoConfig& config);

}  // namespace leapvo
