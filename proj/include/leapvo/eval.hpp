#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "leapvo/geometry.hpp"

namespace leapvo {

struct StampedPose {
  double timestamp = 0.0;
  Pose pose;
};

/// Ordered camera-to-world poses with strictly increasing timestamps.
using Trajectory = std::vector<StampedPose>;

/// x -> scale * rotation * x + translation
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  /// Set when fewer than 3 non-collinear points forced a translation-only fit.
  bool degenerate = false;

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
  Pose apply(const Pose& p) const { return {rotation * p.rotation, apply(p.translation)}; }
};

/// Least-squares similarity mapping `est` onto `gt`.
Similarity umeyama_align(const std::vector<Vec3>& est, const std::vector<Vec3>& gt, bool with_scale);

inline constexpr double kAssociationTolerance = 0.02;

/// Pairs (est index, gt index) by nearest timestamp. Throws AssociationError
/// if an estimate has no ground-truth stamp within `tolerance` seconds.
std::vector<std::pair<size_t, size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                 double tolerance = kAssociationTolerance);

struct AteResult {
  double rmse = 0.0;
  Similarity alignment;
  size_t matched = 0;
};

AteResult absolute_trajectory_error(const Trajectory& est, const Trajectory& gt,
                                    bool with_scale = true);

/// RMSE of translation residuals after similarity alignment (metres).
double ate_rmse(const Trajectory& est, const Trajectory& gt);

struct RpeResult {
  double translation = 0.0;  ///< metres of error per metre travelled
  double rotation = 0.0;     ///< degrees of error per metre travelled
  size_t pairs = 0;
};

/// Relative pose error over segments of `delta` metres of ground-truth arc
/// length, averaged over all start poses. No alignment is applied.
RpeResult rpe(const Trajectory& est, const Trajectory& gt, double delta = 1.0);

/// Copy of `traj` with the similarity applied to every pose.
Trajectory transform(const Trajectory& traj, const Similarity& s);

/// Bounding-box diagonal of the positions.
double trajectory_extent(const Trajectory& traj);

/// TUM format: `timestamp tx ty tz qx qy qz qw` per line, '#' comments.
Trajectory read_tum(std::istream& in, const std::string& source = "<stream>",
                    std::vector<std::string>* warnings = nullptr);
Trajectory read_tum(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);
void write_tum(std::ostream& out, const Trajectory& traj);
void write_tum(const std::filesystem::path& path, const Trajectory& traj);

/// Shortest round-trip decimal text of a double; -0 prints as 0.
std::string format_double(double v);

}  // namespace leapvo
