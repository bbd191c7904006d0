#pragma once

#include <vector>

#include <Eigen/Core>

#include "leapvo/geometry.hpp"
#include "leapvo/tracker.hpp"

namespace leapvo {

struct FilterConfig {
  double gamma_v = 0.9;  ///< minimum visibility
  double gamma_d = 0.9;  ///< dynamic scores at or above this are rejected
  double gamma_u = 0.8;  ///< uncertainty quantile
  int gamma_track = 3;   ///< minimum valid points per track
};

struct DynamicScoreConfig {
  double tau_d = 1.0;    ///< Sampson distance (px) mapped to score 0.5
  double sigma_d = 0.2;  ///< logistic width (px)
  double gamma_v = 0.9;  ///< frames below this visibility are ignored
  double cauchy_c = 1.0;
  int irls_rounds = 5;
  int hypotheses = 256;
  /// Upper bound on correspondences per fitted frame pair, evenly strided.
  int max_fit_points = 512;
};

/// Per-track, per-frame weights in {0, 1} and the surviving-track flags.
struct ValidityMask {
  std::vector<Eigen::VectorXd> weights;
  std::vector<bool> alive;

  int kept_points() const;
  int kept_tracks() const;
};

/// Normalised 8-point fundamental matrix (x2^T F x1 = 0) refined by IRLS with
/// Cauchy weights on the Sampson distance. The IRLS starts from the best of the
/// all-points fit and `hypotheses` seeded minimal samples under a truncated
/// Sampson cost; the IRLS result is kept only if it does not raise that cost.
/// Rank 2, unit Frobenius norm.
/// Throws DegenerateConfiguration for fewer than 8 correspondences or a
/// design matrix of rank below 6.
Mat3 fit_dominant_motion(const std::vector<Vec2>& x1, const std::vector<Vec2>& x2,
                         int irls_rounds = 5, double cauchy_c = 1.0, int hypotheses = 256);

/// First-order epipolar distance in pixels.
double sampson_distance(const Mat3& f, const Vec2& x1, const Vec2& x2);

struct DynamicScores {
  std::vector<double> scores;
  bool insufficient_anchors = false;
};

/// Motion-consistency score per query track: mean Sampson distance to the
/// dominant motion fitted on anchors and queries, squashed by a logistic.
DynamicScores dynamic_score(const TrackSet& queries, const TrackSet& anchors,
                            const DynamicScoreConfig& config = {});

/// Scores the set against itself (its tracks double as anchors) and stores
/// the result in every track.
void assign_dynamic_scores(TrackSet& tracks, const DynamicScoreConfig& config = {});

/// Linear-interpolation empirical quantile, q in [0, 1].
double empirical_quantile(std::vector<double> values, double q);

ValidityMask filter_tracks(const TrackSet& tracks, const FilterConfig& config);

}  // namespace leapvo
