#pragma once

#include <vector>

#include <Eigen/Core>

#include "leapvo/geometry.hpp"

namespace leapvo {

struct HuberValue {
  double cost = 0.0;
  double weight = 1.0;
};

/// Huber cost of a residual norm and its IRLS weight.
HuberValue huber(double r, double delta);

struct Landmark {
  int host = 0;  ///< index into BAProblem::poses
  Vec2 pixel = Vec2::Zero();
  double depth = 1.0;
};

struct Observation {
  int host = 0;
  int target = 0;
  int landmark = 0;
  Vec2 measurement = Vec2::Zero();
  double weight = 1.0;
};

/// Landmark variable the normal system is expressed in.
enum class DepthParam { kDepth, kInverseDepth };

struct BAProblem {
  std::vector<Pose> poses;  ///< camera-to-world
  std::vector<Landmark> landmarks;
  std::vector<Observation> observations;
  Intrinsics intrinsics;
  std::vector<int> fixed;  ///< indices of frozen poses
  double huber_delta = 2.0;
  DepthParam depth_param = DepthParam::kDepth;

  /// Block index of every pose in the camera system, -1 for fixed poses.
  std::vector<int> pose_slots() const;
};

struct NormalSystem {
  Eigen::MatrixXd h_cc;  ///< 6F x 6F
  Eigen::MatrixXd h_cl;  ///< 6F x L
  Eigen::VectorXd h_ll;  ///< L
  Eigen::VectorXd b_c;   ///< -J_c^T W r
  Eigen::VectorXd b_l;   ///< -J_l^T W r
  double cost = 0.0;
  int masked = 0;  ///< observations skipped for cheirality
};

NormalSystem linearize(const BAProblem& problem);

/// Robust cost and number of cheirality-masked observations.
double robust_cost(const BAProblem& problem, int* masked = nullptr);

struct BAIncrement {
  Eigen::VectorXd poses;   ///< 6 per free pose, in slot order
  Eigen::VectorXd depths;  ///< one per landmark, in the problem's depth parameter
  double lambda = 0.0;     ///< damping that was finally used
};

/// Solves (H + lambda I) dx = b by eliminating depths. Damping escalates x10
/// up to 1e2 when the reduced system does not factor; beyond that
/// SingularSystem is thrown.
BAIncrement schur_solve(const NormalSystem& system, double lambda = 1e-4);

struct BAOptions {
  int iterations = 4;
  double damping = 1e-4;
  double min_depth = 1e-3;
  double max_depth = 1e6;
  /// Step halvings tried before an iteration is rejected.
  int backtracking = 3;
};

struct BAReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int accepted = 0;
  int rejected = 0;
};

/// Gauss-Newton with Levenberg damping. A step that raises the cost is halved
/// up to `backtracking` times, then undone with the damping raised x10.
BAReport ba_optimize(BAProblem& problem, const BAOptions& options = {});

}  // namespace leapvo
