#pragma once

#include <filesystem>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace leapvo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Tangent-space increment: rotation part first (rad), translation second (m).
using Twist = Vec6;

/// Rigid transform, stored camera-to-world unless stated otherwise.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose Identity() { return {}; }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
  Mat4 matrix() const;
  static Pose FromMatrix(const Mat4& m);
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& pose);
inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

Mat3 hat(const Vec3& w);

Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& rotation);

Pose se3_exp(const Twist& xi);
Twist se3_log(const Pose& pose);

/// Nearest rotation matrix in the Frobenius norm.
Mat3 orthonormalize(const Mat3& m);

/// Rotation angle of R in radians, in [0, pi].
double rotation_angle(const Mat3& rotation);

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Vec2 project(const Vec3& p_cam) const {
    return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
  }
  /// Point in the camera frame at depth `depth` along the ray through `pixel`.
  Vec3 backproject(const Vec2& pixel, double depth) const {
    return {depth * (pixel.x() - cx) / fx, depth * (pixel.y() - cy) / fy, depth};
  }
  bool valid() const { return fx > 0.0 && fy > 0.0; }
};

/// Reads `fx fy cx cy` from a one-line text file.
Intrinsics read_intrinsics(const std::filesystem::path& path);
void write_intrinsics(const std::filesystem::path& path, const Intrinsics& k);

inline constexpr double kMinProjectedDepth = 1e-6;

struct Reprojection {
  Vec2 pixel = Vec2::Zero();
  double depth_in_target = 0.0;
  /// False when the point lands at or behind the target camera.
  bool in_front = false;
};

/// Derivatives of the reprojected pixel under left increments
/// T <- exp(xi) * T of the host and target poses, and w.r.t. host depth.
struct ReprojectionJacobians {
  Eigen::Matrix<double, 2, 6> d_host = Eigen::Matrix<double, 2, 6>::Zero();
  Eigen::Matrix<double, 2, 6> d_target = Eigen::Matrix<double, 2, 6>::Zero();
  Vec2 d_depth = Vec2::Zero();
};

/// Maps pixel `x_host` with depth `depth` in the host camera into the target
/// camera: pi(K * (T_target^-1 T_host) * pi^-1(K, x_host, depth)).
Reprojection reproject(const Pose& host, const Pose& target, const Intrinsics& k,
                       const Vec2& x_host, double depth,
                       ReprojectionJacobians* jacobians = nullptr);

}  // namespace leapvo
