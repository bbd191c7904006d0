#include "leapvo/geometry.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <numbers>

#include "leapvo/errors.hpp"

namespace leapvo {

namespace {

constexpr double kSmallAngle = 1e-8;
// Below this distance from pi the axis is read from the symmetric part.
constexpr double kNearPi = 1e-6;

Vec3 vee(const Mat3& m) { return {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)}; }

}  // namespace

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose Pose::FromMatrix(const Mat4& m) {
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose inverse(const Pose& pose) {
  Mat3 rt = pose.rotation.transpose();
  return {rt, -rt * pose.translation};
}

Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  if (theta < kSmallAngle) return Mat3::Identity() + w + 0.5 * w * w;
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * w + b * w * w;
}

Mat3 orthonormalize(const Mat3& m) {
  const Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

double rotation_angle(const Mat3& rotation) {
  const double s = 0.5 * vee(rotation).norm();
  const double c = 0.5 * (rotation.trace() - 1.0);
  return std::atan2(s, c);
}

Vec3 so3_log(const Mat3& rotation) {
  const Vec3 skew = vee(rotation);
  const double theta = rotation_angle(rotation);
  if (theta < kSmallAngle) return 0.5 * skew;
  if (std::numbers::pi - theta < kNearPi) {
    // (R + R^T)/2 = cos(t) I + (1 - cos(t)) n n^T
    const double c = std::cos(theta);
    const Mat3 nnt = (0.5 * (rotation + rotation.transpose()) - c * Mat3::Identity()) / (1.0 - c);
    Eigen::Index col = 0;
    nnt.diagonal().maxCoeff(&col);
    Vec3 axis = nnt.col(col) / std::sqrt(nnt(col, col));
    axis.normalize();
    if (axis.dot(skew) < 0.0) axis = -axis;
    return theta * axis;
  }
  return theta / (2.0 * std::sin(theta)) * skew;
}

namespace {

// Left Jacobian of SO(3); maps the translational twist part to translation.
Mat3 left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  if (theta < kSmallAngle) return Mat3::Identity() + 0.5 * w + w * w / 6.0;
  const double t2 = theta * theta;
  return Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * w +
         (theta - std::sin(theta)) / (t2 * theta) * w * w;
}

Mat3 left_jacobian_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  if (theta < kSmallAngle) return Mat3::Identity() - 0.5 * w + w * w / 12.0;
  const double t2 = theta * theta;
  const double coeff = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / t2;
  return Mat3::Identity() - 0.5 * w + coeff * w * w;
}

}  // namespace

Pose se3_exp(const Twist& xi) {
  const Vec3 omega = xi.head<3>();
  return {so3_exp(omega), left_jacobian(omega) * xi.tail<3>()};
}

Twist se3_log(const Pose& pose) {
  const Vec3 omega = so3_log(pose.rotation);
  Twist xi;
  xi.head<3>() = omega;
  xi.tail<3>() = left_jacobian_inverse(omega) * pose.translation;
  return xi;
}

Intrinsics read_intrinsics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIntrinsicsMissing, "cannot open " + path.string());
  Intrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy))
    throw Error(ErrorCode::kParseError, path.string() + ": line 1: expected 'fx fy cx cy'");
  if (!k.valid()) throw Error(ErrorCode::kParseError, path.string() + ": focal lengths must be positive");
  return k;
}

void write_intrinsics(const std::filesystem::path& path, const Intrinsics& k) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.precision(17);
  out << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << '\n';
}

Reprojection reproject(const Pose& host, const Pose& target, const Intrinsics& k,
                       const Vec2& x_host, double depth, ReprojectionJacobians* jacobians) {
  const Vec3 ray = k.backproject(x_host, 1.0);
  const Vec3 p_world = host * (depth * ray);
  const Mat3 rt = target.rotation.transpose();
  const Vec3 p = rt * (p_world - target.translation);

  Reprojection out;
  out.depth_in_target = p.z();
  out.in_front = p.z() > kMinProjectedDepth;
  if (!out.in_front) return out;
  out.pixel = k.project(p);

  if (jacobians != nullptr) {
    const double iz = 1.0 / p.z();
    Eigen::Matrix<double, 2, 3> d_proj;
    d_proj << k.fx * iz, 0.0, -k.fx * p.x() * iz * iz,
              0.0, k.fy * iz, -k.fy * p.y() * iz * iz;
    const Eigen::Matrix<double, 2, 3> d_world = d_proj * rt;
    // exp(xi) * T_host moves p_world by omega x p_world + v.
    jacobians->d_host.leftCols<3>() = -d_world * hat(p_world);
    jacobians->d_host.rightCols<3>() = d_world;
    // exp(xi) * T_target moves the world point by the opposite increment.
    jacobians->d_target = -jacobians->d_host;
    jacobians->d_depth = d_world * (host.rotation * ray);
  }
  return out;
}

}  // namespace leapvo
