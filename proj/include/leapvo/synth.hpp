#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "leapvo/eval.hpp"
#include "leapvo/geometry.hpp"
#include "leapvo/image.hpp"

namespace leapvo {

/// World-space motion of a scene point, in metres per frame.
struct PointMotion {
  enum class Kind { kStatic, kLinear, kSinusoidal };
  Kind kind = Kind::kStatic;
  Vec3 velocity = Vec3::Zero();   ///< linear: displacement per frame
  Vec3 amplitude = Vec3::Zero();  ///< sinusoidal: peak displacement
  double period = 20.0;           ///< sinusoidal: frames
  double phase = 0.0;
};

struct ScenePoint {
  Vec3 position = Vec3::Zero();  ///< at frame 0
  PointMotion motion;

  bool dynamic() const { return motion.kind != PointMotion::Kind::kStatic; }
  Vec3 at(int frame) const;
};

/// Finite rectangle centre + u * axis_u + v * axis_v, |u| <= half_u, |v| <= half_v.
struct Occluder {
  Vec3 center = Vec3::Zero();
  Vec3 axis_u = Vec3::UnitX();
  Vec3 axis_v = Vec3::UnitY();
  double half_u = 0.5;
  double half_v = 0.5;

  /// Ray parameter t of the hit of origin + t * dir, or a negative value.
  double intersect(const Vec3& origin, const Vec3& dir) const;
};

/// Parameters from which a scene is generated.
struct SceneConfig {
  int frames = 30;
  int static_points = 500;
  int dynamic_points = 0;
  /// Independent image motion of dynamic points at frame 0, pixels per frame.
  double dynamic_px_per_frame = 3.0;
  bool sinusoidal_dynamics = false;
  int occluders = 0;

  int width = 320;
  int height = 240;
  Intrinsics intrinsics{250.0, 250.0, 159.5, 119.5};
  double fps = 10.0;

  // camera path: Lissajous in x/y, slow drift along z, small rotations
  double amplitude_x = 0.6;
  double amplitude_y = 0.25;
  double period_x = 48.0;
  double period_y = 31.0;
  double forward_per_frame = 0.01;
  double rotation_amplitude = 0.05;  ///< radians
  bool pure_rotation = false;

  // static point box (world frame)
  Vec3 box_min{-3.0, -2.0, 3.0};
  Vec3 box_max{3.0, 2.0, 8.0};
  double background_depth = 10.0;
};

struct SceneSpec {
  Intrinsics intrinsics;
  int width = 0;
  int height = 0;
  std::vector<Pose> poses;  ///< camera-to-world, one per frame
  std::vector<double> timestamps;
  std::vector<ScenePoint> points;
  std::vector<Occluder> occluders;
  std::uint64_t texture_seed = 0;
  double background_depth = 10.0;

  int frames() const { return static_cast<int>(poses.size()); }
  Trajectory trajectory() const;
  /// True when the segment from camera `frame` to `p` crosses an occluder.
  bool occluded(int frame, const Vec3& p) const;
};

/// Throws InfeasibleScene when the requested geometry cannot be satisfied.
SceneSpec generate_scene(const SceneConfig& config, std::uint64_t seed);

struct GroundTruthTracks {
  std::vector<Eigen::MatrixX2d> projections;  ///< per point, frames x 2
  std::vector<Eigen::VectorXd> visibility;    ///< per point, {0, 1}
  std::vector<Eigen::VectorXd> depth;         ///< per point, camera-frame z
  std::vector<int> dynamic;                   ///< per point label

  size_t size() const { return projections.size(); }
};

GroundTruthTracks render_tracks(const SceneSpec& scene);

/// Multi-octave value noise in [0, 1] at continuous coordinates.
double value_noise(double x, double y, std::uint64_t seed, int octaves = 4, double base_cell = 16.0);

/// Noise texture sampled at pixel (x - shift_x, y - shift_y), in [0, 255].
GrayImage render_noise_texture(int width, int height, std::uint64_t seed, double shift_x = 0.0,
                               double shift_y = 0.0, double base_cell = 8.0);

/// Background plane texture, occluders, and Gaussian splats at visible points.
std::vector<GrayImage> render_images(const SceneSpec& scene);
GrayImage render_image(const SceneSpec& scene, const GroundTruthTracks& gt, int frame);

nlohmann::json scene_to_json(const SceneSpec& scene);
SceneSpec scene_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const SceneConfig& config);
/// Missing keys keep their defaults.
SceneConfig config_from_json(const nlohmann::json& j);

}  // namespace leapvo
