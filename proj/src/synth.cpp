#include "leapvo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "leapvo/errors.hpp"

namespace leapvo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMinSceneDepth = 0.1;
constexpr int kMaxPlacementTries = 200;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL ^
                                                 static_cast<std::uint64_t>(iy)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool in_front_everywhere(const std::vector<Pose>& poses, const ScenePoint& pt) {
  for (size_t s = 0; s < poses.size(); ++s) {
    const Vec3 p = inverse(poses[s]) * pt.at(static_cast<int>(s));
    if (p.z() < kMinSceneDepth) return false;
  }
  return true;
}

}  // namespace

Vec3 ScenePoint::at(int frame) const {
  switch (motion.kind) {
    case PointMotion::Kind::kStatic:
      return position;
    case PointMotion::Kind::kLinear:
      return position + static_cast<double>(frame) * motion.velocity;
    case PointMotion::Kind::kSinusoidal:
      return position + motion.amplitude * (std::sin(kTwoPi * frame / motion.period + motion.phase) -
                                            std::sin(motion.phase));
  }
  return position;
}

double Occluder::intersect(const Vec3& origin, const Vec3& dir) const {
  const Vec3 n = axis_u.cross(axis_v);
  const double denom = n.dot(dir);
  if (std::abs(denom) < 1e-12) return -1.0;
  const double t = n.dot(center - origin) / denom;
  const Vec3 local = origin + t * dir - center;
  if (std::abs(local.dot(axis_u)) > half_u || std::abs(local.dot(axis_v)) > half_v) return -1.0;
  return t;
}

Trajectory SceneSpec::trajectory() const {
  Trajectory traj;
  for (size_t i = 0; i < poses.size(); ++i) traj.push_back({timestamps[i], poses[i]});
  return traj;
}

bool SceneSpec::occluded(int frame, const Vec3& p) const {
  const Vec3 c = poses[static_cast<size_t>(frame)].translation;
  const Vec3 dir = p - c;
  for (const auto& occ : occluders) {
    const double t = occ.intersect(c, dir);
    if (t > 1e-9 && t < 1.0 - 1e-9) return true;
  }
  return false;
}

SceneSpec generate_scene(const SceneConfig& config, std::uint64_t seed) {
  if (config.frames < 2) throw Error(ErrorCode::kInfeasibleScene, "scene needs at least 2 frames");
  if (config.static_points < 8)
    throw Error(ErrorCode::kInfeasibleScene, "scene needs at least 8 static points");
  if (config.dynamic_points < 0 || config.occluders < 0)
    throw Error(ErrorCode::kInfeasibleScene, "negative point or occluder count");
  if (!config.intrinsics.valid() || config.width < 8 || config.height < 8)
    throw Error(ErrorCode::kInfeasibleScene, "invalid camera");
  if ((config.box_max - config.box_min).minCoeff() < 0.0)
    throw Error(ErrorCode::kInfeasibleScene, "point box has negative extent");

  std::mt19937_64 rng(seed);
  SceneSpec scene;
  scene.intrinsics = config.intrinsics;
  scene.width = config.width;
  scene.height = config.height;
  scene.background_depth = config.background_depth;
  scene.texture_seed = splitmix64(seed ^ 0x7465787475726531ULL);

  const double phase_x = uniform(rng, 0.0, kTwoPi);
  const double phase_y = uniform(rng, 0.0, kTwoPi);
  const Vec3 rot_phase(uniform(rng, 0.0, kTwoPi), uniform(rng, 0.0, kTwoPi), uniform(rng, 0.0, kTwoPi));
  for (int s = 0; s < config.frames; ++s) {
    Pose pose;
    if (!config.pure_rotation) {
      pose.translation = {config.amplitude_x * (std::sin(kTwoPi * s / config.period_x + phase_x) - std::sin(phase_x)),
                          config.amplitude_y * (std::sin(kTwoPi * s / config.period_y + phase_y) - std::sin(phase_y)),
                          config.forward_per_frame * s};
    }
    const double r = config.rotation_amplitude;
    const Vec3 omega(r * std::sin(kTwoPi * s / 37.0 + rot_phase.x()),
                     r * std::sin(kTwoPi * s / 43.0 + rot_phase.y()),
                     0.3 * r * std::sin(kTwoPi * s / 53.0 + rot_phase.z()));
    pose.rotation = so3_exp(omega);
    scene.poses.push_back(pose);
    scene.timestamps.push_back(s / config.fps);
  }
  if (!config.pure_rotation && trajectory_extent(scene.trajectory()) <= 0.0)
    throw Error(ErrorCode::kInfeasibleScene, "camera path has no translation");

  auto sample_box = [&] {
    return Vec3(uniform(rng, config.box_min.x(), config.box_max.x()),
                uniform(rng, config.box_min.y(), config.box_max.y()),
                uniform(rng, config.box_min.z(), config.box_max.z()));
  };

  for (int i = 0; i < config.static_points; ++i) {
    ScenePoint pt;
    int tries = 0;
    do {
      if (++tries > kMaxPlacementTries)
        throw Error(ErrorCode::kInfeasibleScene, "static points cannot be placed in front of every camera");
      pt.position = sample_box();
    } while (!in_front_everywhere(scene.poses, pt));
    scene.points.push_back(pt);
  }

  const Pose& first = scene.poses.front();
  for (int i = 0; i < config.dynamic_points; ++i) {
    ScenePoint pt;
    int tries = 0;
    do {
      if (++tries > kMaxPlacementTries)
        throw Error(ErrorCode::kInfeasibleScene, "dynamic points leave the camera frustum depth range");
      pt.position = sample_box();
      const Vec3 ray = (pt.position - first.translation).normalized();
      Vec3 dir(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
      dir -= dir.dot(ray) * ray;  // across the line of sight
      if (dir.norm() < 1e-6) continue;
      dir.normalize();
      const double depth = (inverse(first) * pt.position).z();
      const double speed = config.dynamic_px_per_frame * depth / config.intrinsics.fx;
      if (config.sinusoidal_dynamics) {
        pt.motion.kind = PointMotion::Kind::kSinusoidal;
        pt.motion.period = uniform(rng, 20.0, 40.0);
        pt.motion.phase = uniform(rng, 0.0, kTwoPi);
        // peak speed amplitude * 2 pi / period matches the linear speed
        pt.motion.amplitude = dir * speed * pt.motion.period / kTwoPi;
      } else {
        pt.motion.kind = PointMotion::Kind::kLinear;
        pt.motion.velocity = dir * speed;
      }
    } while (!in_front_everywhere(scene.poses, pt));
    scene.points.push_back(pt);
  }

  for (int i = 0; i < config.occluders; ++i) {
    Occluder occ;
    const Vec3 c_cam(uniform(rng, -0.8, 0.8), uniform(rng, -0.5, 0.5), uniform(rng, 1.8, 2.6));
    occ.center = first * c_cam;
    occ.axis_u = first.rotation.col(0);
    occ.axis_v = first.rotation.col(1);
    occ.half_u = uniform(rng, 0.15, 0.35);
    occ.half_v = uniform(rng, 0.15, 0.35);
    scene.occluders.push_back(occ);
  }
  return scene;
}

GroundTruthTracks render_tracks(const SceneSpec& scene) {
  GroundTruthTracks gt;
  const int frames = scene.frames();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& pt : scene.points) {
    Eigen::MatrixX2d proj(frames, 2);
    Eigen::VectorXd vis(frames);
    Eigen::VectorXd depth(frames);
    for (int s = 0; s < frames; ++s) {
      const Vec3 pw = pt.at(s);
      const Vec3 p = inverse(scene.poses[static_cast<size_t>(s)]) * pw;
      depth[s] = p.z();
      if (p.z() <= kMinProjectedDepth) {
        proj.row(s) << nan, nan;
        vis[s] = 0.0;
        continue;
      }
      const Vec2 px = scene.intrinsics.project(p);
      proj.row(s) = px.transpose();
      const bool in_image = px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= scene.width - 1.0 &&
                            px.y() <= scene.height - 1.0;
      vis[s] = (in_image && !scene.occluded(s, pw)) ? 1.0 : 0.0;
    }
    gt.projections.push_back(std::move(proj));
    gt.visibility.push_back(std::move(vis));
    gt.depth.push_back(std::move(depth));
    gt.dynamic.push_back(pt.dynamic() ? 1 : 0);
  }
  return gt;
}

double value_noise(double x, double y, std::uint64_t seed, int octaves, double base_cell) {
  double sum = 0.0;
  double norm = 0.0;
  double amp = 1.0;
  double cell = base_cell;
  for (int o = 0; o < octaves; ++o) {
    const std::uint64_t oseed = splitmix64(seed + static_cast<std::uint64_t>(o) * 0x9e37ULL);
    const double u = x / cell;
    const double v = y / cell;
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    const auto ix = static_cast<std::int64_t>(fu);
    const auto iy = static_cast<std::int64_t>(fv);
    const double tx = smooth(u - fu);
    const double ty = smooth(v - fv);
    const double top = (1.0 - tx) * lattice(ix, iy, oseed) + tx * lattice(ix + 1, iy, oseed);
    const double bottom = (1.0 - tx) * lattice(ix, iy + 1, oseed) + tx * lattice(ix + 1, iy + 1, oseed);
    sum += amp * ((1.0 - ty) * top + ty * bottom);
    norm += amp;
    amp *= 0.6;
    cell *= 0.5;
  }
  return sum / norm;
}

GrayImage render_noise_texture(int width, int height, std::uint64_t seed, double shift_x,
                               double shift_y, double base_cell) {
  GrayImage img(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      img(y, x) = 255.0 * value_noise(x - shift_x, y - shift_y, seed, 3, base_cell);
  return img;
}

GrayImage render_image(const SceneSpec& scene, const GroundTruthTracks& gt, int frame) {
  constexpr double kMetresPerTexel = 0.05;
  constexpr double kSplatSigma = 1.2;
  const Pose& pose = scene.poses[static_cast<size_t>(frame)];
  const Intrinsics& k = scene.intrinsics;
  GrayImage img(scene.height, scene.width);
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      const Vec3 dir = pose.rotation * k.backproject(Vec2(x, y), 1.0);
      const Vec3& c = pose.translation;
      double best = std::numeric_limits<double>::infinity();
      double value = 128.0;
      if (dir.z() > 1e-9) {
        best = (scene.background_depth - c.z()) / dir.z();
        const Vec3 hit = c + best * dir;
        value = 40.0 + 175.0 * value_noise(hit.x() / kMetresPerTexel, hit.y() / kMetresPerTexel,
                                           scene.texture_seed, 4, 8.0);
      }
      for (size_t o = 0; o < scene.occluders.size(); ++o) {
        const auto& occ = scene.occluders[o];
        const double t = occ.intersect(c, dir);
        if (t > 0.0 && t < best) {
          best = t;
          const Vec3 local = c + t * dir - occ.center;
          value = 20.0 + 120.0 * value_noise(local.dot(occ.axis_u) / kMetresPerTexel,
                                             local.dot(occ.axis_v) / kMetresPerTexel,
                                             scene.texture_seed + 1 + o, 3, 4.0);
        }
      }
      img(y, x) = value;
    }
  }
  const int reach = static_cast<int>(std::ceil(4.0 * kSplatSigma));
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt.visibility[i][frame] < 0.5) continue;
    const double px = gt.projections[i](frame, 0);
    const double py = gt.projections[i](frame, 1);
    const double amp = (lattice(static_cast<std::int64_t>(i), 17, scene.texture_seed) < 0.5 ? -1.0 : 1.0) *
                       (60.0 + 40.0 * lattice(static_cast<std::int64_t>(i), 29, scene.texture_seed));
    const int cx = static_cast<int>(std::lround(px));
    const int cy = static_cast<int>(std::lround(py));
    for (int y = std::max(0, cy - reach); y <= std::min(scene.height - 1, cy + reach); ++y) {
      for (int x = std::max(0, cx - reach); x <= std::min(scene.width - 1, cx + reach); ++x) {
        const double r2 = (x - px) * (x - px) + (y - py) * (y - py);
        img(y, x) += amp * std::exp(-0.5 * r2 / (kSplatSigma * kSplatSigma));
      }
    }
  }
  return img.cwiseMax(0.0).cwiseMin(255.0);
}

std::vector<GrayImage> render_images(const SceneSpec& scene) {
  const GroundTruthTracks gt = render_tracks(scene);
  std::vector<GrayImage> out;
  out.reserve(static_cast<size_t>(scene.frames()));
  for (int s = 0; s < scene.frames(); ++s) out.push_back(render_image(scene, gt, s));
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::kParseError, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string kind_name(PointMotion::Kind k) {
  switch (k) {
    case PointMotion::Kind::kStatic: return "static";
    case PointMotion::Kind::kLinear: return "linear";
    case PointMotion::Kind::kSinusoidal: return "sinusoidal";
  }
  return "static";
}

PointMotion::Kind kind_from(const std::string& s) {
  if (s == "static") return PointMotion::Kind::kStatic;
  if (s == "linear") return PointMotion::Kind::kLinear;
  if (s == "sinusoidal") return PointMotion::Kind::kSinusoidal;
  throw Error(ErrorCode::kParseError, "unknown motion kind '" + s + "'");
}

json intrinsics_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
}

Intrinsics intrinsics_from(const json& j) {
  Intrinsics k{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
               j.at("cy").get<double>()};
  if (!k.valid()) throw Error(ErrorCode::kParseError, "intrinsics focal lengths must be positive");
  return k;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

nlohmann::json scene_to_json(const SceneSpec& scene) {
  json j;
  j["intrinsics"] = intrinsics_json(scene.intrinsics);
  j["width"] = scene.width;
  j["height"] = scene.height;
  j["texture_seed"] = scene.texture_seed;
  j["background_depth"] = scene.background_depth;
  json poses = json::array();
  for (size_t i = 0; i < scene.poses.size(); ++i) {
    const auto& p = scene.poses[i];
    json r = json::array();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) r.push_back(p.rotation(a, b));
    poses.push_back({{"timestamp", scene.timestamps[i]}, {"rotation", r}, {"translation", vec_json(p.translation)}});
  }
  j["poses"] = poses;
  json pts = json::array();
  for (const auto& pt : scene.points) {
    json m = {{"kind", kind_name(pt.motion.kind)}};
    if (pt.motion.kind == PointMotion::Kind::kLinear) m["velocity"] = vec_json(pt.motion.velocity);
    if (pt.motion.kind == PointMotion::Kind::kSinusoidal) {
      m["amplitude"] = vec_json(pt.motion.amplitude);
      m["period"] = pt.motion.period;
      m["phase"] = pt.motion.phase;
    }
    pts.push_back({{"position", vec_json(pt.position)}, {"motion", m}});
  }
  j["points"] = pts;
  json occs = json::array();
  for (const auto& o : scene.occluders) {
    occs.push_back({{"center", vec_json(o.center)}, {"axis_u", vec_json(o.axis_u)},
                    {"axis_v", vec_json(o.axis_v)}, {"half_u", o.half_u}, {"half_v", o.half_v}});
  }
  j["occluders"] = occs;
  return j;
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  try {
    SceneSpec scene;
    scene.intrinsics = intrinsics_from(j.at("intrinsics"));
    scene.width = j.at("width").get<int>();
    scene.height = j.at("height").get<int>();
    read_opt(j, "texture_seed", scene.texture_seed);
    read_opt(j, "background_depth", scene.background_depth);
    for (const auto& p : j.at("poses")) {
      Pose pose;
      const auto& r = p.at("rotation");
      if (!r.is_array() || r.size() != 9) throw Error(ErrorCode::kParseError, "rotation needs 9 entries");
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) pose.rotation(a, b) = r[static_cast<size_t>(3 * a + b)].get<double>();
      pose.translation = vec_from(p.at("translation"));
      scene.poses.push_back(pose);
      scene.timestamps.push_back(p.at("timestamp").get<double>());
    }
    for (const auto& p : j.at("points")) {
      ScenePoint pt;
      pt.position = vec_from(p.at("position"));
      if (p.contains("motion")) {
        const auto& m = p.at("motion");
        pt.motion.kind = kind_from(m.at("kind").get<std::string>());
        if (m.contains("velocity")) pt.motion.velocity = vec_from(m.at("velocity"));
        if (m.contains("amplitude")) pt.motion.amplitude = vec_from(m.at("amplitude"));
        read_opt(m, "period", pt.motion.period);
        read_opt(m, "phase", pt.motion.phase);
      }
      scene.points.push_back(pt);
    }
    if (j.contains("occluders")) {
      for (const auto& o : j.at("occluders")) {
        Occluder occ;
        occ.center = vec_from(o.at("center"));
        occ.axis_u = vec_from(o.at("axis_u"));
        occ.axis_v = vec_from(o.at("axis_v"));
        occ.half_u = o.at("half_u").get<double>();
        occ.half_v = o.at("half_v").get<double>();
        scene.occluders.push_back(occ);
      }
    }
    if (scene.poses.size() < 2) throw Error(ErrorCode::kParseError, "scene needs at least 2 poses");
    return scene;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("scene JSON: ") + e.what());
  }
}

nlohmann::json config_to_json(const SceneConfig& c) {
  return {{"frames", c.frames},
          {"static_points", c.static_points},
          {"dynamic_points", c.dynamic_points},
          {"dynamic_px_per_frame", c.dynamic_px_per_frame},
          {"sinusoidal_dynamics", c.sinusoidal_dynamics},
          {"occluders", c.occluders},
          {"width", c.width},
          {"height", c.height},
          {"intrinsics", intrinsics_json(c.intrinsics)},
          {"fps", c.fps},
          {"amplitude_x", c.amplitude_x},
          {"amplitude_y", c.amplitude_y},
          {"period_x", c.period_x},
          {"period_y", c.period_y},
          {"forward_per_frame", c.forward_per_frame},
          {"rotation_amplitude", c.rotation_amplitude},
          {"pure_rotation", c.pure_rotation},
          {"box_min", vec_json(c.box_min)},
          {"box_max", vec_json(c.box_max)},
          {"background_depth", c.background_depth}};
}

SceneConfig config_from_json(const nlohmann::json& j) {
  try {
    SceneConfig c;
    read_opt(j, "frames", c.frames);
    read_opt(j, "static_points", c.static_points);
    read_opt(j, "dynamic_points", c.dynamic_points);
    read_opt(j, "dynamic_px_per_frame", c.dynamic_px_per_frame);
    read_opt(j, "sinusoidal_dynamics", c.sinusoidal_dynamics);
    read_opt(j, "occluders", c.occluders);
    read_opt(j, "width", c.width);
    read_opt(j, "height", c.height);
    if (j.contains("intrinsics")) c.intrinsics = intrinsics_from(j.at("intrinsics"));
    read_opt(j, "fps", c.fps);
    read_opt(j, "amplitude_x", c.amplitude_x);
    read_opt(j, "amplitude_y", c.amplitude_y);
    read_opt(j, "period_x", c.period_x);
    read_opt(j, "period_y", c.period_y);
    read_opt(j, "forward_per_frame", c.forward_per_frame);
    read_opt(j, "rotation_amplitude", c.rotation_amplitude);
    read_opt(j, "pure_rotation", c.pure_rotation);
    if (j.contains("box_min")) c.box_min = vec_from(j.at("box_min"));
    if (j.contains("box_max")) c.box_max = vec_from(j.at("box_max"));
    read_opt(j, "background_depth", c.background_depth);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("scene config JSON: ") + e.what());
  }
}

}  // namespace leapvo
