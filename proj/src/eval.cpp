#include "leapvo/eval.hpp"

#include <Eigen/SVD>
#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "leapvo/errors.hpp"

namespace leapvo {

namespace {

Trajectory sorted(const Trajectory& traj) {
  Trajectory out = traj;
  std::stable_sort(out.begin(), out.end(),
                   [](const StampedPose& a, const StampedPose& b) { return a.timestamp < b.timestamp; });
  for (size_t i = 1; i < out.size(); ++i) {
    if (!(out[i].timestamp > out[i - 1].timestamp))
      throw Error(ErrorCode::kInvalidArgument, "trajectory timestamps must be strictly increasing");
  }
  return out;
}

Eigen::Matrix3Xd to_matrix(const std::vector<Vec3>& pts) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = pts[i];
  return m;
}

}  // namespace

Similarity umeyama_align(const std::vector<Vec3>& est, const std::vector<Vec3>& gt, bool with_scale) {
  if (est.size() != gt.size() || est.empty())
    throw Error(ErrorCode::kInvalidArgument, "umeyama_align: point sets must be equal-sized and non-empty");
  const Eigen::Matrix3Xd src = to_matrix(est);
  const Eigen::Matrix3Xd dst = to_matrix(gt);
  const Vec3 src_mean = src.rowwise().mean();
  const Vec3 dst_mean = dst.rowwise().mean();

  Similarity s;
  // rank of the centred cloud: fewer than 3 non-collinear points cannot fix a rotation
  const Eigen::Matrix3Xd centred = src.colwise() - src_mean;
  Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centred);
  const Vec3 sv = svd.singularValues();
  const bool collinear = est.size() < 3 || sv[1] <= 1e-9 * std::max(1.0, sv[0]);
  if (collinear) {
    s.degenerate = true;
    s.translation = dst_mean - src_mean;
    return s;
  }
  const Mat4 m = Eigen::umeyama(src, dst, with_scale);
  s.scale = with_scale ? std::cbrt(m.topLeftCorner<3, 3>().determinant()) : 1.0;
  s.rotation = m.topLeftCorner<3, 3>() / s.scale;
  s.translation = m.topRightCorner<3, 1>();
  return s;
}

std::vector<std::pair<size_t, size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                 double tolerance) {
  std::vector<std::pair<size_t, size_t>> pairs;
  pairs.reserve(est.size());
  for (size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].timestamp;
    auto it = std::lower_bound(gt.begin(), gt.end(), t,
                               [](const StampedPose& p, double v) { return p.timestamp < v; });
    size_t best = gt.size();
    double best_dt = tolerance;
    for (auto cand : {it, it == gt.begin() ? gt.end() : std::prev(it)}) {
      if (cand == gt.end()) continue;
      const double dt = std::abs(cand->timestamp - t);
      if (dt <= best_dt) {
        best_dt = dt;
        best = static_cast<size_t>(cand - gt.begin());
      }
    }
    if (best == gt.size()) {
      std::ostringstream msg;
      msg << "no ground-truth pose within " << tolerance << " s of timestamp " << t;
      throw Error(ErrorCode::kAssociationError, msg.str());
    }
    pairs.emplace_back(i, best);
  }
  return pairs;
}

AteResult absolute_trajectory_error(const Trajectory& est_in, const Trajectory& gt_in, bool with_scale) {
  const Trajectory est = sorted(est_in);
  const Trajectory gt = sorted(gt_in);
  if (est.size() < 2 || gt.size() < 2)
    throw Error(ErrorCode::kInvalidArgument, "ATE needs at least two poses");
  const auto pairs = associate(est, gt);
  std::vector<Vec3> a;
  std::vector<Vec3> b;
  for (auto [i, j] : pairs) {
    a.push_back(est[i].pose.translation);
    b.push_back(gt[j].pose.translation);
  }
  AteResult r;
  r.alignment = umeyama_align(a, b, with_scale);
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += (r.alignment.apply(a[i]) - b[i]).squaredNorm();
  r.rmse = std::sqrt(sum / static_cast<double>(a.size()));
  r.matched = a.size();
  return r;
}

double ate_rmse(const Trajectory& est, const Trajectory& gt) {
  return absolute_trajectory_error(est, gt, true).rmse;
}

namespace {

Pose interpolate(const Pose& a, const Pose& b, double f) {
  const Eigen::Quaterniond qa(a.rotation);
  const Eigen::Quaterniond qb(b.rotation);
  return {qa.slerp(f, qb).toRotationMatrix(), (1.0 - f) * a.translation + f * b.translation};
}

}  // namespace

RpeResult rpe(const Trajectory& est_in, const Trajectory& gt_in, double delta) {
  if (!(delta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "RPE delta must be positive");
  const Trajectory est = sorted(est_in);
  const Trajectory gt_all = sorted(gt_in);
  const auto pairs = associate(est, gt_all);
  std::vector<Pose> e;
  std::vector<Pose> g;
  for (auto [i, j] : pairs) {
    e.push_back(est[i].pose);
    g.push_back(gt_all[j].pose);
  }
  const size_t n = g.size();
  std::vector<double> arc(n, 0.0);
  for (size_t i = 1; i < n; ++i)
    arc[i] = arc[i - 1] + (g[i].translation - g[i - 1].translation).norm();

  RpeResult r;
  for (size_t i = 0; i < n; ++i) {
    const double target = arc[i] + delta;
    if (target > arc[n - 1] + 1e-12) break;
    auto it = std::lower_bound(arc.begin() + static_cast<std::ptrdiff_t>(i), arc.end(), target - 1e-12);
    auto k = static_cast<size_t>(it - arc.begin());
    Pose gj;
    Pose ej;
    if (k == 0 || std::abs(arc[k] - target) <= 1e-12) {
      gj = g[k];
      ej = e[k];
    } else {
      const double span = arc[k] - arc[k - 1];
      const double f = span > 0.0 ? (target - arc[k - 1]) / span : 1.0;
      gj = interpolate(g[k - 1], g[k], f);
      ej = interpolate(e[k - 1], e[k], f);
    }
    const Pose rel_gt = inverse(g[i]) * gj;
    const Pose rel_est = inverse(e[i]) * ej;
    const Pose err = inverse(rel_gt) * rel_est;
    r.translation += err.translation.norm() / delta;
    r.rotation += rotation_angle(err.rotation) * 180.0 / std::numbers::pi / delta;
    ++r.pairs;
  }
  if (r.pairs == 0)
    throw Error(ErrorCode::kPathTooShort, "ground-truth path shorter than RPE delta");
  r.translation /= static_cast<double>(r.pairs);
  r.rotation /= static_cast<double>(r.pairs);
  return r;
}

Trajectory transform(const Trajectory& traj, const Similarity& s) {
  Trajectory out = traj;
  for (auto& p : out) p.pose = s.apply(p.pose);
  return out;
}

double trajectory_extent(const Trajectory& traj) {
  if (traj.empty()) return 0.0;
  Vec3 lo = traj.front().pose.translation;
  Vec3 hi = lo;
  for (const auto& p : traj) {
    lo = lo.cwiseMin(p.pose.translation);
    hi = hi.cwiseMax(p.pose.translation);
  }
  return (hi - lo).norm();
}

std::string format_double(double v) {
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, end};
}

namespace {

std::string format_timestamp(double t) {
  std::string s = format_double(t);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

Trajectory read_tum(std::istream& in, const std::string& source, std::vector<std::string>* warnings) {
  Trajectory traj;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double v[8];
    for (double& x : v) {
      if (!(ls >> x))
        throw Error(ErrorCode::kParseError,
                    source + ": line " + std::to_string(line_no) + ": expected 8 numbers");
    }
    std::string extra;
    if (ls >> extra)
      throw Error(ErrorCode::kParseError,
                  source + ": line " + std::to_string(line_no) + ": trailing token '" + extra + "'");
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    const double norm = q.norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw Error(ErrorCode::kParseError, source + ": line " + std::to_string(line_no) + ": zero quaternion");
    if (std::abs(norm - 1.0) > 1e-6 && warnings != nullptr)
      warnings->push_back(source + ": line " + std::to_string(line_no) +
                          ": NonNormalizedQuaternion (renormalized)");
    q.normalize();
    traj.push_back({v[0], Pose{q.toRotationMatrix(), Vec3(v[1], v[2], v[3])}});
  }
  return traj;
}

Trajectory read_tum(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParseError, "cannot open " + path.string());
  return read_tum(in, path.string(), warnings);
}

void write_tum(std::ostream& out, const Trajectory& traj) {
  for (const auto& p : traj) {
    Eigen::Quaterniond q(p.pose.rotation);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Vec3& t = p.pose.translation;
    out << format_timestamp(p.timestamp) << ' ' << format_double(t.x()) << ' '
        << format_double(t.y()) << ' ' << format_double(t.z()) << ' ' << format_double(q.x())
        << ' ' << format_double(q.y()) << ' ' << format_double(q.z()) << ' '
        << format_double(q.w()) << '\n';
  }
}

void write_tum(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  write_tum(out, traj);
}

}  // namespace leapvo
