#include "leapvo/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "leapvo/errors.hpp"

namespace leapvo {

namespace {

constexpr double kMatchRadius = 1.0;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t key(std::uint64_t seed, std::int64_t a, std::int64_t b, std::int64_t c) {
  std::uint64_t h = mix(seed);
  h = mix(h ^ static_cast<std::uint64_t>(a));
  h = mix(h ^ static_cast<std::uint64_t>(b));
  return mix(h ^ static_cast<std::uint64_t>(c));
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

}  // namespace

OracleTracker::OracleTracker(SceneSpec scene, OracleNoise noise, int grid_k, double sigma_floor)
    : scene_(std::move(scene)),
      gt_(render_tracks(scene_)),
      noise_(noise),
      grid_k_(grid_k),
      sigma_floor_(sigma_floor) {}

std::optional<bool> OracleTracker::contaminated(std::int64_t point_id, int host_frame) const {
  auto it = bad_.find({point_id, host_frame});
  if (it == bad_.end()) return std::nullopt;
  return it->second;
}

std::int64_t OracleTracker::match(const Query& q) const {
  if (q.point_id >= 0) {
    if (q.point_id >= static_cast<std::int64_t>(gt_.size()))
      throw Error(ErrorCode::kQueryUnmatched, "unknown scene point " + std::to_string(q.point_id));
    return q.point_id;
  }
  std::int64_t best = -1;
  double best_d = kMatchRadius;
  for (size_t i = 0; i < gt_.size(); ++i) {
    if (gt_.visibility[i][q.frame] < 0.5) continue;
    const double d = (gt_.projections[i].row(q.frame).transpose() - q.pixel).norm();
    if (d <= best_d) {
      best_d = d;
      best = static_cast<std::int64_t>(i);
    }
  }
  if (best < 0)
    throw Error(ErrorCode::kQueryUnmatched, "no visible scene point within 1 px of query in frame " +
                                                std::to_string(q.frame));
  return best;
}

TrackSet OracleTracker::track(int first_frame, int num_frames, const QuerySet& queries) {
  if (first_frame < 0 || num_frames < 1 || first_frame + num_frames > scene_.frames())
    throw Error(ErrorCode::kWindowMismatch, "window exceeds scene frames");
  for (const auto& q : queries) {
    if (q.frame < first_frame || q.frame >= first_frame + num_frames)
      throw Error(ErrorCode::kWindowMismatch, "query frame " + std::to_string(q.frame) + " outside window");
  }

  std::vector<std::int64_t> ids(queries.size());
  for (size_t i = 0; i < queries.size(); ++i) ids[i] = match(queries[i]);

  // contamination: keep earlier decisions, top up new tracks to ceil(p * Q)
  std::vector<bool> bad(queries.size(), false);
  if (noise_.p_bad > 0.0) {
    const auto target = static_cast<size_t>(std::ceil(noise_.p_bad * static_cast<double>(queries.size()) - 1e-9));
    size_t have = 0;
    std::vector<size_t> fresh;
    for (size_t i = 0; i < queries.size(); ++i) {
      auto it = bad_.find({ids[i], queries[i].host_frame});
      if (it != bad_.end()) {
        bad[i] = it->second;
        have += it->second ? 1 : 0;
      } else {
        fresh.push_back(i);
      }
    }
    std::stable_sort(fresh.begin(), fresh.end(), [&](size_t a, size_t b) {
      return key(noise_.seed, ids[a], queries[a].host_frame, -7) <
             key(noise_.seed, ids[b], queries[b].host_frame, -7);
    });
    for (size_t i : fresh) {
      const bool flag = have < target;
      bad[i] = flag;
      have += flag ? 1 : 0;
      bad_[{ids[i], queries[i].host_frame}] = flag;
    }
  }

  TrackSet out;
  out.first_frame = first_frame;
  out.num_frames = num_frames;
  out.tracks.reserve(queries.size());
  for (size_t i = 0; i < queries.size(); ++i) {
    const Query& q = queries[i];
    const auto pid = static_cast<size_t>(ids[i]);
    const double sigma = bad[i] ? noise_.sigma_bad : noise_.sigma_px;
    Track t;
    t.query = q;
    t.query.point_id = ids[i];
    t.dynamic_label = gt_.dynamic[pid];
    t.xy.resize(num_frames, 2);
    t.visibility.resize(num_frames);
    Eigen::MatrixXd fa = Eigen::MatrixXd::Zero(num_frames, num_frames);
    Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(num_frames, num_frames);
    for (int s = 0; s < num_frames; ++s) {
      const int frame = first_frame + s;
      const Vec2 proj = gt_.projections[pid].row(frame).transpose();
      const std::uint64_t h = key(noise_.seed, ids[i], q.host_frame, frame);
      if (frame == q.frame) {
        t.xy.row(s) = q.pixel.transpose();
      } else if (!proj.allFinite()) {
        t.xy.row(s) = q.pixel.transpose();
      } else {
        std::mt19937_64 rng(h);
        std::normal_distribution<double> n01(0.0, 1.0);
        const double nx = n01(rng);
        const double ny = n01(rng);
        t.xy.row(s) = (proj + sigma * Vec2(nx, ny)).transpose();
      }
      double vis = gt_.visibility[pid][frame];
      if (!noise_.respect_occlusion && proj.allFinite()) {
        vis = (proj.x() >= 0.0 && proj.y() >= 0.0 && proj.x() <= scene_.width - 1.0 &&
               proj.y() <= scene_.height - 1.0 && gt_.depth[pid][frame] > kMinProjectedDepth)
                  ? 1.0
                  : 0.0;
      }
      t.visibility[s] = frame == q.frame ? 1.0 : vis;
      // the scale tracks the injected noise level, with mild per-point spread
      const double level = sigma * (1.0 + 0.2 * unit(mix(h ^ 0x5555)));
      fa(s, s) = level;
      fb(s, s) = level;
    }
    t.distribution = make_distribution(t.xy, fa, fb, sigma_floor_);
    out.tracks.push_back(std::move(t));
  }
  return out;
}

QuerySet OracleTracker::keypoints(int frame, int n) {
  if (frame < 0 || frame >= scene_.frames()) throw Error(ErrorCode::kWindowMismatch, "frame outside scene");
  const int k = std::max(1, grid_k_);
  std::vector<std::vector<size_t>> cells(static_cast<size_t>(k * k));
  for (size_t i = 0; i < gt_.size(); ++i) {
    if (gt_.visibility[i][frame] < 0.5) continue;
    const Vec2 p = gt_.projections[i].row(frame).transpose();
    const int cx = std::clamp(static_cast<int>(p.x() * k / scene_.width), 0, k - 1);
    const int cy = std::clamp(static_cast<int>(p.y() * k / scene_.height), 0, k - 1);
    cells[static_cast<size_t>(cy * k + cx)].push_back(i);
  }
  auto order = [&](size_t a, size_t b) {
    return key(noise_.seed, static_cast<std::int64_t>(a), frame, -3) <
           key(noise_.seed, static_cast<std::int64_t>(b), frame, -3);
  };
  for (auto& c : cells) std::sort(c.begin(), c.end(), order);

  // round-robin over cells keeps the selection spread over the image
  QuerySet out;
  size_t round = 0;
  bool any = true;
  while (static_cast<int>(out.size()) < n && any) {
    any = false;
    for (auto& c : cells) {
      if (round < c.size()) {
        any = true;
        const size_t i = c[round];
        Query q;
        q.frame = frame;
        q.host_frame = frame;
        q.point_id = static_cast<std::int64_t>(i);
        q.pixel = gt_.projections[i].row(frame).transpose();
        out.push_back(q);
        if (static_cast<int>(out.size()) == n) break;
      }
    }
    ++round;
  }
  return out;
}

TrackSet oracle_track(const SceneSpec& scene, const QuerySet& queries, const OracleNoise& noise) {
  OracleTracker tracker(scene, noise);
  return tracker.track(0, scene.frames(), queries);
}

}  // namespace leapvo
