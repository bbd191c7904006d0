#include "leapvo/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "leapvo/errors.hpp"

namespace leapvo {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

double median(std::vector<double> v) {
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  return m;
}

}  // namespace

CorrelationConfig correlation_config(const VoConfig& config) {
  CorrelationConfig c;
  c.iterations = config.k;
  c.grid_k = config.grid_k;
  c.seed = config.seed;
  return c;
}

OracleNoise oracle_noise(const VoConfig& config) {
  OracleNoise n;
  n.sigma_px = config.sigma_px;
  n.p_bad = config.p_bad;
  n.sigma_bad = config.sigma_bad;
  n.seed = config.seed;
  return n;
}

Pipeline::Pipeline(VoConfig config, Intrinsics intrinsics, PointTracker& tracker)
    : config_(std::move(config)), intrinsics_(intrinsics), tracker_(tracker) {
  config_.validate();
  if (!intrinsics_.valid()) throw Error(ErrorCode::kIntrinsicsMissing, "invalid intrinsics");
}

Trajectory Pipeline::trajectory() const {
  Trajectory out;
  for (size_t i = 0; i < poses_.size(); ++i) out.push_back({timestamps_[i], poses_[i]});
  return out;
}

std::vector<TrackRecord> Pipeline::track_records() const {
  std::vector<TrackRecord> out;
  out.reserve(landmarks_.size());
  for (const auto& l : landmarks_) out.push_back(l.record);
  return out;
}

int Pipeline::active_tracks() const {
  const int t = frames() - 1;
  const int first = t - config_.s_lp + 1;
  return static_cast<int>(std::count_if(landmarks_.begin(), landmarks_.end(),
                                        [&](const LandmarkState& l) { return l.record.host_frame >= first; }));
}

double Pipeline::initial_depth(int frame) const {
  std::vector<double> depths;
  const int first = frame - config_.s_ba + 1;
  for (const auto& l : landmarks_)
    if (l.record.host_frame >= first && l.record.host_frame < frame) depths.push_back(l.record.depth);
  return depths.empty() ? 1.0 : median(std::move(depths));
}

void Pipeline::ingest_frame(double timestamp, const GrayImage* image) {
  const auto start = Clock::now();
  const int t = frames();
  if (!timestamps_.empty() && timestamp <= timestamps_.back())
    throw Error(ErrorCode::kInvalidArgument, "timestamps must increase");

  // constant-velocity prediction
  Pose pose = Pose::Identity();
  if (t >= 2) {
    const Pose& a = poses_[static_cast<size_t>(t - 1)];
    const Pose& b = poses_[static_cast<size_t>(t - 2)];
    pose = a * inverse(b) * a;
    pose.rotation = orthonormalize(pose.rotation);
  } else if (t == 1) {
    pose = poses_[0];
  }
  poses_.push_back(pose);
  timestamps_.push_back(timestamp);

  if (image) tracker_.add_frame(t, *image);

  const double depth = initial_depth(t);
  const QuerySet keypoints = tracker_.keypoints(t, config_.n_queries);
  for (const auto& q : keypoints) {
    LandmarkState l;
    l.record.id = static_cast<int>(landmarks_.size());
    l.record.point_id = q.point_id;
    l.record.host_frame = t;
    l.record.pixel = q.pixel;
    l.record.depth = depth;
    landmarks_.push_back(std::move(l));
  }

  FrameDiagnostics diag;
  diag.frame = t;
  if (t >= 1) {
    track_and_filter(t, diag);
    if (t + 1 == config_.init_frames) bundle_adjust(t, config_.init_k_ba, diag);
    if (t + 1 > config_.init_frames) bundle_adjust(t, config_.k_ba, diag);
  }
  tracker_.drop_frames_before(t + 2 - config_.s_lp);
  diag.total_ms = elapsed_ms(start);
  diagnostics_.push_back(diag);
}

void Pipeline::finish() {
  const int t = frames() - 1;
  if (t < 1 || frames() >= config_.init_frames) return;
  bundle_adjust(t, config_.init_k_ba, diagnostics_.back());
}

void Pipeline::track_and_filter(int t, FrameDiagnostics& diag) {
  auto start = Clock::now();
  const int first = std::max(0, t - config_.s_lp + 1);
  const int count = t - first + 1;

  std::vector<size_t> ids;
  QuerySet queries;
  for (size_t i = 0; i < landmarks_.size(); ++i) {
    const TrackRecord& r = landmarks_[i].record;
    if (r.host_frame < first || landmarks_[i].rejected) continue;
    Query q;
    q.frame = r.host_frame;
    q.host_frame = r.host_frame;
    q.pixel = r.pixel;
    q.point_id = r.point_id;
    queries.push_back(q);
    ids.push_back(i);
  }
  TrackSet tracks = chain_windows(tracker_, first, count, queries, config_.s);
  diag.track_ms = elapsed_ms(start);

  start = Clock::now();
  assign_dynamic_scores(tracks, config_.dynamic);
  // a short window cannot hold gamma_track points per track
  FilterConfig filter = config_.filter;
  filter.gamma_track = std::min(filter.gamma_track, count);
  const ValidityMask mask = filter_tracks(tracks, filter);
  diag.filter_ms = elapsed_ms(start);

  diag.active_tracks = static_cast<int>(tracks.size());
  diag.kept_tracks = mask.kept_tracks();
  diag.dropped_tracks = diag.active_tracks - diag.kept_tracks;
  diag.kept_points = mask.kept_points();
  diag.insufficient_anchors = tracks.insufficient_anchors;

  for (size_t n = 0; n < tracks.size(); ++n) {
    const Track& track = tracks.tracks[n];
    LandmarkState& l = landmarks_[ids[n]];
    const Eigen::VectorXd phi = track.uncertainty();
    double phi_sum = 0.0;
    int phi_count = 0;
    for (int s = 0; s < count; ++s) {
      double w = mask.weights[n][s];
      if (config_.confidence_weighting) w /= 1.0 + phi[s];
      l.measurements[first + s] = {track.xy.row(s).transpose(), w};
      if (track.visibility[s] >= config_.filter.gamma_v) {
        phi_sum += phi[s];
        ++phi_count;
      }
    }
    l.record.dynamic_score = track.dynamic_score;
    l.record.mean_uncertainty = phi_count > 0 ? phi_sum / phi_count : 0.0;
    l.record.kept = mask.alive[n];
    l.record.dynamic_label = track.dynamic_label;
  }
}

void Pipeline::bundle_adjust(int t, int iterations, FrameDiagnostics& diag) {
  const auto start = Clock::now();
  const int b0 = std::max(0, t - config_.s_ba + 1);

  BAProblem problem;
  problem.intrinsics = intrinsics_;
  problem.huber_delta = config_.huber_delta;
  problem.depth_param = DepthParam::kInverseDepth;
  for (int f = b0; f <= t; ++f) problem.poses.push_back(poses_[static_cast<size_t>(f)]);
  problem.fixed = b0 == 0 ? std::vector<int>{0} : std::vector<int>{0, 1};

  std::vector<size_t> members;
  for (size_t i = 0; i < landmarks_.size(); ++i) {
    const LandmarkState& l = landmarks_[i];
    if (l.record.host_frame < b0 || l.rejected) continue;
    const int index = static_cast<int>(problem.landmarks.size());
    bool used = false;
    for (const auto& [frame, m] : l.measurements) {
      if (frame < b0 || frame > t || frame == l.record.host_frame || m.second <= 0.0) continue;
      problem.observations.push_back({l.record.host_frame - b0, frame - b0, index, m.first, m.second});
      used = true;
    }
    if (!used) continue;
    problem.landmarks.push_back({l.record.host_frame - b0, l.record.pixel, l.record.depth});
    members.push_back(i);
  }
  if (problem.observations.empty()) {
    diag.ba_ms = elapsed_ms(start);
    return;
  }

  // while the first frame is in the window, its landmarks carry the scale
  auto reference_depth = [&](const BAProblem& p) {
    std::vector<double> d;
    for (const auto& l : p.landmarks)
      if (l.host == 0 && l.depth < BAOptions{}.max_depth) d.push_back(l.depth);
    return d.empty() ? 0.0 : median(std::move(d));
  };
  const double before = b0 == 0 ? reference_depth(problem) : 0.0;

  BAOptions options;
  options.iterations = iterations;
  options.damping = config_.damping;
  try {
    const BAReport report = ba_optimize(problem, options);
    diag.ba_initial_cost = report.initial_cost;
    diag.ba_final_cost = report.final_cost;
    diag.ba_accepted = report.accepted;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSingularSystem) throw;
    diag.ba_failed = true;
    diag.ba_ms = elapsed_ms(start);
    return;
  }

  double scale = 1.0;
  if (b0 == 0 && before > 0.0) {
    const double after = reference_depth(problem);
    if (after > 0.0) scale = before / after;
  }
  const Vec3 origin = problem.poses[0].translation;
  for (int f = b0; f <= t; ++f) {
    Pose p = problem.poses[static_cast<size_t>(f - b0)];
    if (f != b0 && scale != 1.0) p.translation = origin + scale * (p.translation - origin);
    poses_[static_cast<size_t>(f)] = p;
  }
  std::vector<bool> solved(landmarks_.size(), false);
  for (size_t n = 0; n < members.size(); ++n) {
    LandmarkState& l = landmarks_[members[n]];
    solved[members[n]] = true;
    if (problem.landmarks[n].depth >= options.max_depth) {
      // negative parallax: no static point explains the track
      l.rejected = true;
      l.record.kept = false;
      continue;
    }
    l.record.depth = scale * problem.landmarks[n].depth;
  }
  for (size_t i = 0; i < landmarks_.size(); ++i)
    if (!solved[i] && landmarks_[i].record.host_frame >= b0) landmarks_[i].record.depth *= scale;
  diag.ba_ms = elapsed_ms(start);
}

SequenceResult run_sequence(const SceneSpec& scene, const VoConfig& config) {
  config.validate();
  if (scene.frames() < 2) throw Error(ErrorCode::kSourceEmpty, "a sequence needs at least 2 frames");
  std::unique_ptr<PointTracker> tracker;
  std::vector<GrayImage> images;
  if (config.tracker == "oracle") {
    tracker = std::make_unique<OracleTracker>(scene, oracle_noise(config), config.grid_k);
  } else {
    images = render_images(scene);
    tracker = std::make_unique<CorrelationTracker>(correlation_config(config));
  }
  Pipeline pipeline(config, scene.intrinsics, *tracker);
  for (int f = 0; f < scene.frames(); ++f)
    pipeline.ingest_frame(scene.timestamps[static_cast<size_t>(f)],
                          images.empty() ? nullptr : &images[static_cast<size_t>(f)]);
  pipeline.finish();
  return {pipeline.trajectory(), pipeline.diagnostics(), pipeline.track_records()};
}

SequenceResult run_sequence(const std::filesystem::path& image_dir, const std::optional<Intrinsics>& intrinsics,
                            const VoConfig& config) {
  config.validate();
  if (!intrinsics || !intrinsics->valid())
    throw Error(ErrorCode::kIntrinsicsMissing, "image mode needs camera intrinsics");
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(image_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(image_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  if (files.size() < 2) throw Error(ErrorCode::kSourceEmpty, "fewer than 2 PNG frames in " + image_dir.string());
  std::sort(files.begin(), files.end());

  std::vector<double> stamps;
  if (std::ifstream in(image_dir / "timestamps.txt"); in) {
    double v = 0.0;
    while (in >> v) stamps.push_back(v);
    if (stamps.size() != files.size())
      throw Error(ErrorCode::kParseError, "timestamps.txt does not match the frame count");
  } else {
    for (size_t i = 0; i < files.size(); ++i) stamps.push_back(static_cast<double>(i));
  }

  CorrelationTracker tracker(correlation_config(config));
  Pipeline pipeline(config, *intrinsics, tracker);
  for (size_t i = 0; i < files.size(); ++i) {
    const GrayImage image = read_png(files[i]);
    pipeline.ingest_frame(stamps[i], &image);
  }
  pipeline.finish();
  return {pipeline.trajectory(), pipeline.diagnostics(), pipeline.track_records()};
}

}  // namespace leapvo
