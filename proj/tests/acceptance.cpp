// Acceptance checks: one PASS/FAIL line per criterion, exit status 0 only when all pass.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "leapvo/ba.hpp"
#include "leapvo/dynfilter.hpp"
#include "leapvo/eval.hpp"
#include "leapvo/pipeline.hpp"
#include "leapvo/probmodel.hpp"
#include "leapvo/sampling.hpp"
#include "leapvo/synth.hpp"
#include "leapvo/tracker.hpp"

using namespace leapvo;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

MatrixXd random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-2, std::max(std::abs(a), std::abs(b))); }

// ---------------------------------------------------------------------------

Outcome probability_core() {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> len(2, 12);
  double worst_pdf = 0, worst_grad = 0;
  int cholesky_failures = 0;
  auto spd_ok = [&](const MatrixXd& m) {
    if (Eigen::LLT<MatrixXd>(m).info() != Eigen::Success) ++cholesky_failures;
  };
  for (int trial = 0; trial < 100; ++trial) {
    const int s = len(rng);
    const MatrixXd f = random_matrix(s, 1 + trial % 6, rng);
    const MatrixXd sigma = build_scale_matrix(f, kDefaultSigmaFloor);
    spd_ok(sigma);
    const VectorXd mu = random_matrix(s, 1, rng, 5.0);
    const VectorXd a = mu + random_matrix(s, 1, rng, 2.0);
    const VectorXd r = a - mu;
    const double ds = s;
    const double dense = std::lgamma((1 + ds) / 2) - std::lgamma(0.5) - ds / 2 * std::log(std::numbers::pi) -
                         0.5 * std::log(sigma.determinant()) -
                         (1 + ds) / 2 * std::log(1 + r.dot(sigma.inverse() * r));
    worst_pdf = std::max(worst_pdf, std::abs(cauchy_logpdf(a, mu, sigma) - dense));
  }

  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const int s = 8;
    const Eigen::MatrixX2d truth = random_matrix(s, 2, rng, 20.0);
    std::vector<RefinementIterate> its;
    std::vector<MatrixXd> fa, fb;
    for (int k = 0; k < 4; ++k) {
      fa.push_back(random_matrix(s, 4, rng));
      fb.push_back(random_matrix(s, 4, rng));
      its.push_back({truth + random_matrix(s, 2, rng, 1.5), build_scale_matrix(fa.back(), 0.05),
                     build_scale_matrix(fb.back(), 0.05)});
      spd_ok(its.back().sigma_a);
      spd_ok(its.back().sigma_b);
    }
    std::vector<TrackNllGradient> grads;
    main_loss(its, truth, kIterateDecay, &grads);
    for (int k = 0; k < 4; ++k) {
      for (int i = 0; i < s; ++i)
        for (int c = 0; c < 2; ++c) {
          auto p = its, m = its;
          p[k].trajectory(i, c) += h;
          m[k].trajectory(i, c) -= h;
          worst_grad = std::max(worst_grad, rel_err(grads[k].d_trajectory(i, c),
                                                    (main_loss(p, truth) - main_loss(m, truth)) / (2 * h)));
        }
      // per-iterate gradients already carry the decay weight
      const MatrixXd dfa = scale_matrix_feature_gradient(grads[k].d_sigma_a, fa[k]);
      for (int i = 0; i < s; ++i)
        for (int d = 0; d < 4; ++d) {
          auto p = its, m = its;
          MatrixXd fp = fa[k], fm = fa[k];
          fp(i, d) += h;
          fm(i, d) -= h;
          p[k].sigma_a = build_scale_matrix(fp, 0.05);
          m[k].sigma_a = build_scale_matrix(fm, 0.05);
          worst_grad = std::max(worst_grad, rel_err(dfa(i, d), (main_loss(p, truth) - main_loss(m, truth)) / (2 * h)));
        }
    }
    TrackNllGradient g;
    track_nll(its[0].trajectory, truth, its[0].sigma_a, its[0].sigma_b, &g);
    for (int i = 0; i < s; ++i) {
      auto p = its[0].trajectory, m = its[0].trajectory;
      p(i, 0) += h;
      m(i, 0) -= h;
      const double fd = (track_nll(p, truth, its[0].sigma_a, its[0].sigma_b) -
                         track_nll(m, truth, its[0].sigma_a, its[0].sigma_b)) /
                        (2 * h);
      worst_grad = std::max(worst_grad, rel_err(g.d_trajectory(i, 0), fd));
    }

    std::uniform_real_distribution<double> u(0.05, 0.95);
    VectorXd pred(10), gt(10), grad;
    for (int i = 0; i < 10; ++i) {
      pred[i] = u(rng);
      gt[i] = (i + trial) % 2;
    }
    bce_loss(pred, gt, &grad);
    for (int i = 0; i < 10; ++i) {
      VectorXd p = pred, m = pred;
      p[i] += 1e-7;
      m[i] -= 1e-7;
      worst_grad = std::max(worst_grad, rel_err(grad[i], (bce_loss(p, gt) - bce_loss(m, gt)) / 2e-7));
    }
  }
  Outcome o;
  o.pass = worst_pdf < 1e-10 && worst_grad < 1e-4 && cholesky_failures == 0;
  o.detail = "logpdf err " + fmt("%.2e", worst_pdf) + ", gradient rel err " + fmt("%.2e", worst_grad) +
             ", Cholesky failures " + std::to_string(cholesky_failures);
  return o;
}

// ---------------------------------------------------------------------------

Outcome sampling() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> dim(32, 96);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  int mismatches = 0, bad_cells = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int hgt = dim(rng), wid = dim(rng);
    GradientMap map;
    map.magnitude = GrayImage(hgt, wid);
    for (int y = 0; y < hgt; ++y)
      for (int x = 0; x < wid; ++x) map.magnitude(y, x) = trial % 2 ? std::floor(u(rng) / 40.0) : u(rng);
    map.source_width = wid;
    map.source_height = hgt;
    const QuerySet q = grid_max_sample(map, 8, 64);

    std::set<std::pair<int, int>> cells;
    for (const auto& p : q) {
      const int x = static_cast<int>(p.pixel.x()), y = static_cast<int>(p.pixel.y());
      for (int gy = 0; gy < 8; ++gy)
        for (int gx = 0; gx < 8; ++gx)
          if (x >= gx * wid / 8 && x < (gx + 1) * wid / 8 && y >= gy * hgt / 8 && y < (gy + 1) * hgt / 8)
            cells.insert({gx, gy});
    }
    if (q.size() != 64 || cells.size() != 64) ++bad_cells;

    // exhaustive per-cell maximum, first in row-major order on ties
    size_t i = 0;
    for (int gy = 0; gy < 8; ++gy)
      for (int gx = 0; gx < 8; ++gx, ++i) {
        int bx = -1, by = -1;
        double best = -1;
        for (int y = gy * hgt / 8; y < (gy + 1) * hgt / 8; ++y)
          for (int x = gx * wid / 8; x < (gx + 1) * wid / 8; ++x)
            if (map.magnitude(y, x) > best) {
              best = map.magnitude(y, x);
              bx = x;
              by = y;
            }
        if (i >= q.size() || q[i].pixel != Vec2(bx, by)) ++mismatches;
      }
  }
  return {mismatches == 0 && bad_cells == 0,
          "maps with a wrong cell count " + std::to_string(bad_cells) + ", oracle mismatches " +
              std::to_string(mismatches) + " over 50 maps"};
}

// ---------------------------------------------------------------------------

BAProblem window_problem(std::uint64_t seed, SceneSpec& scene) {
  SceneConfig c;
  c.frames = 15;
  scene = generate_scene(c, seed);
  const GroundTruthTracks gt = render_tracks(scene);
  BAProblem p;
  p.intrinsics = scene.intrinsics;
  p.poses = scene.poses;
  p.fixed = {0, 1};
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> n(0, 1);
  for (size_t i = 0; i < gt.size() && p.landmarks.size() < 256; ++i) {
    const int host = static_cast<int>(i % 15);
    if (gt.visibility[i][host] < 0.5) continue;
    const int idx = static_cast<int>(p.landmarks.size());
    p.landmarks.push_back({host, gt.projections[i].row(host).transpose(), gt.depth[i][host] * (1 + 0.05 * n(rng))});
    for (int j = 0; j < 15; ++j)
      if (j != host && gt.visibility[i][j] > 0.5)
        p.observations.push_back({host, j, idx, gt.projections[i].row(j).transpose(), 1.0});
  }
  for (int f = 2; f < 15; ++f) {
    Twist d;
    for (int k = 0; k < 6; ++k) d[k] = 0.01 * n(rng);
    p.poses[static_cast<size_t>(f)] = se3_exp(d) * p.poses[static_cast<size_t>(f)];
  }
  return p;
}

VectorXd dense_step(const BAProblem& p, double lambda) {
  const std::vector<int> slots = p.pose_slots();
  int free = 0;
  for (int s : slots) free += s >= 0 ? 1 : 0;
  const int nc = 6 * free;
  const int n = nc + static_cast<int>(p.landmarks.size());
  MatrixXd hm = MatrixXd::Zero(n, n);
  VectorXd g = VectorXd::Zero(n);
  for (const auto& o : p.observations) {
    const Landmark& l = p.landmarks[static_cast<size_t>(o.landmark)];
    ReprojectionJacobians jac;
    const Reprojection r = reproject(p.poses[static_cast<size_t>(o.host)], p.poses[static_cast<size_t>(o.target)],
                                     p.intrinsics, l.pixel, l.depth, &jac);
    if (!r.in_front || o.weight <= 0) continue;
    MatrixXd j = MatrixXd::Zero(2, n);
    if (slots[static_cast<size_t>(o.host)] >= 0) j.block(0, 6 * slots[static_cast<size_t>(o.host)], 2, 6) = jac.d_host;
    if (slots[static_cast<size_t>(o.target)] >= 0)
      j.block(0, 6 * slots[static_cast<size_t>(o.target)], 2, 6) = jac.d_target;
    j.col(nc + o.landmark) = jac.d_depth;
    const Vec2 res = r.pixel - o.measurement;
    const double rn = res.norm();
    const double w = o.weight * (rn <= p.huber_delta ? 1.0 : p.huber_delta / rn);
    hm += w * j.transpose() * j;
    g -= w * j.transpose() * res;
  }
  hm.diagonal().array() += lambda;
  return hm.ldlt().solve(g);
}

Outcome bundle_adjustment() {
  SceneSpec scene;
  BAProblem p = window_problem(1, scene);

  const BAIncrement inc = schur_solve(linearize(p), 1e-4);
  const VectorXd dense = dense_step(p, 1e-4);
  VectorXd schur(inc.poses.size() + inc.depths.size());
  schur << inc.poses, inc.depths;
  const double diff = (schur - dense).cwiseAbs().maxCoeff();

  BAOptions options;
  options.iterations = 4;
  const BAReport report = ba_optimize(p, options);
  double rot = 0, trans = 0;
  for (size_t i = 0; i < p.poses.size(); ++i) {
    rot = std::max(rot, rotation_angle((inverse(scene.poses[i]) * p.poses[i]).rotation));
    trans = std::max(trans, (p.poses[i].translation - scene.poses[i].translation).norm());
  }
  const double extent = (scene.poses.back().translation - scene.poses.front().translation).norm();
  return {rot < 1e-5 && trans < 1e-5 * extent && diff < 1e-8 && report.accepted + report.rejected <= 4,
          std::to_string(p.landmarks.size()) + " tracks, " + std::to_string(report.accepted) + " GN steps, rot err " +
              fmt("%.2e", rot) + " rad, rel trans err " + fmt("%.2e", trans / extent) + ", Schur vs dense " +
              fmt("%.2e", diff)};
}

// ---------------------------------------------------------------------------

Outcome end_to_end_static() {
  double ratio = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SceneSpec scene = generate_scene({}, seed);
    VoConfig c;
    c.sigma_px = 0.25;
    c.seed = seed;
    const Trajectory gt = scene.trajectory();
    ratio += ate_rmse(run_sequence(scene, c).trajectory, gt) / trajectory_extent(gt) / 5.0;
  }
  return {ratio < 0.005, "mean ATE / extent " + fmt("%.2e", ratio) + " (limit 5e-3)"};
}

// ---------------------------------------------------------------------------

Outcome filtering_ablation() {
  std::vector<double> dyn_on, dyn_off, unc_on, unc_off;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SceneConfig sc;
    sc.static_points = 350;
    sc.dynamic_points = 150;
    const SceneSpec scene = generate_scene(sc, seed);
    VoConfig on;
    on.sigma_px = 0.25;
    on.seed = seed;
    VoConfig off = on;
    off.filter.gamma_d = 1.01;
    dyn_on.push_back(ate_rmse(run_sequence(scene, on).trajectory, scene.trajectory()));
    dyn_off.push_back(ate_rmse(run_sequence(scene, off).trajectory, scene.trajectory()));
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SceneSpec scene = generate_scene({}, seed);
    VoConfig on;
    on.sigma_px = 0.25;
    on.p_bad = 0.2;
    on.sigma_bad = 2.0;
    on.filter.gamma_u = 0.8;
    on.seed = seed;
    VoConfig off = on;
    off.filter.gamma_u = 1.0;
    unc_on.push_back(ate_rmse(run_sequence(scene, on).trajectory, scene.trajectory()));
    unc_off.push_back(ate_rmse(run_sequence(scene, off).trajectory, scene.trajectory()));
  }
  const double dyn = 1.0 - median(dyn_on) / median(dyn_off);
  const double unc = 1.0 - median(unc_on) / median(unc_off);
  return {dyn >= 0.3 && unc >= 0.4, "dynamic filtering lowers median ATE by " + fmt("%.1f", 100 * dyn) +
                                        "% (need 30%), uncertainty filtering by " + fmt("%.1f", 100 * unc) +
                                        "% (need 40%)"};
}

// ---------------------------------------------------------------------------

Outcome dynamic_classification() {
  int tp = 0, fp = 0, fn = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SceneConfig c;
    c.frames = 12;
    c.static_points = 350;
    c.dynamic_points = 150;
    c.dynamic_px_per_frame = 2.0;
    const SceneSpec scene = generate_scene(c, seed);
    OracleNoise noise;
    noise.sigma_px = 0.25;
    noise.seed = seed;
    OracleTracker tracker(scene, noise);
    QuerySet q;
    for (int host : {0, 6, 11}) {
      const QuerySet k = tracker.keypoints(host, 256);
      q.insert(q.end(), k.begin(), k.end());
    }
    const TrackSet ts = tracker.track(0, 12, q);
    const DynamicScores s = dynamic_score(ts, ts);
    for (size_t i = 0; i < ts.size(); ++i) {
      const bool pred = s.scores[i] >= 0.9;
      const bool truth = ts.tracks[i].dynamic_label == 1;
      tp += pred && truth;
      fp += pred && !truth;
      fn += !pred && truth;
    }
  }
  const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return {precision >= 0.95 && recall >= 0.9,
          "precision " + fmt("%.3f", precision) + ", recall " + fmt("%.3f", recall) + " at 2 px/frame"};
}

// ---------------------------------------------------------------------------

std::vector<GrayImage> translating(int frames, double vx, double vy, int w, int h, std::uint64_t seed) {
  std::vector<GrayImage> out;
  for (int t = 0; t < frames; ++t) out.push_back(render_noise_texture(w, h, seed, vx * t, vy * t));
  return out;
}

// keypoints of the first frame whose whole constant-velocity path keeps `margin` from the border
QuerySet path_queries(const GrayImage& img, int n, double margin, const Vec2& end_shift) {
  QuerySet out;
  for (const auto& q : sample_keypoints(img, 2, 4, 64, 0)) {
    bool inside = true;
    for (const Vec2& p : {q.pixel, Vec2(q.pixel + end_shift)})
      inside = inside && p.x() >= margin && p.x() <= img.cols() - 1 - margin && p.y() >= margin &&
               p.y() <= img.rows() - 1 - margin;
    if (!inside) continue;
    out.push_back(q);
    if (static_cast<int>(out.size()) == n) break;
  }
  return out;
}

Outcome correlation_tracker() {
  double integer = 0, subpixel = 0, jump = 0;
  int chained = 0;
  for (auto [vx, vy] : {std::pair{2.0, 1.0}, std::pair{-1.0, 3.0}, std::pair{0.0, -2.0}}) {
    const auto images = translating(6, vx, vy, 160, 120, 31);
    for (const auto& t : correlation_track(images, path_queries(images[0], 10, 30, 5 * Vec2(vx, vy)), 6).tracks)
      for (int s = 0; s < 6; ++s)
        integer = std::max(integer, (t.xy.row(s).transpose() - (t.query.pixel + s * Vec2(vx, vy))).norm());
  }
  for (auto [vx, vy] : {std::pair{0.4, 0.7}, std::pair{1.3, -0.6}, std::pair{-0.25, 0.5}}) {
    const auto images = translating(6, vx, vy, 160, 120, 32);
    for (const auto& t : correlation_track(images, path_queries(images[0], 10, 30, 5 * Vec2(vx, vy)), 6).tracks)
      for (int s = 0; s < 6; ++s)
        subpixel = std::max(subpixel, (t.xy.row(s).transpose() - (t.query.pixel + s * Vec2(vx, vy))).norm());
  }
  {
    const Vec2 v(2.0, 0.5);
    const auto images = translating(12, v.x(), v.y(), 200, 140, 33);
    CorrelationTracker tracker(images);
    const TrackSet ts = chain_windows(tracker, 0, 12, path_queries(images[0], 10, 30, 11 * v), 8);
    chained = static_cast<int>(ts.size());
    for (const auto& t : ts.tracks)
      for (int s = 1; s < 12; ++s) jump = std::max(jump, (t.xy.row(s) - t.xy.row(s - 1) - v.transpose()).norm());
  }
  return {integer < 1e-6 && subpixel < 0.5 && jump < 0.5 && chained >= 5,
          "integer err " + fmt("%.1e", integer) + " px, subpixel err " + fmt("%.3f", subpixel) +
              " px, largest step deviation over 12 chained frames " + fmt("%.3f", jump) + " px (" +
              std::to_string(chained) + " tracks)"};
}

// ---------------------------------------------------------------------------

Outcome metrics() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  Trajectory gt;
  Pose p;
  for (int i = 0; i < 80; ++i) {
    Twist xi;
    xi << 0.05 * u(rng), 0.05 * u(rng), 0.05 * u(rng), 0.2 + 0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng);
    p = p * se3_exp(xi);
    gt.push_back({0.1 * i, p});
  }
  double ate = 0, rpe_diff = 0, tum = 0;
  const RpeResult base = rpe(gt, gt, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Similarity g;
    g.rotation = so3_exp(Vec3(u(rng), u(rng), u(rng)) * 3.0);
    g.translation = Vec3(u(rng), u(rng), u(rng)) * 10.0;
    g.scale = std::exp(2.0 * u(rng));
    ate = std::max(ate, ate_rmse(transform(gt, g), gt));
    g.scale = 1.0;
    Trajectory est = gt;
    for (size_t i = 0; i < est.size(); ++i) {
      Twist xi;
      xi << 0.01 * u(rng), 0.01 * u(rng), 0.01 * u(rng), 0.02 * u(rng), 0.02 * u(rng), 0.02 * u(rng);
      est[i].pose = est[i].pose * se3_exp(xi);
    }
    const RpeResult a = rpe(est, gt, 1.0);
    const RpeResult b = rpe(transform(est, g), gt, 1.0);
    rpe_diff = std::max({rpe_diff, std::abs(a.translation - b.translation), std::abs(a.rotation - b.rotation)});
  }
  rpe_diff = std::max({rpe_diff, base.translation, base.rotation});
  std::stringstream ss;
  write_tum(ss, gt);
  const Trajectory back = read_tum(ss);
  for (size_t i = 0; i < gt.size(); ++i)
    tum = std::max({tum, std::abs(back[i].timestamp - gt[i].timestamp),
                    (back[i].pose.matrix() - gt[i].pose.matrix()).cwiseAbs().maxCoeff()});
  if (back.size() != gt.size()) tum = 1.0;
  return {ate < 1e-9 && rpe_diff < 1e-9 && tum < 1e-9,
          "ATE under similarity " + fmt("%.1e", ate) + ", RPE change under rigid motion " + fmt("%.1e", rpe_diff) +
              ", TUM round trip " + fmt("%.1e", tum)};
}

}  // namespace

// optional arguments select criteria by number
int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::tuple<int, std::string, std::function<Outcome()>, double>> criteria = {
      {1, "probability core", probability_core, 5.0},
      {2, "grid sampling", sampling, 1.0},
      {3, "bundle adjustment", bundle_adjustment, 10.0},
      {4, "end-to-end static", end_to_end_static, 60.0},
      {5, "filtering ablation", filtering_ablation, 0.0},
      {6, "dynamic classification", dynamic_classification, 0.0},
      {7, "correlation tracker", correlation_tracker, 0.0},
      {8, "trajectory metrics", metrics, 0.0},
  };
  int failed = 0, run = 0;
  for (const auto& [id, name, check, budget] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    ++run;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt("%.2f s", secs);
    if (budget > 0) {
      timing += " (budget " + fmt("%.0f", budget) + " s)";
      if (secs >= budget) o.pass = false;
    }
    std::printf("criterion %d %s: %s | %s | %s\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %d criteria passed\n", run - failed, run);
  return failed == 0 ? 0 : 1;
}
