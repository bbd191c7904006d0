#include <doctest.h>

#include <filesystem>

#include "leapvo/errors.hpp"
#include "leapvo/image.hpp"
#include "leapvo/pipeline.hpp"

using namespace leapvo;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

SceneSpec small_scene(int frames, std::uint64_t seed, int dynamic = 0) {
  SceneConfig c;
  c.frames = frames;
  c.static_points = 300;
  c.dynamic_points = dynamic;
  return generate_scene(c, seed);
}

VoConfig small_config() {
  VoConfig c;
  c.n_queries = 128;
  return c;
}

}  // namespace

TEST_CASE("static oracle scene is recovered") {
  const SceneSpec scene = generate_scene({}, 0);
  const SequenceResult r = run_sequence(scene, VoConfig{});
  REQUIRE(r.trajectory.size() == 30);
  CHECK(ate_rmse(r.trajectory, scene.trajectory()) < 1e-4);
  CHECK(r.frames.size() == 30);
  CHECK(r.trajectory.front().pose.translation.norm() == 0.0);
  CHECK((r.trajectory.front().pose.rotation - Mat3::Identity()).norm() == 0.0);
}

TEST_CASE("runs are deterministic") {
  const SceneSpec scene = small_scene(12, 1, 30);
  VoConfig c = small_config();
  c.sigma_px = 0.5;
  c.p_bad = 0.1;
  c.seed = 3;
  const SequenceResult a = run_sequence(scene, c);
  const SequenceResult b = run_sequence(scene, c);
  REQUIRE(a.trajectory.size() == b.trajectory.size());
  for (size_t i = 0; i < a.trajectory.size(); ++i) CHECK(a.trajectory[i].pose.matrix() == b.trajectory[i].pose.matrix());
  REQUIRE(a.tracks.size() == b.tracks.size());
  for (size_t i = 0; i < a.tracks.size(); ++i) {
    CHECK(a.tracks[i].depth == b.tracks[i].depth);
    CHECK(a.tracks[i].dynamic_score == b.tracks[i].dynamic_score);
    CHECK(a.tracks[i].kept == b.tracks[i].kept);
  }
}

TEST_CASE("two-frame sequence") {
  const SceneSpec scene = small_scene(2, 2);
  const SequenceResult r = run_sequence(scene, small_config());
  REQUIRE(r.trajectory.size() == 2);
  CHECK(r.trajectory[1].timestamp == scene.timestamps[1]);
  for (const auto& p : r.trajectory) CHECK(p.pose.matrix().allFinite());
  // direction of the baseline is determined, its length is not
  const Vec3 est = r.trajectory[1].pose.translation - r.trajectory[0].pose.translation;
  const Vec3 gt = scene.poses[1].translation - scene.poses[0].translation;
  CHECK(est.normalized().dot(gt.normalized()) > 0.99);
}

TEST_CASE("source errors") {
  SceneSpec single = small_scene(2, 3);
  single.poses.resize(1);
  single.timestamps.resize(1);
  CHECK(code_of([&] { run_sequence(single, VoConfig{}); }) == ErrorCode::kSourceEmpty);

  const auto dir = std::filesystem::temp_directory_path() / "leapvo_empty_frames";
  std::filesystem::create_directories(dir);
  CHECK(code_of([&] { run_sequence(dir, Intrinsics{250, 250, 159.5, 119.5}, VoConfig{}); }) == ErrorCode::kSourceEmpty);
  CHECK(code_of([&] { run_sequence(dir, std::nullopt, VoConfig{}); }) == ErrorCode::kIntrinsicsMissing);
  CHECK(code_of([&] { run_sequence(dir, Intrinsics{0, 0, 0, 0}, VoConfig{}); }) == ErrorCode::kIntrinsicsMissing);

  VoConfig bad;
  bad.s_ba = 1;
  CHECK(code_of([&] { run_sequence(small_scene(3, 3), bad); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("image directory run") {
  SceneConfig sc;
  sc.frames = 5;
  sc.static_points = 200;
  const SceneSpec scene = generate_scene(sc, 4);
  const auto dir = std::filesystem::temp_directory_path() / "leapvo_frames";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::vector<GrayImage> images = render_images(scene);
  for (size_t i = 0; i < images.size(); ++i) write_png(dir / ("frame_" + std::to_string(i) + ".png"), images[i]);

  VoConfig c = small_config();
  c.n_queries = 64;
  c.tracker = "correlation";
  const SequenceResult r = run_sequence(dir, scene.intrinsics, c);
  REQUIRE(r.trajectory.size() == 5);
  CHECK(r.trajectory[3].timestamp == 3.0);
  for (const auto& p : r.trajectory) CHECK(p.pose.matrix().allFinite());
}

TEST_CASE("window invariants") {
  const SceneSpec scene = small_scene(24, 5, 40);
  VoConfig c = small_config();
  c.sigma_px = 0.3;
  OracleTracker tracker(scene, oracle_noise(c), c.grid_k);
  Pipeline p(c, scene.intrinsics, tracker);
  std::vector<Pose> before;
  for (int f = 0; f < scene.frames(); ++f) {
    p.ingest_frame(scene.timestamps[static_cast<size_t>(f)]);
    CHECK(p.frames() == f + 1);
    CHECK(p.active_tracks() <= c.n_queries * c.s_lp);
    // poses that left the BA window are frozen
    const int frozen = p.frames() - c.s_ba;
    for (int i = 0; i < frozen && i < static_cast<int>(before.size()); ++i)
      CHECK(p.poses()[static_cast<size_t>(i)].matrix() == before[static_cast<size_t>(i)].matrix());
    before = p.poses();
  }
  CHECK(p.diagnostics().size() == 24);
}

TEST_CASE("disabled filtering still runs") {
  const SceneSpec scene = small_scene(16, 6, 60);
  VoConfig c = small_config();
  c.filter = {0.0, 1.01, 1.0, 0};
  c.sigma_px = 0.5;
  c.p_bad = 0.3;
  SequenceResult r;
  CHECK_NOTHROW(r = run_sequence(scene, c));
  CHECK(r.trajectory.size() == 16);
  int kept = 0;
  for (const auto& t : r.tracks) kept += t.kept ? 1 : 0;
  CHECK(kept > 0);
}

TEST_CASE("dynamic filtering lowers trajectory error") {
  for (std::uint64_t seed : {0, 1}) {
    SceneConfig sc;
    sc.frames = 20;
    sc.static_points = 350;
    sc.dynamic_points = 150;
    const SceneSpec scene = generate_scene(sc, seed);
    VoConfig on = small_config();
    on.n_queries = 128;
    on.sigma_px = 0.25;
    on.seed = seed;
    VoConfig off = on;
    off.filter.gamma_d = 1.01;
    const double a = ate_rmse(run_sequence(scene, on).trajectory, scene.trajectory());
    const double b = ate_rmse(run_sequence(scene, off).trajectory, scene.trajectory());
    CHECK(a < b);
  }
}
