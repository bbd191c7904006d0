#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "leapvo/eval.hpp"
#include "leapvo/image.hpp"
#include "leapvo/synth.hpp"

using namespace leapvo;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "leapvo_cli_test";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LEAPVO_CLI) + " " + args + " > " + (kWork / "stdout.txt").string() + " 2> " +
                          (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workdir {
  Workdir() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

}  // namespace

TEST_CASE("oracle run on the static fixture") {
  Workdir w;
  const fs::path fixture = fs::path(LEAPVO_FIXTURES) / "static30.json";
  const fs::path out = kWork / "run";
  REQUIRE(run_cli("run --scene " + fixture.string() + " --tracker oracle --out " + out.string()) == 0);
  for (const char* name : {"trajectory.txt", "tracks.csv", "timing.csv"}) CHECK(fs::exists(out / name));

  const SceneSpec scene = scene_from_json(nlohmann::json::parse(slurp(fixture)));
  const Trajectory est = read_tum(out / "trajectory.txt");
  CHECK(est.size() == 30);
  CHECK(ate_rmse(est, scene.trajectory()) < 1e-4);

  const std::string tracks = slurp(out / "tracks.csv");
  CHECK(tracks.rfind("id,host_frame,point_id,dynamic_score,mean_uncertainty,kept\n", 0) == 0);
  CHECK(slurp(out / "timing.csv").find("total_ms") != std::string::npos);

  // same seed, same bytes; timing.csv holds wall-clock times
  const fs::path again = kWork / "again";
  REQUIRE(run_cli("run --scene " + fixture.string() + " --tracker oracle --out " + again.string()) == 0);
  CHECK(slurp(out / "trajectory.txt") == slurp(again / "trajectory.txt"));
  CHECK(slurp(out / "tracks.csv") == slurp(again / "tracks.csv"));
}

TEST_CASE("configuration errors exit with 2") {
  Workdir w;
  CHECK(run_cli("run --tracker oracle") == 2);
  CHECK(run_cli("run --scene missing.json --tracker oracle") == 2);
  CHECK(run_cli("run --scene x.json --images y --tracker oracle") == 2);
  CHECK(run_cli("run --scene x.json --set s_ba=1") == 2);
  CHECK(run_cli("run --scene x.json --n-queries many") == 2);
  CHECK(run_cli("bogus") == 2);
  CHECK(run_cli("eval --est nothing.txt --gt nothing.txt") == 2);

  // image mode without intrinsics
  const fs::path frames = kWork / "frames";
  fs::create_directories(frames);
  const GrayImage img = render_noise_texture(64, 48, 1);
  write_png(frames / "0.png", img);
  write_png(frames / "1.png", img);
  CHECK(run_cli("run --images " + frames.string() + " --tracker correlation") == 2);
  CHECK(slurp(kWork / "stderr.txt").find("IntrinsicsMissing") != std::string::npos);
}

TEST_CASE("runtime failures exit with 3") {
  Workdir w;
  const fs::path frames = kWork / "tiny";
  fs::create_directories(frames);
  const GrayImage img = render_noise_texture(8, 8, 2);
  write_png(frames / "0.png", img);
  write_png(frames / "1.png", img);
  std::ofstream(frames / "k.txt") << "250 250 3.5 3.5\n";
  CHECK(run_cli("run --images " + frames.string() + " --intrinsics " + (frames / "k.txt").string() +
                " --tracker correlation --out " + (kWork / "o").string()) == 3);
  CHECK(!slurp(kWork / "stderr.txt").empty());
}

TEST_CASE("eval") {
  Workdir w;
  Trajectory t;
  for (int i = 0; i < 40; ++i) {
    Pose p;
    p.translation = Vec3(0.1 * i, 0.02 * i * i / 40.0, 0);
    p.rotation = so3_exp(Vec3(0, 0.01 * i, 0));
    t.push_back({0.1 * i, p});
  }
  write_tum(kWork / "gt.txt", t);
  REQUIRE(run_cli("eval --est " + (kWork / "gt.txt").string() + " --gt " + (kWork / "gt.txt").string() + " --out " +
                  (kWork / "m.csv").string()) == 0);
  std::istringstream csv(slurp(kWork / "m.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "metric,value");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(std::abs(std::stod(line.substr(line.find(',') + 1))) < 1e-9);
  }
  CHECK(rows == 3);
  CHECK(slurp(kWork / "stdout.txt").find("rpe_rot") != std::string::npos);

  // every other pose 0.1 m off
  Trajectory line_gt, shifted;
  for (int i = 0; i < 20; ++i) {
    Pose p;
    p.translation = Vec3(0.1 * i, 0, 0);
    line_gt.push_back({0.1 * i, p});
    if (i % 2 == 0) p.translation.x() += 0.1;
    shifted.push_back({0.1 * i, p});
  }
  write_tum(kWork / "line.txt", line_gt);
  write_tum(kWork / "shifted.txt", shifted);
  REQUIRE(run_cli("eval --est " + (kWork / "shifted.txt").string() + " --gt " + (kWork / "line.txt").string() +
                  " --out " + (kWork / "s.csv").string()) == 0);
  std::istringstream s(slurp(kWork / "s.csv"));
  std::getline(s, line);
  std::getline(s, line);
  CHECK(std::stod(line.substr(4)) == doctest::Approx(absolute_trajectory_error(shifted, line_gt).rmse).epsilon(1e-9));

  Trajectory late = t;
  for (auto& p : late) p.timestamp += 1000.0;
  write_tum(kWork / "late.txt", late);
  CHECK(run_cli("eval --est " + (kWork / "late.txt").string() + " --gt " + (kWork / "gt.txt").string()) == 2);
  CHECK(slurp(kWork / "stderr.txt").find("AssociationError") != std::string::npos);

  std::ofstream(kWork / "bad.txt") << "0 0 0 0 0 0 0 1\nnot a pose\n";
  CHECK(run_cli("eval --est " + (kWork / "bad.txt").string() + " --gt " + (kWork / "gt.txt").string()) == 2);
}

TEST_CASE("synth") {
  Workdir w;
  const fs::path a = kWork / "a";
  const fs::path b = kWork / "b";
  REQUIRE(run_cli("synth --out " + a.string()) == 0);
  REQUIRE(run_cli("synth --out " + b.string() + " --render") == 0);
  for (const char* name : {"scene.json", "groundtruth.txt", "intrinsics.txt"}) CHECK(fs::exists(a / name));
  CHECK(slurp(a / "scene.json") == slurp(b / "scene.json"));
  CHECK(read_tum(a / "groundtruth.txt").size() == 30);

  int pngs = 0;
  for (const auto& e : fs::directory_iterator(b / "frames")) pngs += e.path().extension() == ".png" ? 1 : 0;
  CHECK(pngs == 30);
  const GrayImage first = read_png(b / "frames" / "000000.png");
  CHECK(first.cols() == 320);
  CHECK(first.rows() == 240);

  REQUIRE(run_cli("synth --out " + (kWork / "c").string() + " --seed 1") == 0);
  CHECK(slurp(a / "scene.json") != slurp(kWork / "c" / "scene.json"));

  std::ofstream(kWork / "bad.json") << R"({"static_points": 3})";
  CHECK(run_cli("synth --config " + (kWork / "bad.json").string() + " --out " + (kWork / "d").string()) == 2);
}

TEST_CASE("rendered scene through the correlation tracker") {
  Workdir w;
  std::ofstream(kWork / "scene.json") << R"({"frames": 4, "static_points": 200})";
  REQUIRE(run_cli("run --scene " + (kWork / "scene.json").string() + " --tracker correlation --n-queries 64 --out " +
                  (kWork / "o").string()) == 0);
  CHECK(read_tum(kWork / "o" / "trajectory.txt").size() == 4);
}
