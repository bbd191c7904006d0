#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "leapvo/config.hpp"
#include "leapvo/errors.hpp"
#include "leapvo/eval.hpp"
#include "leapvo/pipeline.hpp"
#include "leapvo/synth.hpp"

namespace fs = std::filesystem;
using namespace leapvo;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

bool is_config_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kParseError:
    case ErrorCode::kIntrinsicsMissing:
    case ErrorCode::kSourceEmpty:
    case ErrorCode::kAssociationError:
    case ErrorCode::kInfeasibleScene:
    case ErrorCode::kPathTooShort:
    case ErrorCode::kIoError:
      return true;
    default:
      return false;
  }
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  return out;
}

/// A scene file holds either a generated scene or the config to generate one.
SceneSpec load_scene(const fs::path& path, std::uint64_t seed) {
  const nlohmann::json j = read_json(path);
  if (j.contains("poses")) return scene_from_json(j);
  return generate_scene(config_from_json(j), seed);
}

struct RunArgs {
  std::string config;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
  std::optional<std::uint64_t> seed;
};

int cmd_run(const RunArgs& args) {
  VoConfig config;
  if (!args.config.empty()) config = load_vo_config(args.config);
  for (const auto& [key, value] : args.flags) apply_override(config, key, value);
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "--set expects key=value, got " + kv);
    apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed) config.seed = *args.seed;
  config.validate();
  if (config.out.empty()) config.out = "out";

  if (!config.scene.empty() && !config.images.empty())
    throw Error(ErrorCode::kInvalidArgument, "--scene and --images are mutually exclusive");
  if (config.scene.empty() && config.images.empty())
    throw Error(ErrorCode::kInvalidArgument, "one of --scene or --images is required");
  if (config.tracker == "oracle" && config.scene.empty())
    throw Error(ErrorCode::kInvalidArgument, "the oracle tracker needs --scene");

  SequenceResult result;
  if (!config.scene.empty()) {
    result = run_sequence(load_scene(config.scene, config.seed), config);
  } else {
    std::optional<Intrinsics> k;
    if (!config.intrinsics.empty()) k = read_intrinsics(config.intrinsics);
    result = run_sequence(fs::path(config.images), k, config);
  }

  const fs::path out_dir(config.out);
  fs::create_directories(out_dir);
  for (const auto& input : {config.scene, config.images, config.intrinsics}) {
    if (input.empty() || !fs::exists(input)) continue;
    for (const char* name : {"trajectory.txt", "tracks.csv", "timing.csv"})
      if (fs::exists(out_dir / name) && fs::equivalent(input, out_dir / name))
        throw Error(ErrorCode::kInvalidArgument, "output would overwrite input " + input);
  }

  write_tum(out_dir / "trajectory.txt", result.trajectory);

  auto tracks = open_out(out_dir / "tracks.csv");
  tracks << "id,host_frame,point_id,dynamic_score,mean_uncertainty,kept\n";
  for (const auto& t : result.tracks) {
    tracks << t.id << ',' << t.host_frame << ',' << t.point_id << ',' << format_double(t.dynamic_score) << ','
           << format_double(t.mean_uncertainty) << ',' << (t.kept ? 1 : 0) << '\n';
  }

  auto timing = open_out(out_dir / "timing.csv");
  timing << "frame,active_tracks,kept_tracks,dropped_tracks,ba_failed,track_ms,filter_ms,ba_ms,total_ms\n";
  for (const auto& f : result.frames) {
    timing << f.frame << ',' << f.active_tracks << ',' << f.kept_tracks << ',' << f.dropped_tracks << ','
           << (f.ba_failed ? 1 : 0) << ',' << std::fixed << std::setprecision(3) << f.track_ms << ',' << f.filter_ms
           << ',' << f.ba_ms << ',' << f.total_ms << std::defaultfloat << '\n';
  }

  int failed = 0;
  for (const auto& f : result.frames) failed += f.ba_failed ? 1 : 0;
  std::cout << "frames " << result.trajectory.size() << ", tracks " << result.tracks.size();
  if (failed > 0) std::cout << ", failed BA windows " << failed;
  std::cout << ", output " << out_dir.string() << '\n';
  return 0;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path, double delta, const std::string& out) {
  std::vector<std::string> warnings;
  const Trajectory est = read_tum(fs::path(est_path), &warnings);
  const Trajectory gt = read_tum(fs::path(gt_path), &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

  const AteResult ate = absolute_trajectory_error(est, gt, true);
  // monocular estimates carry an arbitrary scale; relative errors are measured after it is removed
  Similarity scale_only;
  scale_only.scale = ate.alignment.scale;
  const RpeResult r = rpe(transform(est, scale_only), gt, delta);

  const std::vector<std::pair<std::string, double>> rows = {
      {"ate", ate.rmse}, {"rpe_trans", r.translation}, {"rpe_rot", r.rotation}};
  std::cout << std::left << std::setw(12) << "metric" << "value\n";
  for (const auto& [name, value] : rows) std::cout << std::setw(12) << name << format_double(value) << '\n';
  if (!out.empty()) {
    const fs::path path(out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    auto csv = open_out(path);
    csv << "metric,value\n";
    for (const auto& [name, value] : rows) csv << name << ',' << format_double(value) << '\n';
  }
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out, bool render, std::uint64_t seed) {
  SceneConfig config;
  if (!config_path.empty()) config = config_from_json(read_json(config_path));
  const SceneSpec scene = generate_scene(config, seed);

  const fs::path dir(out);
  fs::create_directories(dir);
  open_out(dir / "scene.json") << scene_to_json(scene).dump(2) << '\n';
  write_tum(dir / "groundtruth.txt", scene.trajectory());
  write_intrinsics(dir / "intrinsics.txt", scene.intrinsics);
  if (render) {
    const fs::path frames = dir / "frames";
    fs::create_directories(frames);
    const std::vector<GrayImage> images = render_images(scene);
    auto stamps = open_out(frames / "timestamps.txt");
    for (size_t i = 0; i < images.size(); ++i) {
      std::ostringstream name;
      name << std::setw(6) << std::setfill('0') << i << ".png";
      write_png(frames / name.str(), images[i]);
      stamps << format_double(scene.timestamps[i]) << '\n';
    }
  }
  std::cout << "scene with " << scene.frames() << " frames and " << scene.points.size() << " points written to "
            << dir.string() << '\n';
  return 0;
}

std::string flag_name(std::string key) {
  for (auto& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

std::string default_text(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse visual odometry with point-tracking front end"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Estimate a trajectory from a synthetic scene or an image directory");
  run->add_option("--config", run_args.config, "JSON or key = value config file");
  run->add_option("--set", run_args.sets, "Config override key=value (repeatable)");
  run->add_option("--seed", run_args.seed, "Random seed (default 0)");
  const nlohmann::json defaults = to_json(VoConfig{});
  std::vector<std::pair<std::string, CLI::Option*>> flag_options;
  std::map<std::string, std::string> flag_values;
  for (const auto& [key, value] : defaults.items()) {
    if (key == "seed") continue;
    std::string help = "config key " + key;
    if (!default_text(value).empty()) help += " (default " + default_text(value) + ")";
    flag_options.emplace_back(key, run->add_option(flag_name(key), flag_values[key], help));
  }

  std::string est;
  std::string gt;
  double delta = 1.0;
  std::string metrics_out;
  auto* eval = app.add_subcommand("eval", "Compare an estimated TUM trajectory with ground truth");
  eval->add_option("--est", est, "Estimated trajectory (TUM)")->required();
  eval->add_option("--gt", gt, "Ground-truth trajectory (TUM)")->required();
  eval->add_option("--delta", delta, "RPE distance in metres")->capture_default_str();
  eval->add_option("--out", metrics_out, "Metrics CSV");

  std::string synth_config;
  std::string synth_out = "scene";
  bool render = false;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene fixture");
  synth->add_option("--config", synth_config, "Scene config JSON (defaults when omitted)");
  synth->add_option("--out", synth_out, "Output directory")->capture_default_str();
  synth->add_flag("--render", render, "Also render PNG frames");
  synth->add_option("--seed", synth_seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (run->parsed()) {
      for (const auto& [key, option] : flag_options)
        if (option->count() > 0) run_args.flags[key] = flag_values[key];
      return cmd_run(run_args);
    }
    if (eval->parsed()) return cmd_eval(est, gt, delta, metrics_out);
    if (synth->parsed()) return cmd_synth(synth_config, synth_out, render, synth_seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_config_error(e.code()) ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
