#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "leapvo/dynfilter.hpp"

namespace leapvo {

/// Every tunable of a VO run. Paths are optional and only used by the CLI.
struct VoConfig {
  int n_queries = 256;  ///< N, keypoints per frame
  int s = 8;            ///< tracker model window
  int s_lp = 12;        ///< tracking window
  int s_ba = 15;        ///< bundle-adjustment window
  int k = 4;            ///< tracker refinement iterations
  int k_ba = 4;         ///< Gauss-Newton steps per window
  int init_frames = 8;  ///< frames collected before the first BA window
  int init_k_ba = 12;   ///< Gauss-Newton steps of that first window
  int grid_k = 8;
  int anchors = 64;     ///< anchor count for standalone dynamic scoring
  FilterConfig filter;
  DynamicScoreConfig dynamic;
  double huber_delta = 2.0;
  double damping = 1e-4;
  bool confidence_weighting = false;
  std::string tracker = "oracle";
  std::uint64_t seed = 0;

  // oracle noise model
  double sigma_px = 0.0;
  double p_bad = 0.0;
  double sigma_bad = 8.0;

  std::string scene;
  std::string images;
  std::string intrinsics;
  std::string out;

  /// Throws InvalidArgument on an out-of-range value.
  void validate() const;
};

nlohmann::json to_json(const VoConfig& config);

/// Applies the keys present in `j`; unknown keys throw InvalidArgument.
void apply_json(VoConfig& config, const nlohmann::json& j);

/// `key=value` override; the value is parsed according to the key's type.
void apply_override(VoConfig& config, const std::string& key, const std::string& value);

/// Reads a JSON object or a plain `key = value` file ('#' starts a comment).
VoConfig load_vo_config(const std::filesystem::path& path);

}  // namespace leapvo
