#include "leapvo/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "leapvo/errors.hpp"

namespace leapvo {

using nlohmann::json;

namespace {

using Setter = std::function<void(VoConfig&, const json&)>;

template <typename T>
Setter field(T VoConfig::*member) {
  return [member](VoConfig& c, const json& v) { c.*member = v.get<T>(); };
}

template <typename T>
Setter filter_field(T FilterConfig::*member) {
  return [member](VoConfig& c, const json& v) { c.filter.*member = v.get<T>(); };
}

template <typename T>
Setter dynamic_field(T DynamicScoreConfig::*member) {
  return [member](VoConfig& c, const json& v) { c.dynamic.*member = v.get<T>(); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"n_queries", field(&VoConfig::n_queries)},
      {"s", field(&VoConfig::s)},
      {"s_lp", field(&VoConfig::s_lp)},
      {"s_ba", field(&VoConfig::s_ba)},
      {"k", field(&VoConfig::k)},
      {"k_ba", field(&VoConfig::k_ba)},
      {"init_frames", field(&VoConfig::init_frames)},
      {"init_k_ba", field(&VoConfig::init_k_ba)},
      {"grid_k", field(&VoConfig::grid_k)},
      {"anchors", field(&VoConfig::anchors)},
      {"gamma_v",
       [](VoConfig& c, const json& v) {
         c.filter.gamma_v = v.get<double>();
         c.dynamic.gamma_v = c.filter.gamma_v;
       }},
      {"gamma_d", filter_field(&FilterConfig::gamma_d)},
      {"gamma_u", filter_field(&FilterConfig::gamma_u)},
      {"gamma_track", filter_field(&FilterConfig::gamma_track)},
      {"tau_d", dynamic_field(&DynamicScoreConfig::tau_d)},
      {"sigma_d", dynamic_field(&DynamicScoreConfig::sigma_d)},
      {"huber_delta", field(&VoConfig::huber_delta)},
      {"damping", field(&VoConfig::damping)},
      {"confidence_weighting", field(&VoConfig::confidence_weighting)},
      {"tracker", field(&VoConfig::tracker)},
      {"seed", field(&VoConfig::seed)},
      {"sigma_px", field(&VoConfig::sigma_px)},
      {"p_bad", field(&VoConfig::p_bad)},
      {"sigma_bad", field(&VoConfig::sigma_bad)},
      {"scene", field(&VoConfig::scene)},
      {"images", field(&VoConfig::images)},
      {"intrinsics", field(&VoConfig::intrinsics)},
      {"out", field(&VoConfig::out)},
  };
  return table;
}

void set(VoConfig& config, const std::string& key, const json& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
  try {
    it->second(config, value);
  } catch (const json::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "bad value for config key '" + key + "'");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void VoConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
  };
  require(n_queries >= 1, "n_queries must be positive");
  require(s >= 2, "s must be at least 2");
  require(s_lp >= 2, "s_lp must be at least 2");
  require(s_ba >= 2, "s_ba must be at least 2");
  require(k >= 1, "k must be positive");
  require(k_ba >= 1, "k_ba must be positive");
  require(init_frames >= 2 && init_frames <= s_ba, "init_frames must lie in [2, s_ba]");
  require(init_k_ba >= 1, "init_k_ba must be positive");
  require(grid_k >= 1, "grid_k must be positive");
  require(filter.gamma_u >= 0.0 && filter.gamma_u <= 1.0, "gamma_u must lie in [0, 1]");
  require(dynamic.sigma_d > 0.0, "sigma_d must be positive");
  require(huber_delta > 0.0, "huber_delta must be positive");
  require(damping >= 0.0, "damping must be non-negative");
  require(sigma_px >= 0.0 && sigma_bad >= 0.0, "noise levels must be non-negative");
  require(p_bad >= 0.0 && p_bad <= 1.0, "p_bad must lie in [0, 1]");
  require(tracker == "oracle" || tracker == "correlation", "tracker must be 'oracle' or 'correlation'");
}

json to_json(const VoConfig& c) {
  return json{{"n_queries", c.n_queries},
              {"s", c.s},
              {"s_lp", c.s_lp},
              {"s_ba", c.s_ba},
              {"k", c.k},
              {"k_ba", c.k_ba},
              {"init_frames", c.init_frames},
              {"init_k_ba", c.init_k_ba},
              {"grid_k", c.grid_k},
              {"anchors", c.anchors},
              {"gamma_v", c.filter.gamma_v},
              {"gamma_d", c.filter.gamma_d},
              {"gamma_u", c.filter.gamma_u},
              {"gamma_track", c.filter.gamma_track},
              {"tau_d", c.dynamic.tau_d},
              {"sigma_d", c.dynamic.sigma_d},
              {"huber_delta", c.huber_delta},
              {"damping", c.damping},
              {"confidence_weighting", c.confidence_weighting},
              {"tracker", c.tracker},
              {"seed", c.seed},
              {"sigma_px", c.sigma_px},
              {"p_bad", c.p_bad},
              {"sigma_bad", c.sigma_bad},
              {"scene", c.scene},
              {"images", c.images},
              {"intrinsics", c.intrinsics},
              {"out", c.out}};
}

void apply_json(VoConfig& config, const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) set(config, key, value);
}

void apply_override(VoConfig& config, const std::string& key, const std::string& value) {
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  try {
    set(config, key, parsed);
  } catch (const Error&) {
    if (parsed.is_string()) throw;
    set(config, key, json(value));
  }
}

VoConfig load_vo_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  VoConfig config;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      apply_json(config, json::parse(text));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
    }
    return config;
  }
  std::istringstream lines(text);
  std::string line;
  int number = 0;
  while (std::getline(lines, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::kParseError, path.string() + ":" + std::to_string(number) + ": expected key = value");
    apply_override(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

}  // namespace leapvo
