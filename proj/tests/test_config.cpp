#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "leapvo/config.hpp"
#include "leapvo/errors.hpp"

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

std::filesystem::path temp_file(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("defaults") {
  const VoConfig c;
  CHECK(c.n_queries == 256);
  CHECK(c.s == 8);
  CHECK(c.s_lp == 12);
  CHECK(c.s_ba == 15);
  CHECK(c.k == 4);
  CHECK(c.k_ba == 4);
  CHECK(c.anchors == 64);
  CHECK(c.filter.gamma_v == 0.9);
  CHECK(c.filter.gamma_d == 0.9);
  CHECK(c.filter.gamma_u == 0.8);
  CHECK(c.filter.gamma_track == 3);
  CHECK(c.seed == 0);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("JSON round trip") {
  VoConfig c;
  c.n_queries = 100;
  c.filter.gamma_d = 1.01;
  c.tracker = "correlation";
  c.seed = 12;
  c.scene = "a/b.json";
  VoConfig back;
  apply_json(back, to_json(c));
  CHECK(to_json(back) == to_json(c));

  VoConfig other;
  CHECK(code_of([&] { apply_json(other, nlohmann::json{{"nope", 1}}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { apply_json(other, nlohmann::json{{"s", "eight"}}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { apply_json(other, nlohmann::json::array()); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("validation") {
  auto invalid = [](const std::function<void(VoConfig&)>& edit) {
    VoConfig c;
    edit(c);
    return code_of([&] { c.validate(); }) == ErrorCode::kInvalidArgument;
  };
  CHECK(invalid([](VoConfig& c) { c.n_queries = 0; }));
  CHECK(invalid([](VoConfig& c) { c.s_ba = 1; }));
  CHECK(invalid([](VoConfig& c) { c.k_ba = 0; }));
  CHECK(invalid([](VoConfig& c) { c.init_frames = 1; }));
  CHECK(invalid([](VoConfig& c) { c.init_frames = 16; }));
  CHECK(invalid([](VoConfig& c) { c.init_k_ba = 0; }));
  CHECK(invalid([](VoConfig& c) { c.filter.gamma_u = 1.5; }));
  CHECK(invalid([](VoConfig& c) { c.p_bad = -0.1; }));
  CHECK(invalid([](VoConfig& c) { c.tracker = "sift"; }));

  VoConfig off;
  off.filter = {0.0, 1.01, 1.0, 0};
  CHECK_NOTHROW(off.validate());
}

TEST_CASE("overrides") {
  VoConfig c;
  apply_override(c, "s_ba", "10");
  apply_override(c, "gamma_v", "0.5");
  apply_override(c, "tracker", "correlation");
  apply_override(c, "scene", "123");
  apply_override(c, "confidence_weighting", "true");
  CHECK(c.s_ba == 10);
  CHECK(c.filter.gamma_v == 0.5);
  CHECK(c.dynamic.gamma_v == 0.5);
  CHECK(c.tracker == "correlation");
  CHECK(c.scene == "123");
  CHECK(c.confidence_weighting);
  CHECK(code_of([&] { apply_override(c, "s", "x"); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { apply_override(c, "unknown", "1"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("config files") {
  const auto kv = temp_file("leapvo_cfg.txt", "# comment\nn_queries = 64\n\ns_lp=6  # trailing\ntracker = oracle\n");
  const VoConfig a = load_vo_config(kv);
  CHECK(a.n_queries == 64);
  CHECK(a.s_lp == 6);
  CHECK(a.tracker == "oracle");

  const auto js = temp_file("leapvo_cfg.json", R"({"k": 2, "sigma_px": 0.5})");
  const VoConfig b = load_vo_config(js);
  CHECK(b.k == 2);
  CHECK(b.sigma_px == 0.5);

  CHECK(code_of([&] { load_vo_config(temp_file("leapvo_bad.txt", "n_queries 64\n")); }) == ErrorCode::kParseError);
  CHECK(code_of([&] { load_vo_config(temp_file("leapvo_bad.json", "{\"k\": }")); }) == ErrorCode::kParseError);
  CHECK(code_of([&] { load_vo_config("/nonexistent/leapvo.cfg"); }) == ErrorCode::kIoError);
}
