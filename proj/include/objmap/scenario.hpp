#pragma once

#include "objmap/geometry.hpp"
#include "objmap/object_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace objmap {

struct Waypoint {
  double t = 0.0;  // s
  double x = 0.0;
  double y = 0.0;
  double yaw_deg = 0.0;
};

struct ScenarioObject {
  std::string model;
  std::vector<Waypoint> waypoints;  // strictly increasing t
};

struct NoiseConfig {
  double keypoint_px = 0.0;    // Gaussian sigma on keypoint pixels
  double depth_m = 0.0;        // Gaussian sigma along the viewing ray
  double dropout = 0.0;        // probability a keypoint is reported invalid
  double outlier_prob = 0.0;   // probability a keypoint is displaced grossly
  double outlier_px = 50.0;    // displacement magnitude of such outliers
};

/// World-aligned box that blocks rays while t_start <= t < t_end.
struct Occluder {
  Aabb box;
  double t_start = -std::numeric_limits<double>::infinity();
  double t_end = std::numeric_limits<double>::infinity();

  bool active(double t) const { return t >= t_start && t < t_end; }
};

struct ScenarioCamera {
  std::uint16_t id = 0;
  CameraModel model;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  double duration_s = 60.0;
  double frame_rate_hz = 1.0;
  std::vector<ScenarioCamera> cameras;
  std::vector<ScenarioObject> objects;
  NoiseConfig noise;
  std::vector<Occluder> occluders;
  std::map<std::string, ObjectModel> models;         // by name; built-ins filled in on load
  std::map<std::string, std::string> model_sources;  // name -> "builtin" or model file path

  std::size_t frame_count() const;
  std::uint64_t frame_time_us(std::size_t frame) const;
  const ObjectModel& model(const std::string& name) const;
  /// Class id -> model, for the sensor and backend side.
  std::map<std::uint16_t, ObjectModel> models_by_class() const;
  std::vector<std::uint16_t> camera_ids() const;

  /// ConfigError describing the first problem found.
  void validate() const;
};

/// Parses the JSON schema documented in the README. Relative model paths are
/// resolved against `base_dir`.
ScenarioConfig parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);
/// Inverse of parse_scenario for built-in models (custom models are written
/// inline).
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);

/// Four corner cameras around five chairs and a table, 60 s at 1 Hz, no noise.
ScenarioConfig default_scenario();

}  // namespace objmap
