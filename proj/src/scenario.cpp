#include "objmap/scenario.hpp"

#include "objmap/error.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace objmap {

using json = nlohmann::json;

namespace {

Vec3 vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ConfigError, "expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

bool is_builtin(const std::string& name) { return name == "chair" || name == "table"; }

ScenarioCamera parse_camera(const json& j, std::size_t ordinal) {
  ScenarioCamera c;
  c.id = j.value("id", static_cast<std::uint16_t>(ordinal));
  CameraModel& m = c.model;
  m.fx = j.value("fx", m.fx);
  m.fy = j.value("fy", m.fy);
  m.width = j.value("width", m.width);
  m.height = j.value("height", m.height);
  m.cx = j.value("cx", m.width / 2.0);
  m.cy = j.value("cy", m.height / 2.0);
  if (j.contains("pose")) {
    const json& p = j.at("pose");
    const json& q = p.at("q");
    if (!q.is_array() || q.size() != 4) throw Error(ErrorCode::ConfigError, "camera pose q must be [w,x,y,z]");
    m.extrinsic = Pose(vec3(p.at("t")), Quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                             q[3].get<double>()));
  } else if (j.contains("eye") && j.contains("target")) {
    m.extrinsic = look_at(vec3(j.at("eye")), vec3(j.at("target")));
  } else {
    throw Error(ErrorCode::ConfigError, "camera " + std::to_string(c.id) + " needs either pose or eye/target");
  }
  return c;
}

}  // namespace

std::size_t ScenarioConfig::frame_count() const {
  return static_cast<std::size_t>(std::floor(duration_s * frame_rate_hz + 1e-9));
}

std::uint64_t ScenarioConfig::frame_time_us(std::size_t frame) const {
  return static_cast<std::uint64_t>(std::llround(static_cast<double>(frame) * 1e6 / frame_rate_hz));
}

const ObjectModel& ScenarioConfig::model(const std::string& name) const {
  const auto it = models.find(name);
  if (it == models.end()) throw Error(ErrorCode::ConfigError, "unknown object model '" + name + "'");
  return it->second;
}

std::map<std::uint16_t, ObjectModel> ScenarioConfig::models_by_class() const {
  std::map<std::uint16_t, ObjectModel> out;
  for (const auto& [name, m] : models) out.emplace(m.class_id, m);
  return out;
}

std::vector<std::uint16_t> ScenarioConfig::camera_ids() const {
  std::vector<std::uint16_t> ids;
  for (const auto& c : cameras) ids.push_back(c.id);
  return ids;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (!(frame_rate_hz > 0.0) || !std::isfinite(frame_rate_hz)) fail("frame_rate_hz must be positive");
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) fail("duration_s must be positive");
  if (frame_count() == 0) fail("scenario covers no frames");
  if (cameras.empty()) fail("scenario has no cameras");
  std::set<std::uint16_t> ids;
  for (const auto& c : cameras) {
    if (!ids.insert(c.id).second) fail("duplicate camera id " + std::to_string(c.id));
    try {
      c.model.validate();
    } catch (const Error& e) {
      fail("camera " + std::to_string(c.id) + ": " + e.what());
    }
  }
  std::set<std::uint16_t> classes;
  for (const auto& [name, m] : models) {
    if (!classes.insert(m.class_id).second) fail("two models share class id " + std::to_string(m.class_id));
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (!models.contains(o.model)) fail("object " + std::to_string(i) + " uses unknown model '" + o.model + "'");
    if (o.waypoints.empty()) fail("object " + std::to_string(i) + " has no waypoints");
    for (std::size_t k = 0; k < o.waypoints.size(); ++k) {
      const auto& w = o.waypoints[k];
      if (!std::isfinite(w.t) || !std::isfinite(w.x) || !std::isfinite(w.y) || !std::isfinite(w.yaw_deg)) {
        fail("object " + std::to_string(i) + " has a non-finite waypoint");
      }
      if (k > 0 && !(w.t > o.waypoints[k - 1].t)) {
        fail("object " + std::to_string(i) + " has overlapping waypoint times");
      }
    }
  }
  const NoiseConfig& n = noise;
  if (n.keypoint_px < 0 || n.depth_m < 0 || n.outlier_px < 0) fail("noise magnitudes must be non-negative");
  if (n.dropout < 0 || n.dropout > 1 || n.outlier_prob < 0 || n.outlier_prob > 1) {
    fail("noise probabilities must lie in [0, 1]");
  }
  for (const auto& occ : occluders) {
    if (!(occ.box.min.array() <= occ.box.max.array()).all()) fail("occluder min must not exceed max");
  }
}

ScenarioConfig parse_scenario(const json& j, const std::filesystem::path& base_dir) {
  try {
    ScenarioConfig cfg;
    cfg.name = j.value("name", cfg.name);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.duration_s = j.value("duration_s", cfg.duration_s);
    cfg.frame_rate_hz = j.value("frame_rate_hz", cfg.frame_rate_hz);

    if (j.contains("models")) {
      for (const auto& [name, src] : j.at("models").items()) {
        const std::string s = src.get<std::string>();
        if (s == "builtin") {
          if (!is_builtin(name)) throw Error(ErrorCode::ConfigError, "no built-in model named '" + name + "'");
          cfg.models.emplace(name, builtin_model(name));
          cfg.model_sources[name] = "builtin";
        } else {
          std::filesystem::path p(s);
          if (p.is_relative()) p = base_dir / p;
          try {
            cfg.models.emplace(name, load_object_model(p));
          } catch (const Error& e) {
            throw Error(ErrorCode::ConfigError, "model '" + name + "': " + e.what());
          }
          cfg.model_sources[name] = p.string();
        }
      }
    }

    const json& cams = j.at("cameras");
    for (std::size_t i = 0; i < cams.size(); ++i) cfg.cameras.push_back(parse_camera(cams[i], i));

    if (j.contains("objects")) {
      for (const auto& o : j.at("objects")) {
        ScenarioObject obj;
        obj.model = o.at("model").get<std::string>();
        for (const auto& w : o.at("waypoints")) {
          obj.waypoints.push_back({w.value("t", 0.0), w.at("x").get<double>(), w.at("y").get<double>(),
                                   w.value("yaw_deg", 0.0)});
        }
        if (!cfg.models.contains(obj.model) && is_builtin(obj.model)) {
          cfg.models.emplace(obj.model, builtin_model(obj.model));
          cfg.model_sources[obj.model] = "builtin";
        }
        cfg.objects.push_back(std::move(obj));
      }
    }

    if (j.contains("noise")) {
      const json& n = j.at("noise");
      cfg.noise.keypoint_px = n.value("keypoint_px", 0.0);
      cfg.noise.depth_m = n.value("depth_m", 0.0);
      cfg.noise.dropout = n.value("dropout", 0.0);
      cfg.noise.outlier_prob = n.value("outlier_prob", 0.0);
      cfg.noise.outlier_px = n.value("outlier_px", 50.0);
    }

    if (j.contains("occluders")) {
      for (const auto& o : j.at("occluders")) {
        Occluder occ;
        occ.box.min = vec3(o.at("min"));
        occ.box.max = vec3(o.at("max"));
        if (o.contains("t_start")) occ.t_start = o.at("t_start").get<double>();
        if (o.contains("t_end")) occ.t_end = o.at("t_end").get<double>();
        cfg.occluders.push_back(occ);
      }
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("scenario: ") + e.what());
  }
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open scenario " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return parse_scenario(j, path.parent_path());
}

json scenario_to_json(const ScenarioConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["duration_s"] = cfg.duration_s;
  j["frame_rate_hz"] = cfg.frame_rate_hz;
  j["models"] = json::object();
  for (const auto& [name, src] : cfg.model_sources) j["models"][name] = src;
  j["cameras"] = json::array();
  for (const auto& c : cfg.cameras) {
    const Quat& q = c.model.extrinsic.q();
    j["cameras"].push_back({{"id", c.id},
                            {"fx", c.model.fx},
                            {"fy", c.model.fy},
                            {"cx", c.model.cx},
                            {"cy", c.model.cy},
                            {"width", c.model.width},
                            {"height", c.model.height},
                            {"pose", {{"t", vec_json(c.model.extrinsic.t())}, {"q", {q.w(), q.x(), q.y(), q.z()}}}}});
  }
  j["objects"] = json::array();
  for (const auto& o : cfg.objects) {
    json wps = json::array();
    for (const auto& w : o.waypoints) wps.push_back({{"t", w.t}, {"x", w.x}, {"y", w.y}, {"yaw_deg", w.yaw_deg}});
    j["objects"].push_back({{"model", o.model}, {"waypoints", wps}});
  }
  j["noise"] = {{"keypoint_px", cfg.noise.keypoint_px},
                {"depth_m", cfg.noise.depth_m},
                {"dropout", cfg.noise.dropout},
                {"outlier_prob", cfg.noise.outlier_prob},
                {"outlier_px", cfg.noise.outlier_px}};
  j["occluders"] = json::array();
  for (const auto& occ : cfg.occluders) {
    json o = {{"min", vec_json(occ.box.min)}, {"max", vec_json(occ.box.max)}};
    if (std::isfinite(occ.t_start)) o["t_start"] = occ.t_start;
    if (std::isfinite(occ.t_end)) o["t_end"] = occ.t_end;
    j["occluders"].push_back(o);
  }
  return j;
}

ScenarioConfig default_scenario() {
  ScenarioConfig cfg;
  cfg.name = "default";
  cfg.seed = 1;
  cfg.duration_s = 60.0;
  cfg.frame_rate_hz = 1.0;
  const Vec3 target(0.0, 0.2, 0.4);
  const Vec3 eyes[4] = {{4.0, 3.2, 4.0}, {-4.0, 3.2, 4.0}, {-4.0, -3.2, 4.0}, {4.0, -3.2, 4.0}};
  for (std::uint16_t i = 0; i < 4; ++i) {
    ScenarioCamera c;
    c.id = i;
    c.model.fx = c.model.fy = 525.0;
    c.model.cx = 320.0;
    c.model.cy = 240.0;
    c.model.extrinsic = look_at(eyes[i], target);
    cfg.cameras.push_back(c);
  }
  cfg.models.emplace("chair", builtin_model("chair"));
  cfg.models.emplace("table", builtin_model("table"));
  cfg.model_sources = {{"chair", "builtin"}, {"table", "builtin"}};
  cfg.objects = {
      {"table", {{0.0, 0.0, 0.0, 0.0}}},
      {"chair", {{0.0, -1.4, 0.0, 0.0}}},
      {"chair", {{0.0, 1.4, 0.0, 180.0}}},
      {"chair", {{0.0, 0.0, 1.3, -90.0}}},
      {"chair", {{0.0, -0.6, -1.4, 90.0}}},
      {"chair", {{0.0, -1.8, 2.1, 0.0}, {59.0, 1.8, 2.1, 0.0}}},
  };
  return cfg;
}

}  // namespace objmap
