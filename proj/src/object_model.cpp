#include "objmap/object_model.hpp"

#include "objmap/error.hpp"
#include "objmap/rng.hpp"

#include <json.hpp>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace objmap {

namespace {

using json = nlohmann::json;

struct Box {
  Vec3 lo;
  Vec3 hi;
};

// Area-weighted uniform samples on the faces of a union of boxes, with the
// face normal of each sample.
void sample_boxes(const std::vector<Box>& boxes, std::size_t count, std::uint64_t seed, std::vector<Vec3>& pts,
                  std::vector<Vec3>& normals) {
  struct Face {
    Vec3 origin, du, dv, normal;
    double area;
  };
  std::vector<Face> faces;
  double total = 0.0;
  for (const auto& b : boxes) {
    const Vec3 s = b.hi - b.lo;
    for (int axis = 0; axis < 3; ++axis) {
      const int a1 = (axis + 1) % 3;
      const int a2 = (axis + 2) % 3;
      for (int side = 0; side < 2; ++side) {
        Face f;
        f.origin = b.lo;
        if (side == 1) f.origin[axis] = b.hi[axis];
        f.du = Vec3::Zero();
        f.dv = Vec3::Zero();
        f.du[a1] = s[a1];
        f.dv[a2] = s[a2];
        f.normal = Vec3::Zero();
        f.normal[axis] = side == 1 ? 1.0 : -1.0;
        f.area = s[a1] * s[a2];
        total += f.area;
        faces.push_back(f);
      }
    }
  }
  Rng rng(seed);
  pts.reserve(count);
  normals.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    double pick = rng.uniform() * total;
    std::size_t fi = 0;
    while (fi + 1 < faces.size() && pick >= faces[fi].area) {
      pick -= faces[fi].area;
      ++fi;
    }
    const Face& f = faces[fi];
    pts.push_back(f.origin + rng.uniform() * f.du + rng.uniform() * f.dv);
    normals.push_back(f.normal);
  }
}

Aabb bounds(const std::vector<Box>& boxes) {
  Aabb a{boxes.front().lo, boxes.front().hi};
  for (const auto& b : boxes) {
    a.min = a.min.cwiseMin(b.lo);
    a.max = a.max.cwiseMax(b.hi);
  }
  return a;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ConfigError, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void ObjectModel::validate() const {
  if (keypoints.size() < 4) throw Error(ErrorCode::ConfigError, name + ": at least 4 keypoints required");
  if (cloud.empty()) throw Error(ErrorCode::ConfigError, name + ": empty model cloud");
  if (!normals.empty() && normals.size() != cloud.size()) {
    throw Error(ErrorCode::ConfigError, name + ": normal count differs from cloud size");
  }
  for (const auto& k : keypoints) {
    if (!extent.contains(k, 1e-9)) throw Error(ErrorCode::ConfigError, name + ": keypoint outside extent");
  }
  if (!(splat_radius > 0.0)) throw Error(ErrorCode::ConfigError, name + ": splat radius must be positive");
}

ObjectModel make_chair_model(std::size_t cloud_points) {
  // Seat 47 x 47 cm at 43..47 cm, four 3 cm legs, backrest along -x.
  const double h = 0.235;
  std::vector<Box> boxes{
      {{-h, -h, 0.43}, {h, h, 0.47}},
      {{-h, -h, 0.47}, {-h + 0.03, h, 0.93}},
  };
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      const Vec3 c(sx * (h - 0.025), sy * (h - 0.025), 0.0);
      boxes.push_back({c + Vec3(-0.015, -0.015, 0.0), c + Vec3(0.015, 0.015, 0.43)});
    }
  }
  ObjectModel m;
  m.class_id = kChairClass;
  m.name = "chair";
  m.keypoints = {{h, -h, 0.47}, {h, h, 0.47}, {-h, h, 0.47}, {-h, -h, 0.47},
                 {-h + 0.015, -h, 0.93}, {-h + 0.015, h, 0.93}};
  sample_boxes(boxes, cloud_points, 0xC4A1Full, m.cloud, m.normals);
  m.ground_offset = 0.0;
  m.extent = bounds(boxes);
  m.splat_radius = 0.02;
  return m;
}

ObjectModel make_table_model(std::size_t cloud_points) {
  // Tabletop 118 x 78 cm at 71..74 cm, four 5 cm legs inset by 2.5 cm.
  const double hx = 0.59;
  const double hy = 0.39;
  std::vector<Box> boxes{{{-hx, -hy, 0.71}, {hx, hy, 0.74}}};
  std::vector<Vec3> feet;
  for (double sx : {1.0, -1.0}) {
    for (double sy : {-1.0, 1.0}) {
      const Vec3 c(sx * (hx - 0.05), sy * (hy - 0.05), 0.0);
      boxes.push_back({c + Vec3(-0.025, -0.025, 0.0), c + Vec3(0.025, 0.025, 0.71)});
      feet.push_back(c);
    }
  }
  ObjectModel m;
  m.class_id = kTableClass;
  m.name = "table";
  m.keypoints = {{hx, -hy, 0.74}, {hx, hy, 0.74}, {-hx, -hy, 0.74}, {-hx, hy, 0.74}};
  m.keypoints.insert(m.keypoints.end(), feet.begin(), feet.end());
  sample_boxes(boxes, cloud_points, 0x7AB1Eull, m.cloud, m.normals);
  m.ground_offset = 0.0;
  m.extent = bounds(boxes);
  m.splat_radius = 0.025;
  return m;
}

ObjectModel builtin_model(const std::string& name) {
  if (name == "chair") return make_chair_model();
  if (name == "table") return make_table_model();
  throw Error(ErrorCode::ConfigError, "unknown built-in model '" + name + "'");
}

ObjectModel load_object_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open model file " + path.string());
  ObjectModel m;
  try {
    const json j = json::parse(in);
    m.class_id = j.at("class_id").get<std::uint16_t>();
    m.name = j.value("name", std::string("object"));
    for (const auto& k : j.at("keypoints")) m.keypoints.push_back(json_vec(k));
    m.ground_offset = j.at("ground_offset").get<double>();
    m.extent.min = json_vec(j.at("extent").at("min"));
    m.extent.max = json_vec(j.at("extent").at("max"));
    m.splat_radius = j.value("splat_radius", 0.02);
    const auto cloud_path = path.parent_path() / j.at("cloud_path").get<std::string>();
    std::ifstream cin(cloud_path);
    if (!cin) throw Error(ErrorCode::IoError, "cannot open model cloud " + cloud_path.string());
    std::string line;
    while (std::getline(cin, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::array<double, 6> v{};
      int n = 0;
      while (n < 6 && ls >> v[static_cast<std::size_t>(n)]) ++n;
      if (n != 3 && n != 6) throw Error(ErrorCode::ConfigError, "bad model cloud line: " + line);
      m.cloud.emplace_back(v[0], v[1], v[2]);
      if (n == 6) m.normals.emplace_back(v[3], v[4], v[5]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

void save_object_model(const ObjectModel& model, const std::filesystem::path& path) {
  const std::string cloud_name = path.stem().string() + "_cloud.xyz";
  json j;
  j["class_id"] = model.class_id;
  j["name"] = model.name;
  j["keypoints"] = json::array();
  for (const auto& k : model.keypoints) j["keypoints"].push_back(vec_json(k));
  j["ground_offset"] = model.ground_offset;
  j["extent"] = {{"min", vec_json(model.extent.min)}, {"max", vec_json(model.extent.max)}};
  j["splat_radius"] = model.splat_radius;
  j["cloud_path"] = cloud_name;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';

  std::ofstream cout(path.parent_path() / cloud_name);
  if (!cout) throw Error(ErrorCode::IoError, "cannot write model cloud next to " + path.string());
  char buf[256];
  for (std::size_t i = 0; i < model.cloud.size(); ++i) {
    const Vec3& p = model.cloud[i];
    if (model.normals.empty()) {
      std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    } else {
      const Vec3& n = model.normals[i];
      std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g\n", p.x(), p.y(), p.z(), n.x(), n.y(),
                    n.z());
    }
    cout << buf;
  }
}

}  // namespace objmap
