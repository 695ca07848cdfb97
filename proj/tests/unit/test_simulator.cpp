#include "objmap/error.hpp"
#include "objmap/rng.hpp"
#include "objmap/scenario.hpp"
#include "objmap/simulator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace objmap;
using nlohmann::json;

namespace {

json minimal_scenario() {
  return json{{"name", "mini"},
              {"duration_s", 3.0},
              {"frame_rate_hz", 1.0},
              {"cameras", json::array({{{"id", 0}, {"eye", {3.0, 0.0, 2.0}}, {"target", {0.0, 0.0, 0.4}}}})},
              {"objects", json::array({{{"model", "chair"}, {"waypoints", json::array({{{"t", 0}, {"x", 0}, {"y", 0}}})}}})}};
}

ScenarioConfig one_camera_one_chair() { return parse_scenario(minimal_scenario()); }

void expect_config_error(const json& j) {
  try {
    ScenarioConfig cfg = parse_scenario(j);
    cfg.validate();
    FAIL() << j.dump();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError) << e.what();
  }
}

}  // namespace

TEST(Scenario, DefaultShape) {
  const ScenarioConfig cfg = default_scenario();
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.cameras.size(), 4u);
  EXPECT_EQ(cfg.objects.size(), 6u);
  EXPECT_EQ(cfg.frame_count(), 60u);
  EXPECT_EQ(cfg.frame_time_us(0), 0u);
  EXPECT_EQ(cfg.frame_time_us(7), 7000000u);
  EXPECT_EQ(cfg.models_by_class().size(), 2u);
}

TEST(Scenario, ParseMinimal) {
  const ScenarioConfig cfg = one_camera_one_chair();
  EXPECT_EQ(cfg.name, "mini");
  EXPECT_EQ(cfg.frame_count(), 3u);
  ASSERT_EQ(cfg.cameras.size(), 1u);
  EXPECT_EQ(cfg.cameras[0].model.cx, 320.0);
  EXPECT_EQ(cfg.model("chair").class_id, kChairClass);
  EXPECT_EQ(cfg.noise.keypoint_px, 0.0);
}

TEST(Scenario, JsonRoundTrip) {
  ScenarioConfig a = default_scenario();
  a.noise.keypoint_px = 1.5;
  Occluder occ;
  occ.box = {Vec3(0, 0, 0), Vec3(1, 1, 1)};
  occ.t_start = 2.0;
  a.occluders.push_back(occ);
  const json ja = scenario_to_json(a);
  const ScenarioConfig b = parse_scenario(ja);
  EXPECT_EQ(scenario_to_json(b), ja);
  EXPECT_EQ(b.occluders[0].t_end, INFINITY);
}

TEST(Scenario, ValidationErrors) {
  json j = minimal_scenario();
  j["cameras"] = json::array();
  expect_config_error(j);

  j = minimal_scenario();
  j["cameras"].push_back(j["cameras"][0]);
  expect_config_error(j);

  j = minimal_scenario();
  j["objects"][0]["model"] = "sofa";
  expect_config_error(j);

  j = minimal_scenario();
  j["objects"][0]["waypoints"] = json::array({{{"t", 1}, {"x", 0}, {"y", 0}}, {{"t", 1}, {"x", 1}, {"y", 0}}});
  expect_config_error(j);

  j = minimal_scenario();
  j["noise"] = {{"dropout", 1.5}};
  expect_config_error(j);

  j = minimal_scenario();
  j["frame_rate_hz"] = 0;
  expect_config_error(j);

  j = minimal_scenario();
  j["cameras"][0].erase("eye");
  expect_config_error(j);

  j = minimal_scenario();
  j["occluders"] = json::array({{{"min", {1, 1, 1}}, {"max", {0, 0, 0}}}});
  expect_config_error(j);
}

TEST(Trajectory, InterpolatesAndClamps) {
  const ObjectModel chair = make_chair_model();
  ScenarioObject o;
  o.model = "chair";
  o.waypoints = {{0.0, 0.0, 0.0, 0.0}, {10.0, 2.0, -1.0, 90.0}};
  Pose p = trajectory_pose(o, chair, 5.0);
  EXPECT_NEAR(p.t().x(), 1.0, 1e-12);
  EXPECT_NEAR(p.t().y(), -0.5, 1e-12);
  EXPECT_NEAR(p.yaw() * 180.0 / std::numbers::pi, 45.0, 1e-9);
  EXPECT_EQ(trajectory_pose(o, chair, -3.0).t(), trajectory_pose(o, chair, 0.0).t());
  EXPECT_EQ(trajectory_pose(o, chair, 30.0).t(), trajectory_pose(o, chair, 10.0).t());
  EXPECT_EQ(p.t().z(), chair.ground_offset);
}

TEST(Trajectory, YawTakesShortestArc) {
  const ObjectModel chair = make_chair_model();
  ScenarioObject o;
  o.waypoints = {{0.0, 0.0, 0.0, 350.0}, {2.0, 0.0, 0.0, 10.0}};
  const Pose p = trajectory_pose(o, chair, 1.0);
  EXPECT_NEAR(std::cos(p.yaw()), 1.0, 1e-12);
}

TEST(Generate, FramesAndDeterminism) {
  const ScenarioConfig cfg = default_scenario();
  const auto a = generate(cfg);
  const auto b = generate(cfg);
  ASSERT_EQ(a.size(), 60u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].timestamp_us, cfg.frame_time_us(k));
    ASSERT_EQ(a[k].objects.size(), 6u);
    EXPECT_EQ(a[k].visibility.size(), 4u * 6u);
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_EQ(a[k].objects[i].pose.t(), b[k].objects[i].pose.t());
      EXPECT_EQ(a[k].objects[i].pose.q().coeffs(), b[k].objects[i].pose.q().coeffs());
    }
  }
  // Every camera sees every object of the default scene in full.
  for (const auto& v : a[0].visibility) {
    EXPECT_EQ(v.visible_keypoints.size(), cfg.model(a[0].objects[v.object].model).keypoints.size());
  }
}

TEST(Observe, NoiseFreeKeypointsAreExactProjections) {
  const ScenarioConfig cfg = one_camera_one_chair();
  const auto gt = generate(cfg);
  const auto dets = observe(cfg, gt[0], 0);
  ASSERT_EQ(dets.size(), 1u);
  ASSERT_TRUE(dets[0].keypoints.has_value());
  const CameraModel& cam = cfg.cameras[0].model;
  const ObjectModel& chair = cfg.model("chair");
  const Pose cam_from_obj = compose(cam.world_to_camera(), gt[0].objects[0].pose);
  for (std::size_t l = 0; l < chair.keypoints.size(); ++l) {
    if (!dets[0].keypoints->valid[l]) continue;
    const Pixel px = project(cam, apply(cam_from_obj, chair.keypoints[l]));
    EXPECT_NEAR(dets[0].keypoints->points[l].u, px.u, 1e-9);
    EXPECT_NEAR(dets[0].keypoints->points[l].v, px.v, 1e-9);
  }
  ASSERT_FALSE(dets[0].segment.empty());
  EXPECT_EQ(dets[0].segment.frame, CloudFrame::Camera);
  // Each surface sample lies on the transformed model cloud.
  const Pose obj_from_cam = inverse(cam_from_obj);
  for (const auto& p : dets[0].segment.points) {
    const Vec3 po = apply(obj_from_cam, p.xyz);
    double best = INFINITY;
    for (const auto& c : chair.cloud) best = std::min(best, (c - po).norm());
    EXPECT_LT(best, 1e-9);
    EXPECT_TRUE(cam.in_image(project(cam, p.xyz)));
  }
}

TEST(Observe, DeterministicAndOrderIndependent) {
  ScenarioConfig cfg = default_scenario();
  cfg.noise = {2.0, 0.01, 0.1, 0.05, 50.0};
  const auto gt = generate(cfg);
  const auto later = observe(cfg, gt[5], 3);
  const auto first = observe(cfg, gt[5], 3);
  observe(cfg, gt[2], 1);
  const auto again = observe(cfg, gt[5], 3);
  ASSERT_EQ(first.size(), later.size());
  ASSERT_EQ(first.size(), again.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(first[i].segment.points, again[i].segment.points);
    ASSERT_EQ(first[i].keypoints.has_value(), again[i].keypoints.has_value());
    if (first[i].keypoints) {
      for (std::size_t l = 0; l < first[i].keypoints->points.size(); ++l) {
        EXPECT_EQ(first[i].keypoints->points[l].u, again[i].keypoints->points[l].u);
        EXPECT_EQ(first[i].keypoints->valid[l], later[i].keypoints->valid[l]);
      }
    }
  }
  cfg.seed = 2;
  const auto other = observe(cfg, gt[5], 3);
  ASSERT_TRUE(other[0].keypoints && first[0].keypoints);
  EXPECT_NE(other[0].keypoints->points[0].u, first[0].keypoints->points[0].u);
}

TEST(Observe, FullOccluderHidesObject) {
  ScenarioConfig cfg = one_camera_one_chair();
  Occluder occ;
  occ.box = {Vec3(1.5, -2.0, -1.0), Vec3(1.6, 2.0, 4.0)};  // wall between camera and chair
  occ.t_start = 1.0;
  occ.t_end = 2.0;
  cfg.occluders.push_back(occ);
  const auto gt = generate(cfg);
  EXPECT_FALSE(observe(cfg, gt[0], 0).empty());
  EXPECT_TRUE(observe(cfg, gt[1], 0).empty());
  EXPECT_FALSE(observe(cfg, gt[2], 0).empty());
  EXPECT_EQ(gt[1].visibility[0].fraction, 0.0);
  EXPECT_GT(gt[0].visibility[0].fraction, 0.5);
}

TEST(Observe, OccludersNeverIncreaseVisibility) {
  ScenarioConfig base = default_scenario();
  base.duration_s = 3.0;
  const auto gt0 = generate(base);
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    ScenarioConfig cfg = base;
    const Vec3 c(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0, 1.5));
    const Vec3 h(rng.uniform(0.1, 0.6), rng.uniform(0.1, 0.6), rng.uniform(0.1, 0.6));
    cfg.occluders.push_back({Aabb{c - h, c + h}});
    const auto gt1 = generate(cfg);
    for (std::size_t k = 0; k < gt0.size(); ++k) {
      for (std::size_t v = 0; v < gt0[k].visibility.size(); ++v) {
        EXPECT_LE(gt1[k].visibility[v].fraction, gt0[k].visibility[v].fraction);
        EXPECT_LE(gt1[k].visibility[v].visible_keypoints.size(), gt0[k].visibility[v].visible_keypoints.size());
      }
      for (std::size_t cam = 0; cam < cfg.cameras.size(); ++cam) {
        const auto d0 = observe(base, gt0[k], cam);
        const auto d1 = observe(cfg, gt1[k], cam);
        std::size_t n0 = 0;
        std::size_t n1 = 0;
        for (const auto& d : d0) n0 += d.segment.size();
        for (const auto& d : d1) n1 += d.segment.size();
        EXPECT_LE(n1, n0);
      }
    }
  }
}

TEST(SegmentHitsBox, Examples) {
  const Aabb box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  EXPECT_TRUE(segment_hits_box(Vec3(-5, 0, 0), Vec3(5, 0, 0), box));
  EXPECT_FALSE(segment_hits_box(Vec3(-5, 2, 0), Vec3(5, 2, 0), box));
  EXPECT_FALSE(segment_hits_box(Vec3(-5, 0, 0), Vec3(-2, 0, 0), box));
  // Ending on the surface does not count as crossing.
  EXPECT_FALSE(segment_hits_box(Vec3(-5, 0, 0), Vec3(-1, 0, 0), box));
  EXPECT_TRUE(segment_hits_box(Vec3(0, 0, 0), Vec3(0, 0, 5), box));
}
