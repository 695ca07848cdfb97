#include "objmap/error.hpp"
#include "objmap/object_model.hpp"
#include "objmap/pose_estimation.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

using namespace objmap;
using objmap::test::make_segment;
using objmap::test::random_vec;

namespace {

CameraModel scene_camera() {
  CameraModel cam;
  cam.fx = cam.fy = 525;
  cam.cx = 320;
  cam.cy = 240;
  cam.extrinsic = look_at(Vec3(3.0, 2.0, 2.5), Vec3(0, 0, 0.4));
  return cam;
}

KeypointSet2D project_keypoints(const ObjectModel& model, const CameraModel& cam, const Pose& world_pose) {
  KeypointSet2D kps;
  kps.class_id = model.class_id;
  const Pose cam_from_obj = compose(cam.world_to_camera(), world_pose);
  for (const auto& k : model.keypoints) {
    kps.points.push_back(project(cam, apply(cam_from_obj, k)));
    kps.confidences.push_back(1.0);
    kps.valid.push_back(true);
  }
  return kps;
}

double brute_assoc(const Skeleton3D& k, const PointCloudSegment& s) {
  double sum = 0.0;
  for (const auto& x : k.keypoints) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : s.points) best = std::min(best, (x - p.xyz).norm());
    sum += best;
  }
  return sum / static_cast<double>(k.keypoints.size());
}

std::vector<Vec3> placed_cloud(const ObjectModel& m, const Pose& p) {
  std::vector<Vec3> out;
  for (const auto& x : m.cloud) out.push_back(apply(p, x));
  return out;
}

}  // namespace

TEST(ObjectModel, BuiltinsHaveTheDocumentedKeypoints) {
  const ObjectModel chair = make_chair_model();
  const ObjectModel table = make_table_model();
  EXPECT_EQ(chair.keypoints.size(), 6u);
  EXPECT_EQ(table.keypoints.size(), 8u);
  EXPECT_EQ(chair.class_id, kChairClass);
  EXPECT_EQ(table.class_id, kTableClass);
  for (const auto* m : {&chair, &table}) {
    EXPECT_GE(m->cloud.size(), 500u);
    EXPECT_EQ(m->normals.size(), m->cloud.size());
    for (const auto& k : m->keypoints) EXPECT_TRUE(m->extent.contains(k, 1e-9));
    EXPECT_NO_THROW(m->validate());
  }
}

TEST(ObjectModel, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "objmap_model_rt";
  std::filesystem::create_directories(dir);
  const ObjectModel chair = make_chair_model(600);
  save_object_model(chair, dir / "chair.json");
  const ObjectModel back = load_object_model(dir / "chair.json");
  EXPECT_EQ(back.class_id, chair.class_id);
  ASSERT_EQ(back.cloud.size(), chair.cloud.size());
  ASSERT_EQ(back.keypoints.size(), chair.keypoints.size());
  for (std::size_t i = 0; i < chair.cloud.size(); ++i) EXPECT_EQ(back.cloud[i], chair.cloud[i]);
  EXPECT_DOUBLE_EQ(back.ground_offset, chair.ground_offset);
  std::filesystem::remove_all(dir);
}

TEST(Pnp, NoiseFreeChairIsExact) {
  const ObjectModel chair = make_chair_model();
  const CameraModel cam = scene_camera();
  const Pose truth = Pose::from_yaw(Vec3(0.3, -0.2, 0.0), 0.7);
  const auto res = pnp_ransac(project_keypoints(chair, cam, truth), chair, cam, PoseConfig{});
  const Pose world = compose(cam.extrinsic, res.pose);
  EXPECT_LT((world.t() - truth.t()).norm(), 1e-6);
  EXPECT_LT(geodesic_deg(world.q(), truth.q()), 1e-4);
  EXPECT_EQ(res.inliers.size(), 6u);
}

TEST(Pnp, ExactOnRandomUprightChairsAndTables) {
  const CameraModel cam = scene_camera();
  Rng rng(404);
  for (const ObjectModel& m : {make_chair_model(), make_table_model()}) {
    for (int i = 0; i < 40; ++i) {
      const Pose truth = Pose::from_yaw(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), m.ground_offset),
                                        rng.uniform(-M_PI, M_PI));
      PoseConfig cfg;
      cfg.seed = static_cast<std::uint64_t>(i);
      const auto res = pnp_ransac(project_keypoints(m, cam, truth), m, cam, cfg);
      const Pose world = compose(cam.extrinsic, res.pose);
      EXPECT_LT((world.t() - truth.t()).norm(), 1e-6) << m.name << " " << i;
      EXPECT_LT(geodesic_deg(world.q(), truth.q()), 1e-4) << m.name << " " << i;
    }
  }
}

TEST(Pnp, RejectsTwoGrossOutliers) {
  const ObjectModel chair = make_chair_model();
  const CameraModel cam = scene_camera();
  const Pose truth = Pose::from_yaw(Vec3(-0.4, 0.1, 0.0), -1.2);
  KeypointSet2D kps = project_keypoints(chair, cam, truth);
  kps.points[1].u += 50.0;
  kps.points[4].v -= 50.0;
  const auto res = pnp_ransac(kps, chair, cam, PoseConfig{});
  const Pose world = compose(cam.extrinsic, res.pose);
  EXPECT_LT((world.t() - truth.t()).norm(), 1e-4);
  EXPECT_EQ(std::count(res.inliers.begin(), res.inliers.end(), 1u), 0);
  EXPECT_EQ(std::count(res.inliers.begin(), res.inliers.end(), 4u), 0);
  EXPECT_EQ(res.inliers.size(), 4u);
  const auto err = reprojection_errors(kps, chair, cam, res.pose);
  for (std::size_t i : res.inliers) EXPECT_LE(err[i], PoseConfig{}.ransac_reproj_thresh);
}

TEST(Pnp, TooFewKeypoints) {
  const ObjectModel chair = make_chair_model();
  const CameraModel cam = scene_camera();
  KeypointSet2D kps = project_keypoints(chair, cam, Pose::from_yaw(Vec3::Zero(), 0.0));
  kps.valid = {true, true, true, false, false, false};
  try {
    pnp_ransac(kps, chair, cam, PoseConfig{});
    FAIL() << "expected TooFewKeypoints";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewKeypoints);
  }
}

TEST(Pnp, NoConsensusWhenEverythingDisagrees) {
  const ObjectModel chair = make_chair_model();
  const CameraModel cam = scene_camera();
  KeypointSet2D kps = project_keypoints(chair, cam, Pose::from_yaw(Vec3::Zero(), 0.0));
  Rng rng(3);
  for (auto& p : kps.points) p = {rng.uniform(0, 640), rng.uniform(0, 480)};
  PoseConfig cfg;
  cfg.ransac_reproj_thresh = 0.01;
  try {
    pnp_ransac(kps, chair, cam, cfg);
    FAIL() << "expected NoConsensus";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoConsensus);
  }
}

TEST(GroundProject, Examples) {
  const ObjectModel chair = make_chair_model();
  const Pose flat = Pose::from_yaw(Vec3(1, 2, chair.ground_offset), 0.4);
  const Pose same = ground_project(flat, chair);
  EXPECT_LT((same.t() - flat.t()).norm(), 1e-12);
  EXPECT_LT(geodesic_deg(same.q(), flat.q()), 1e-6);

  const Quat rolled = quat_rot_z_deg(35) * Quat(Eigen::AngleAxisd(10.0 * M_PI / 180.0, Vec3::UnitX()));
  const Pose tilted(Vec3(0.5, 0.5, 0.3), rolled);
  const Pose out = ground_project(tilted, chair);
  // Oracle: heading of the rotated x axis.
  const Vec3 x_axis = rolled.toRotationMatrix().col(0);
  const double yaw = std::atan2(x_axis.y(), x_axis.x());
  EXPECT_NEAR(out.yaw(), yaw, 1e-12);
  EXPECT_LT(geodesic_deg(out.q(), quat_rot_z_deg(yaw * 180.0 / M_PI)), 1e-6);
  EXPECT_DOUBLE_EQ(out.t().z(), chair.ground_offset);
  EXPECT_DOUBLE_EQ(ground_project(tilted, chair, false).t().z(), 0.3);
}

TEST(GroundProject, Idempotent) {
  const ObjectModel table = make_table_model();
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const Pose p = objmap::test::random_pose(rng, 2.0);
    const Pose once = ground_project(p, table);
    const Pose twice = ground_project(once, table);
    EXPECT_LT((once.t() - twice.t()).norm(), 1e-12);
    EXPECT_LT(geodesic_deg(once.q(), twice.q()), 1e-6);
    EXPECT_NEAR(std::abs(once.q().x()) + std::abs(once.q().y()), 0.0, 1e-12);
  }
}

TEST(Skeleton, Examples) {
  const ObjectModel chair = make_chair_model();
  const Skeleton3D id = skeleton_from_pose(chair, Pose::identity());
  ASSERT_EQ(id.keypoints.size(), chair.keypoints.size());
  for (std::size_t i = 0; i < chair.keypoints.size(); ++i) EXPECT_EQ(id.keypoints[i], chair.keypoints[i]);
  const Skeleton3D tx = skeleton_from_pose(chair, Pose::translation(1, 0, 0));
  for (std::size_t i = 0; i < chair.keypoints.size(); ++i) {
    EXPECT_LT((tx.keypoints[i] - chair.keypoints[i] - Vec3(1, 0, 0)).norm(), 1e-15);
  }
  const Pose p = compose(Pose::translation(1, 0, 0), Pose::rot_z_deg(90));
  const Skeleton3D r = skeleton_from_pose(chair, p);
  for (std::size_t i = 0; i < chair.keypoints.size(); ++i) EXPECT_EQ(r.keypoints[i], apply(p, chair.keypoints[i]));
  EXPECT_EQ(r.class_id, chair.class_id);
}

TEST(AssocDistance, Examples) {
  Skeleton3D k;
  k.keypoints = {Vec3(0, 0, 0)};
  EXPECT_DOUBLE_EQ(assoc_distance(k, make_segment({{1, 0, 0}, {2, 0, 0}})), 1.0);
  k.keypoints = {Vec3(0, 0, 0), Vec3(1, 1, 1)};
  EXPECT_DOUBLE_EQ(assoc_distance(k, make_segment({{1, 1, 1}, {0, 0, 0}, {5, 5, 5}})), 0.0);
  EXPECT_THROW(assoc_distance(k, PointCloudSegment{}), Error);
}

TEST(AssocDistance, EqualsBruteForce) {
  Rng rng(21);
  for (int i = 0; i < 300; ++i) {
    Skeleton3D k;
    const int l = 1 + static_cast<int>(rng.below(8));
    for (int j = 0; j < l; ++j) k.keypoints.push_back(random_vec(rng, -1, 1));
    std::vector<Vec3> pts;
    const int n = 1 + static_cast<int>(rng.below(300));
    for (int j = 0; j < n; ++j) pts.push_back(random_vec(rng, -1, 1));
    const auto seg = make_segment(pts);
    EXPECT_EQ(assoc_distance(k, seg), brute_assoc(k, seg));
  }
}

TEST(GreedyAssociate, Examples) {
  const ObjectModel chair = make_chair_model();
  const Pose p = Pose::from_yaw(Vec3(0, 0, 0), 0.3);
  std::vector<Skeleton3D> sk{skeleton_from_pose(chair, p)};
  std::vector<PointCloudSegment> seg{make_segment(placed_cloud(chair, p), chair.class_id)};
  auto a = greedy_associate(sk, seg, 0.3);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].segment, 0u);
  EXPECT_EQ(a[0].skeleton, 0u);
  seg = {make_segment(placed_cloud(chair, compose(Pose::translation(5, 0, 0), p)), chair.class_id)};
  EXPECT_TRUE(greedy_associate(sk, seg, 0.3).empty());
}

TEST(GreedyAssociate, HandSimulatedMatrix) {
  // Single-keypoint skeletons and single-point segments make the distance
  // matrix explicit. Segment sizes are set with duplicated points.
  std::vector<Skeleton3D> sk(3);
  sk[0].keypoints = {Vec3(0, 0, 0)};
  sk[1].keypoints = {Vec3(1, 0, 0)};
  sk[2].keypoints = {Vec3(3, 0, 0)};
  for (auto& s : sk) s.class_id = 1;
  auto seg_at = [](double x, int copies) {
    return make_segment(std::vector<Vec3>(static_cast<std::size_t>(copies), Vec3(x, 0, 0)));
  };
  // Sizes: seg0 = 5, seg1 = 9, seg2 = 7. Order of claims: seg1, seg2, seg0.
  std::vector<PointCloudSegment> seg{seg_at(0.9, 5), seg_at(0.2, 9), seg_at(1.1, 7)};
  // seg1 -> sk0 (0.2); seg2 -> sk1 (0.1); seg0 -> sk2 at 2.1 > tau, dropped.
  const auto a = greedy_associate(sk, seg, 0.5);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].segment, 1u);
  EXPECT_EQ(a[0].skeleton, 0u);
  EXPECT_EQ(a[1].segment, 2u);
  EXPECT_EQ(a[1].skeleton, 1u);
  EXPECT_NEAR(a[1].distance, 0.1, 1e-12);
}

TEST(GreedyAssociate, NeverSharesSkeletonsOrExceedsTau) {
  Rng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Skeleton3D> sk(1 + rng.below(5));
    for (auto& s : sk) {
      s.class_id = static_cast<std::uint16_t>(1 + rng.below(2));
      for (int j = 0; j < 3; ++j) s.keypoints.push_back(random_vec(rng, -1, 1));
    }
    std::vector<PointCloudSegment> segs(1 + rng.below(5));
    for (auto& s : segs) {
      std::vector<Vec3> pts;
      const int n = 1 + static_cast<int>(rng.below(40));
      for (int j = 0; j < n; ++j) pts.push_back(random_vec(rng, -1, 1));
      s = make_segment(pts, static_cast<std::uint16_t>(1 + rng.below(2)));
    }
    const double tau = rng.uniform(0.1, 1.0);
    const auto a = greedy_associate(sk, segs, tau);
    std::set<std::size_t> used_sk;
    std::set<std::size_t> used_seg;
    for (const auto& m : a) {
      EXPECT_TRUE(used_sk.insert(m.skeleton).second);
      EXPECT_TRUE(used_seg.insert(m.segment).second);
      EXPECT_LE(m.distance, tau);
      EXPECT_EQ(sk[m.skeleton].class_id, segs[m.segment].class_id);
    }
  }
}

TEST(Icp, FixedPoint) {
  const ObjectModel chair = make_chair_model();
  const Pose p = Pose::from_yaw(Vec3(0.5, -0.3, 0.0), 0.9);
  const auto seg = make_segment(placed_cloud(chair, p));
  const auto r = icp_refine(chair, seg, p, PoseConfig{});
  EXPECT_LT((r.pose.t() - p.t()).norm(), 1e-9);
  EXPECT_LT(r.rmse, 1e-9);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
}

TEST(Icp, RecoversFiveCentimeterOffset) {
  const ObjectModel chair = make_chair_model();
  const Pose p = Pose::from_yaw(Vec3(0.5, -0.3, 0.0), 0.9);
  const auto seg = make_segment(placed_cloud(chair, p));
  const Pose init = compose(Pose::translation(0.03, -0.04, 0.0), p);
  const auto r = icp_refine(chair, seg, init, PoseConfig{});
  EXPECT_LT((r.pose.t() - p.t()).norm(), 1e-3);
  EXPECT_LT(geodesic_deg(r.pose.q(), p.q()), 0.1);
}

TEST(Icp, NoisySegmentFromTenCentimetersOff) {
  const ObjectModel chair = make_chair_model();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const Pose p = Pose::from_yaw(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0), rng.uniform(-3, 3));
    std::vector<Vec3> pts = placed_cloud(chair, p);
    for (auto& x : pts) x += Vec3(rng.normal(0.01), rng.normal(0.01), rng.normal(0.01));
    const Vec3 dir = Vec3(rng.normal(), rng.normal(), 0).normalized();
    const Pose init = compose(Pose(0.10 * dir, Quat::Identity()), p);
    const auto r = icp_refine(chair, make_segment(pts), init, PoseConfig{});
    EXPECT_LT(100.0 * (r.pose.t() - p.t()).norm(), 2.0) << seed;
  }
}

TEST(Icp, FinalRmseNotAboveInitial) {
  const ObjectModel table = make_table_model();
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    const Pose p = Pose::from_yaw(Vec3(0, 0, 0), rng.uniform(-3, 3));
    std::vector<Vec3> pts = placed_cloud(table, p);
    for (auto& x : pts) x += Vec3(rng.normal(0.005), rng.normal(0.005), rng.normal(0.005));
    const auto seg = make_segment(pts, table.class_id);
    const Pose init = compose(Pose(random_vec(rng, -0.05, 0.05), quat_rot_z_deg(rng.uniform(-3, 3))), p);
    PoseConfig zero_iters;
    zero_iters.icp_max_iters = 0;
    const auto before = icp_refine(table, seg, init, zero_iters);
    const auto after = icp_refine(table, seg, init, PoseConfig{});
    EXPECT_LE(after.rmse, before.rmse + 1e-12);
  }
}

TEST(Icp, DegenerateSegment) {
  const ObjectModel chair = make_chair_model();
  const auto seg = make_segment(std::vector<Vec3>(9, Vec3::Zero()));
  try {
    icp_refine(chair, seg, Pose::identity(), PoseConfig{});
    FAIL() << "expected DegenerateSegment";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateSegment);
  }
}

TEST(BuildObservation, EllipsoidExamples) {
  const auto same = make_segment(std::vector<Vec3>(20, Vec3(1, 2, 3)));
  const auto o = build_observation(Pose::identity(), same, 0.1, 3, 99, false);
  for (float a : o.ellipsoid) EXPECT_EQ(a, 0.0f);
  EXPECT_FALSE(o.segment.has_value());
  EXPECT_EQ(o.sensor_id, 3);
  EXPECT_EQ(o.timestamp_us, 99u);

  std::vector<Vec3> line;
  const int n = 10001;
  for (int i = 0; i < n; ++i) line.push_back(Vec3(static_cast<double>(i) / (n - 1), 0, 0));
  const auto l = build_observation(Pose::identity(), make_segment(line), 0.0, 0, 0, true);
  EXPECT_NEAR(l.ellipsoid[0], 1.0 / std::sqrt(12.0), 1e-4);
  EXPECT_NEAR(l.ellipsoid[1], 0.0, 1e-6);
  EXPECT_NEAR(l.ellipsoid[2], 0.0, 1e-6);
  ASSERT_TRUE(l.segment.has_value());
  EXPECT_EQ(l.segment->size(), line.size());
}

TEST(BuildObservation, AxesDescendingAndMatchEigenOracle) {
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    std::vector<Vec3> pts;
    const Vec3 scale = random_vec(rng, 0.01, 1.0);
    for (int j = 0; j < 60; ++j) pts.push_back(Vec3(rng.normal(), rng.normal(), rng.normal()).cwiseProduct(scale));
    const auto o = build_observation(Pose::identity(), make_segment(pts), 0.0, 0, 0, false);
    EXPECT_GE(o.ellipsoid[0], o.ellipsoid[1]);
    EXPECT_GE(o.ellipsoid[1], o.ellipsoid[2]);
    EXPECT_GE(o.ellipsoid[2], 0.0f);
    // Oracle: sum of squared axes equals the trace of the population covariance.
    Vec3 mean = Vec3::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    double trace = 0.0;
    for (const auto& p : pts) trace += (p - mean).squaredNorm();
    trace /= static_cast<double>(pts.size());
    const double sum_sq = static_cast<double>(o.ellipsoid[0]) * o.ellipsoid[0] +
                          static_cast<double>(o.ellipsoid[1]) * o.ellipsoid[1] +
                          static_cast<double>(o.ellipsoid[2]) * o.ellipsoid[2];
    EXPECT_NEAR(sum_sq, trace, 1e-6 * (1.0 + trace));
  }
}
