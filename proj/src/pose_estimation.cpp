#include "objmap/pose_estimation.hpp"

#include "objmap/error.hpp"
#include "objmap/kdtree.hpp"
#include "objmap/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace objmap {

std::size_t KeypointSet2D::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

void PoseConfig::validate() const {
  if (!(tau_dist > 0.0) || ransac_iters <= 0 || !(ransac_reproj_thresh > 0.0) || icp_max_iters <= 0 ||
      !(icp_corr_dist > 0.0) || !(icp_eps > 0.0)) {
    throw Error(ErrorCode::ConfigError, "pose configuration values must be positive");
  }
}

namespace {

using Vec2 = Eigen::Vector2d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct Correspondence {
  Vec3 model;
  Vec2 pixel;
};

struct Hypothesis {
  Quat q = Quat::Identity();
  Vec3 t = Vec3::Zero();
  double cost = std::numeric_limits<double>::infinity();
};

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Quat exp_so3(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-12) return Quat(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z()).normalized();
  return Quat(Eigen::AngleAxisd(angle, w / angle));
}

// Sum of squared reprojection residuals; infinite if any point is not in front.
double reprojection_cost(std::span<const Correspondence> corr, const CameraModel& cam, const Quat& q,
                         const Vec3& t) {
  double cost = 0.0;
  for (const auto& c : corr) {
    const Vec3 p = q * c.model + t;
    if (p.z() <= 1e-6) return std::numeric_limits<double>::infinity();
    const double du = cam.fx * p.x() / p.z() + cam.cx - c.pixel.x();
    const double dv = cam.fy * p.y() / p.z() + cam.cy - c.pixel.y();
    cost += du * du + dv * dv;
  }
  return cost;
}

// Levenberg-Marquardt on the reprojection error with a left-multiplied
// rotation increment.
Hypothesis refine_lm(std::span<const Correspondence> corr, const CameraModel& cam, Hypothesis h, int max_iters) {
  h.cost = reprojection_cost(corr, cam, h.q, h.t);
  if (!std::isfinite(h.cost)) return h;
  double lambda = 1e-3;
  for (int it = 0; it < max_iters && h.cost > 1e-26; ++it) {
    Mat6 H = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (const auto& c : corr) {
      const Vec3 rx = h.q * c.model;
      const Vec3 p = rx + h.t;
      const double iz = 1.0 / p.z();
      Eigen::Matrix<double, 2, 3> jp;
      jp << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
      Eigen::Matrix<double, 2, 6> j;
      j.leftCols<3>() = -jp * skew(rx);
      j.rightCols<3>() = jp;
      const Vec2 r(cam.fx * p.x() * iz + cam.cx - c.pixel.x(), cam.fy * p.y() * iz + cam.cy - c.pixel.y());
      H.noalias() += j.transpose() * j;
      g.noalias() += j.transpose() * r;
    }
    bool improved = false;
    while (lambda < 1e12) {
      Mat6 a = H;
      for (int d = 0; d < 6; ++d) a(d, d) += lambda * (H(d, d) + 1e-9);
      const Vec6 step = a.ldlt().solve(-g);
      const Quat q_new = (exp_so3(step.head<3>()) * h.q).normalized();
      const Vec3 t_new = h.t + step.tail<3>();
      const double c_new = reprojection_cost(corr, cam, q_new, t_new);
      if (c_new < h.cost) {
        const double gain = h.cost - c_new;
        h = {q_new, t_new, c_new};
        lambda = std::max(lambda * 0.1, 1e-12);
        improved = true;
        if (step.norm() < 1e-13 || gain < 1e-30) return h;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return h;
}

// Starts from an upright object (the world z axis) at the depth implied by
// the ratio of 3D to 2D keypoint spread, sweeping eight headings.
Hypothesis solve_from_sweep(std::span<const Correspondence> corr, const CameraModel& cam, int coarse_iters,
                            int fine_iters) {
  Vec3 c3 = Vec3::Zero();
  Vec2 c2 = Vec2::Zero();
  for (const auto& c : corr) {
    c3 += c.model;
    c2 += c.pixel;
  }
  c3 /= static_cast<double>(corr.size());
  c2 /= static_cast<double>(corr.size());
  double s3 = 0.0;
  double s2 = 0.0;
  for (const auto& c : corr) {
    s3 += (c.model - c3).squaredNorm();
    s2 += (c.pixel - c2).squaredNorm();
  }
  s3 = std::sqrt(s3);
  s2 = std::sqrt(s2);
  const double f = 0.5 * (cam.fx + cam.fy);
  const double depth = s2 > 1e-9 ? std::clamp(f * s3 / s2, 0.2, 100.0) : 3.0;
  const Quat cam_from_world = cam.extrinsic.q().conjugate();
  const Vec3 ray((c2.x() - cam.cx) / cam.fx, (c2.y() - cam.cy) / cam.fy, 1.0);

  Hypothesis best;
  for (int k = 0; k < 8; ++k) {
    Hypothesis h;
    h.q = cam_from_world * quat_rot_z_deg(45.0 * k);
    h.t = ray * depth - h.q * c3;
    h = refine_lm(corr, cam, h, coarse_iters);
    if (h.cost < best.cost) best = h;
  }
  if (std::isfinite(best.cost)) best = refine_lm(corr, cam, best, fine_iters);
  return best;
}

bool well_spread(std::span<const Correspondence> corr) {
  Vec2 mean = Vec2::Zero();
  for (const auto& c : corr) mean += c.pixel;
  mean /= static_cast<double>(corr.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& c : corr) cov += (c.pixel - mean) * (c.pixel - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  return es.eigenvalues()(0) > 1.0;  // not collinear within ~1 px
}

std::vector<std::array<std::size_t, 4>> all_quadruples(std::size_t n) {
  std::vector<std::array<std::size_t, 4>> out;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (std::size_t c = b + 1; c < n; ++c)
        for (std::size_t d = c + 1; d < n; ++d) out.push_back({a, b, c, d});
  return out;
}

double binomial4(std::size_t n) {
  if (n < 4) return 0.0;
  const double m = static_cast<double>(n);
  return m * (m - 1) * (m - 2) * (m - 3) / 24.0;
}

}  // namespace

std::vector<double> reprojection_errors(const KeypointSet2D& kps, const ObjectModel& model, const CameraModel& cam,
                                        const Pose& cam_from_obj) {
  std::vector<double> errs(model.keypoints.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < model.keypoints.size() && i < kps.points.size(); ++i) {
    const Vec3 p = apply(cam_from_obj, model.keypoints[i]);
    if (p.z() <= 1e-6) continue;
    const Pixel px = project(cam, p);
    errs[i] = std::hypot(px.u - kps.points[i].u, px.v - kps.points[i].v);
  }
  return errs;
}

PnpResult pnp_ransac(const KeypointSet2D& kps, const ObjectModel& model, const CameraModel& cam,
                     const PoseConfig& cfg) {
  const std::size_t n_model = model.keypoints.size();
  if (kps.points.size() != n_model || kps.valid.size() != n_model) {
    throw Error(ErrorCode::InvalidArgument, "keypoint set does not match the model keypoint count");
  }
  std::vector<std::size_t> valid_idx;
  for (std::size_t i = 0; i < n_model; ++i) {
    if (kps.valid[i]) valid_idx.push_back(i);
  }
  if (valid_idx.size() < 4) throw Error(ErrorCode::TooFewKeypoints, std::to_string(valid_idx.size()) + " valid");

  auto corr_of = [&](std::span<const std::size_t> idx) {
    std::vector<Correspondence> c;
    c.reserve(idx.size());
    for (std::size_t i : idx) c.push_back({model.keypoints[i], {kps.points[i].u, kps.points[i].v}});
    return c;
  };
  // Truncated quadratic (MSAC) score: inliers contribute their squared error,
  // everything else the squared threshold.
  const double thr2 = cfg.ransac_reproj_thresh * cfg.ransac_reproj_thresh;
  auto consensus = [&](const Hypothesis& h, double& score) {
    std::vector<std::size_t> inl;
    score = 0.0;
    for (std::size_t i : valid_idx) {
      const Vec3 p = h.q * model.keypoints[i] + h.t;
      double e2 = std::numeric_limits<double>::infinity();
      if (p.z() > 1e-6) {
        const double du = cam.fx * p.x() / p.z() + cam.cx - kps.points[i].u;
        const double dv = cam.fy * p.y() / p.z() + cam.cy - kps.points[i].v;
        e2 = du * du + dv * dv;
      }
      if (e2 <= thr2) {
        inl.push_back(i);
        score += e2;
      } else {
        score += thr2;
      }
    }
    return inl;
  };

  const std::size_t n = valid_idx.size();
  const bool exhaustive = binomial4(n) <= static_cast<double>(cfg.ransac_iters);
  const auto quads = exhaustive ? all_quadruples(n) : std::vector<std::array<std::size_t, 4>>{};
  Rng rng(derive_seed(cfg.seed, {0x9A95ACull}));

  Hypothesis best_h;
  std::vector<std::size_t> best_inliers;
  double best_score = std::numeric_limits<double>::infinity();
  const int budget = exhaustive ? static_cast<int>(quads.size()) : cfg.ransac_iters;
  double needed = static_cast<double>(budget);
  for (int it = 0; it < budget && it < needed; ++it) {
    std::array<std::size_t, 4> pick{};
    if (exhaustive) {
      pick = quads[static_cast<std::size_t>(it)];
    } else {
      std::vector<std::size_t> pool(n);
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      for (std::size_t s = 0; s < 4; ++s) {
        const std::size_t j = s + rng.below(n - s);
        std::swap(pool[s], pool[j]);
        pick[s] = pool[s];
      }
    }
    std::array<std::size_t, 4> idx{};
    for (std::size_t s = 0; s < 4; ++s) idx[s] = valid_idx[pick[s]];
    const auto corr = corr_of(idx);
    if (!well_spread(corr)) continue;
    const Hypothesis h = solve_from_sweep(corr, cam, 8, 40);
    if (!std::isfinite(h.cost)) continue;
    double score = 0.0;
    auto inl = consensus(h, score);
    if (score < best_score) {
      best_h = h;
      best_inliers = std::move(inl);
      best_score = score;
      const double w = static_cast<double>(best_inliers.size()) / static_cast<double>(n);
      if (w >= 1.0) break;
      // Adaptive stopping only applies to random sampling; enumeration visits
      // every quadruple.
      const double miss = 1.0 - std::pow(w, 4.0);
      if (!exhaustive && miss > 0.0 && miss < 1.0) {
        needed = std::min(needed, std::log(0.01) / std::log(miss));
      }
    }
  }
  if (best_inliers.size() < 4) {
    throw Error(ErrorCode::NoConsensus, std::to_string(best_inliers.size()) + " inliers");
  }

  // Joint refit on the consensus set; the set may change only if the score
  // improves.
  Hypothesis h = best_h;
  std::vector<std::size_t> inliers = best_inliers;
  double score = best_score;
  for (int round = 0; round < 3; ++round) {
    const Hypothesis refined = refine_lm(corr_of(inliers), cam, h, 100);
    double next_score = 0.0;
    auto next = consensus(refined, next_score);
    if (next.size() < 4 || next_score > score) break;
    h = refined;
    score = next_score;
    if (next == inliers) break;
    inliers = std::move(next);
  }
  const auto corr = corr_of(inliers);
  PnpResult out;
  out.pose = Pose(h.t, h.q);
  out.inliers = inliers;
  out.rms_reproj = std::sqrt(reprojection_cost(corr, cam, h.q, h.t) / static_cast<double>(inliers.size()));
  return out;
}

Pose ground_project(const Pose& world_pose, const ObjectModel& model, bool snap_height) {
  Vec3 t = world_pose.t();
  if (snap_height) t.z() = model.ground_offset;
  return Pose::from_yaw(t, world_pose.yaw());
}

Skeleton3D skeleton_from_pose(const ObjectModel& model, const Pose& pose) {
  Skeleton3D s;
  s.class_id = model.class_id;
  s.pose = pose;
  s.keypoints.reserve(model.keypoints.size());
  for (const auto& k : model.keypoints) s.keypoints.push_back(apply(pose, k));
  return s;
}

namespace {

double assoc_distance_with(const Skeleton3D& skeleton, const KdTree& tree) {
  if (skeleton.keypoints.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& k : skeleton.keypoints) sum += std::sqrt(tree.nearest(k).sq_dist);
  return sum / static_cast<double>(skeleton.keypoints.size());
}

}  // namespace

double assoc_distance(const Skeleton3D& skeleton, const PointCloudSegment& segment) {
  if (segment.empty()) throw Error(ErrorCode::EmptyInput, "assoc_distance on an empty segment");
  const std::vector<Vec3> pts = positions(segment);
  const KdTree tree(pts);
  return assoc_distance_with(skeleton, tree);
}

std::vector<Association> greedy_associate(std::span<const Skeleton3D> skeletons,
                                          std::span<const PointCloudSegment> segments, double tau_dist) {
  std::vector<std::size_t> seg_order(segments.size());
  std::iota(seg_order.begin(), seg_order.end(), std::size_t{0});
  std::stable_sort(seg_order.begin(), seg_order.end(),
                   [&](std::size_t a, std::size_t b) { return segments[a].size() > segments[b].size(); });

  std::vector<bool> used(skeletons.size(), false);
  std::vector<Association> out;
  for (std::size_t si : seg_order) {
    const PointCloudSegment& seg = segments[si];
    if (seg.empty()) continue;
    const std::vector<Vec3> pts = positions(seg);
    const KdTree tree(pts);
    std::size_t best = skeletons.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t ki = 0; ki < skeletons.size(); ++ki) {
      if (used[ki] || skeletons[ki].class_id != seg.class_id) continue;
      const double d = assoc_distance_with(skeletons[ki], tree);
      if (d < best_d) {
        best_d = d;
        best = ki;
      }
    }
    if (best == skeletons.size() || best_d > tau_dist) continue;
    used[best] = true;
    out.push_back({si, best, best_d});
  }
  return out;
}

namespace {

struct Matches {
  std::vector<std::size_t> model_idx;
  std::vector<std::size_t> seg_idx;
  double rmse = std::numeric_limits<double>::infinity();
};

Matches match_segment(const KdTree& model_tree, std::span<const Vec3> seg, const Pose& pose, double gate) {
  Matches m;
  const Pose obj_from_world = inverse(pose);
  const double gate2 = gate * gate;
  double sq = 0.0;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const auto nn = model_tree.nearest(apply(obj_from_world, seg[i]));
    if (nn.sq_dist > gate2) continue;
    m.model_idx.push_back(nn.index);
    m.seg_idx.push_back(i);
    sq += nn.sq_dist;
  }
  if (!m.seg_idx.empty()) m.rmse = std::sqrt(sq / static_cast<double>(m.seg_idx.size()));
  return m;
}

// Least-squares rigid transform mapping model points onto segment points.
Pose kabsch(const ObjectModel& model, std::span<const Vec3> seg, const Matches& m) {
  Vec3 cm = Vec3::Zero();
  Vec3 cs = Vec3::Zero();
  for (std::size_t k = 0; k < m.seg_idx.size(); ++k) {
    cm += model.cloud[m.model_idx[k]];
    cs += seg[m.seg_idx[k]];
  }
  const double n = static_cast<double>(m.seg_idx.size());
  cm /= n;
  cs /= n;
  Mat3 h = Mat3::Zero();
  for (std::size_t k = 0; k < m.seg_idx.size(); ++k) {
    h.noalias() += (model.cloud[m.model_idx[k]] - cm) * (seg[m.seg_idx[k]] - cs).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return {cs - r * cm, Quat(r)};
}

}  // namespace

IcpResult icp_refine(const ObjectModel& model, const PointCloudSegment& segment, const Pose& init,
                     const PoseConfig& cfg) {
  if (segment.size() < 10) throw Error(ErrorCode::DegenerateSegment, std::to_string(segment.size()) + " points");
  const std::vector<Vec3> seg = positions(segment);
  const KdTree model_tree(model.cloud);

  IcpResult res;
  res.pose = init;
  Matches cur = match_segment(model_tree, seg, init, cfg.icp_corr_dist);
  res.rmse = cur.rmse;
  res.inliers = cur.seg_idx.size();
  for (int it = 1; it <= cfg.icp_max_iters; ++it) {
    if (cur.seg_idx.size() < 3) break;
    const Pose next = kabsch(model, seg, cur);
    Matches next_m = match_segment(model_tree, seg, next, cfg.icp_corr_dist);
    const double delta =
        (next.t() - res.pose.t()).norm() + geodesic_deg(next.q(), res.pose.q()) * std::numbers::pi / 180.0;
    if (next_m.seg_idx.size() < 3 || next_m.rmse > cur.rmse) {
      // At a fixed point round-off alone can nudge the error upwards.
      if (delta < cfg.icp_eps) {
        res.converged = true;
        res.iterations = it;
      }
      break;
    }
    res.pose = next;
    res.rmse = next_m.rmse;
    res.inliers = next_m.seg_idx.size();
    res.iterations = it;
    cur = std::move(next_m);
    if (delta < cfg.icp_eps) {
      res.converged = true;
      break;
    }
  }
  return res;
}

std::array<double, 3> ellipsoid_axes(std::span<const Vec3> points) {
  if (points.empty()) return {0.0, 0.0, 0.0};
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) cov.noalias() += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(points.size());
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov, Eigen::EigenvaluesOnly);
  const Vec3 ev = es.eigenvalues();  // ascending
  return {std::sqrt(std::max(ev(2), 0.0)), std::sqrt(std::max(ev(1), 0.0)), std::sqrt(std::max(ev(0), 0.0))};
}

ObjectObservation build_observation(const Pose& pose, const PointCloudSegment& segment, double assoc_dist,
                                    std::uint16_t sensor_id, std::uint64_t timestamp_us, bool include_segment) {
  ObjectObservation obs;
  obs.timestamp_us = timestamp_us;
  obs.sensor_id = sensor_id;
  obs.class_id = segment.class_id;
  obs.pose = pose;
  obs.assoc_dist = static_cast<float>(assoc_dist);
  const std::vector<Vec3> pts = positions(segment);
  const auto axes = ellipsoid_axes(pts);
  for (std::size_t i = 0; i < 3; ++i) obs.ellipsoid[i] = static_cast<float>(axes[i]);
  // float rounding can break the ordering of nearly equal axes
  std::sort(obs.ellipsoid.begin(), obs.ellipsoid.end(), std::greater<>());
  if (include_segment) obs.segment = segment;
  return obs;
}

}  // namespace objmap
